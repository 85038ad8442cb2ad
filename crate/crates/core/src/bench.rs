//! Built-in benchmark layers, JSON configuration, and the suite runner.
//!
//! A suite run executes every design functionally on seeded random data at
//! reduced channel counts, checks the result against the zero-padding
//! oracle and the closed-form cycle count, then costs each design
//! analytically at the layer's full size.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::costmodel::{compare, evaluate, ComparisonReport, CostParams, CriticalPath, DesignCost};
use crate::dataflow::{build_schedule, execute, expected_cycles, trace_activity};
use crate::error::{Error, Result};
use crate::mapping::{build_plan, Design, PlanGeometry, TileLimit};
use crate::rng::Lcg;
use crate::tensor::{deconv_oracle_zero_padding, DeconvLayerSpec, Tensor3};

pub const DEFAULT_SEED: u64 = 42;
pub const DEFAULT_CHANNEL_SCALE: f64 = 1.0 / 64.0;
pub const DEFAULT_DESIGNS: [Design; 3] = [
    Design::ZeroPadding,
    Design::PaddingFree,
    Design::RedPixelWise,
];

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct BenchmarkEntry {
    pub name: String,
    pub network: String,
    pub dataset: String,
    pub spec: DeconvLayerSpec,
    pub notes: String,
}

impl BenchmarkEntry {
    pub fn output_size(&self) -> (usize, usize, usize) {
        (
            self.spec.output_h(),
            self.spec.output_w(),
            self.spec.filters,
        )
    }
}

fn entry(
    name: &str,
    network: &str,
    dataset: &str,
    spec: DeconvLayerSpec,
    notes: &str,
) -> BenchmarkEntry {
    BenchmarkEntry {
        name: name.into(),
        network: network.into(),
        dataset: dataset.into(),
        spec,
        notes: notes.into(),
    }
}

/// The six GAN and FCN deconvolution layers used for evaluation.
///
/// GAN_Deconv1/2 need a total crop of 3 per axis; it is split 1 before and
/// 2 after. The FCN layers are uncropped.
pub fn builtin_benchmarks() -> Vec<BenchmarkEntry> {
    let split = "asymmetric crop: 1 top/left, 2 bottom/right";
    vec![
        entry(
            "GAN_Deconv1",
            "DCGAN",
            "LSUN",
            DeconvLayerSpec::symmetric((8, 8, 512), (5, 5, 256), 2, 0).with_crops(1, 2, 1, 2),
            split,
        ),
        entry(
            "GAN_Deconv2",
            "Improved GAN",
            "Cifar-10",
            DeconvLayerSpec::symmetric((4, 4, 512), (5, 5, 256), 2, 0).with_crops(1, 2, 1, 2),
            split,
        ),
        entry(
            "GAN_Deconv3",
            "SNGAN",
            "Cifar-10",
            DeconvLayerSpec::symmetric((4, 4, 512), (4, 4, 256), 2, 1),
            "",
        ),
        entry(
            "GAN_Deconv4",
            "SNGAN",
            "STL-10",
            DeconvLayerSpec::symmetric((6, 6, 512), (4, 4, 256), 2, 1),
            "",
        ),
        entry(
            "FCN_Deconv1",
            "voc-fcn8s_2x",
            "PASCAL VOC",
            DeconvLayerSpec::symmetric((16, 16, 21), (4, 4, 21), 2, 0),
            "",
        ),
        entry(
            "FCN_Deconv2",
            "voc-fcn8s_8x",
            "PASCAL VOC",
            DeconvLayerSpec::symmetric((70, 70, 21), (16, 16, 21), 8, 0),
            "",
        ),
    ]
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunOptions {
    pub seed: u64,
    /// Fraction of `C` and `M` kept for functional runs, in `(0, 1]`.
    pub channel_scale: f64,
    pub designs: Vec<Design>,
    pub critical_path: CriticalPath,
    pub tiling: Option<TileLimit>,
    /// Whether the config supplied its own full set of cost coefficients.
    pub calibrated: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            seed: DEFAULT_SEED,
            channel_scale: DEFAULT_CHANNEL_SCALE,
            designs: DEFAULT_DESIGNS.to_vec(),
            critical_path: CriticalPath::Max,
            tiling: None,
            calibrated: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Config {
    pub entries: Vec<BenchmarkEntry>,
    pub params: CostParams,
    pub options: RunOptions,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            entries: builtin_benchmarks(),
            params: CostParams::default(),
            options: RunOptions::default(),
        }
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    layers: Option<Vec<RawLayer>>,
    cost_params: Option<serde_json::Map<String, Value>>,
    seed: Option<u64>,
    channel_scale: Option<f64>,
    designs: Option<Vec<String>>,
    critical_path_mode: Option<String>,
    tiling: Option<TileLimit>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawLayer {
    name: String,
    input: [usize; 3],
    kernel: [usize; 4],
    stride: usize,
    #[serde(default)]
    crop: [usize; 4],
}

impl RawLayer {
    fn into_entry(self, index: usize) -> Result<BenchmarkEntry> {
        let at = |msg: String| Error::Config(format!("layers[{index}] ({}): {msg}", self.name));
        let [h, w, c] = self.input;
        let [kh, kw, kc, m] = self.kernel;
        if kc != c {
            return Err(at(format!(
                "kernel channels ({kc}) must equal input channels ({c})"
            )));
        }
        let [t, b, l, r] = self.crop;
        let spec = DeconvLayerSpec::symmetric((h, w, c), (kh, kw, m), self.stride, 0)
            .with_crops(t, b, l, r);
        spec.validate().map_err(|e| at(e.to_string()))?;
        // A restated built-in layer keeps its labels.
        if let Some(b) = builtin_benchmarks()
            .into_iter()
            .find(|b| b.name == self.name && b.spec == spec)
        {
            return Ok(b);
        }
        Ok(BenchmarkEntry {
            name: self.name,
            network: "custom".into(),
            dataset: "-".into(),
            spec,
            notes: String::new(),
        })
    }
}

/// Overlays `given` on the default coefficients. Returns the merged params
/// and whether they count as calibrated: every coefficient given, and not
/// simply the built-in defaults repeated.
fn merge_params(given: Option<serde_json::Map<String, Value>>) -> Result<(CostParams, bool)> {
    let Some(given) = given else {
        return Ok((CostParams::default(), false));
    };
    let mut base = serde_json::to_value(CostParams::default()).expect("params serialize");
    let fields = base.as_object_mut().expect("params are an object");
    for (k, v) in &given {
        if !fields.contains_key(k) {
            return Err(Error::Config(format!("cost_params: unknown key `{k}`")));
        }
        fields.insert(k.clone(), v.clone());
    }
    let params: CostParams =
        serde_json::from_value(base).map_err(|e| Error::Config(format!("cost_params: {e}")))?;
    params.validate()?;
    let complete = CostParams::FIELDS.iter().all(|f| given.contains_key(*f));
    let calibrated = complete && params != CostParams::default();
    Ok((params, calibrated))
}

pub fn parse_config(text: &str) -> Result<Config> {
    let raw: RawConfig = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;

    let entries = match raw.layers {
        Some(layers) => layers
            .into_iter()
            .enumerate()
            .map(|(i, l)| l.into_entry(i))
            .collect::<Result<Vec<_>>>()?,
        None => builtin_benchmarks(),
    };
    if entries.is_empty() {
        return Err(Error::Config("layers must not be empty".into()));
    }
    let (params, calibrated) = merge_params(raw.cost_params)?;

    let mut options = RunOptions {
        calibrated,
        ..RunOptions::default()
    };
    if let Some(seed) = raw.seed {
        options.seed = seed;
    }
    if let Some(scale) = raw.channel_scale {
        check_channel_scale(scale)?;
        options.channel_scale = scale;
    }
    if let Some(designs) = raw.designs {
        options.designs = parse_designs(designs.iter().map(String::as_str))?;
    }
    if let Some(mode) = raw.critical_path_mode {
        options.critical_path = mode.parse()?;
    }
    if let Some(t) = raw.tiling {
        if t.max_rows == 0 || t.max_cols == 0 {
            return Err(Error::Config(
                "tiling.max_rows and tiling.max_cols must be ≥ 1".into(),
            ));
        }
        options.tiling = Some(t);
    }
    Ok(Config {
        entries,
        params,
        options,
    })
}

pub fn load_config(path: impl AsRef<Path>) -> Result<Config> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    parse_config(&text).map_err(|e| match e {
        Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
        other => other,
    })
}

pub fn check_channel_scale(scale: f64) -> Result<()> {
    if scale.is_finite() && scale > 0.0 && scale <= 1.0 {
        Ok(())
    } else {
        Err(Error::Config(format!(
            "channel_scale must be in (0, 1], got {scale}"
        )))
    }
}

/// Parses design names, rejecting empty lists and duplicates.
pub fn parse_designs<'a>(names: impl IntoIterator<Item = &'a str>) -> Result<Vec<Design>> {
    let mut designs = Vec::new();
    for name in names {
        let d: Design = name.trim().parse()?;
        if designs.contains(&d) {
            return Err(Error::Config(format!("designs: `{d}` listed twice")));
        }
        designs.push(d);
    }
    if designs.is_empty() {
        return Err(Error::Config("designs must not be empty".into()));
    }
    Ok(designs)
}

/// `C` and `M` scaled by `scale`, rounded up, at least 1.
pub fn scale_channels(spec: &DeconvLayerSpec, scale: f64) -> DeconvLayerSpec {
    let f = |n: usize| ((n as f64 * scale).ceil() as usize).clamp(1, n);
    spec.with_channels(f(spec.channels), f(spec.filters))
}

/// Executes every design on one layer and compares the result with the
/// oracle. Returns the number of values checked per design.
pub fn check_equivalence(
    name: &str,
    spec: &DeconvLayerSpec,
    designs: &[Design],
    seed: u64,
    tiling: Option<TileLimit>,
) -> Result<usize> {
    let mut rng = Lcg::new(seed);
    let input: Tensor3<i64> = rng.tensor(spec.input_h, spec.input_w, spec.channels);
    let kernel = rng.kernel(spec.kernel_shape());
    let want = deconv_oracle_zero_padding(&input, &kernel, spec)?;
    for &design in designs {
        let plan = build_plan(design, &kernel).with_tiling(tiling);
        let schedule = build_schedule(design, spec)?;
        let expected = expected_cycles(design, spec);
        if schedule.cycle_count() != expected {
            return Err(Error::CycleCount {
                layer: name.into(),
                design,
                cycles: schedule.cycle_count(),
                expected,
            });
        }
        let (got, _) = execute(&plan, &schedule, &input)?;
        let mut bad = got.mismatches(&want);
        if let Some((y, x, m)) = bad.next() {
            return Err(Error::Equivalence {
                layer: name.into(),
                design,
                mismatches: 1 + bad.count(),
                total: want.data().len(),
                y,
                x,
                m,
                got: got.get(y, x, m).to_string(),
                expected: want.get(y, x, m).to_string(),
            });
        }
    }
    Ok(want.data().len())
}

/// Functional check at scaled channels, then analytical costs at full size.
pub fn run_entry(
    entry: &BenchmarkEntry,
    params: &CostParams,
    opts: &RunOptions,
) -> Result<ComparisonReport> {
    let spec = &entry.spec;
    spec.check_geometry()?;
    let scaled = scale_channels(spec, opts.channel_scale);
    check_equivalence(&entry.name, &scaled, &opts.designs, opts.seed, opts.tiling)?;

    let costs = opts
        .designs
        .iter()
        .map(|&design| {
            let schedule = build_schedule(design, spec)?;
            let geometry = PlanGeometry::new(design, spec.kernel_shape(), opts.tiling);
            let trace = trace_activity(&schedule, &geometry)?;
            Ok(DesignCost {
                design,
                spec: *spec,
                cycles: trace.cycle_count,
                breakdown: evaluate(&trace, &geometry, params, opts.critical_path)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    compare(
        &entry.name,
        &costs,
        params,
        opts.calibrated,
        opts.critical_path,
    )
}

/// Runs entries in parallel; results keep the input order.
pub fn run_suite(
    entries: &[BenchmarkEntry],
    params: &CostParams,
    opts: &RunOptions,
) -> Vec<Result<ComparisonReport>> {
    entries
        .par_iter()
        .map(|e| run_entry(e, params, opts))
        .collect()
}
