//! Latency, energy and area from recorded activity.
//!
//! Latency is summed over cycles; inside a cycle the concurrently active
//! crossbars overlap, so the slowest one sets the cycle time
//! ([`CriticalPath::Max`]). [`CriticalPath::Sum`] serializes them instead and
//! exists for sensitivity checks.
//!
//! Per activation of a crossbar with `rows x cols` cells (widest tile when
//! tiled):
//!
//! ```text
//! L_wd = t_wd * cols     L_bd = t_bd * rows
//! L_dec = t_dec   L_mux = t_mux   L_rc = t_rc   L_sa = t_sa (x2 with row bands)
//! ```
//!
//! Energies, summed over activations, with `f(q) = base * q + quadratic * q²`
//! applied per driven wordline (wd) and per bitline bank (bd):
//!
//! ```text
//! E_c   = e_cell * driven_rows * cols
//! E_wd  = driven_rows * Σ_col_tiles f_wd(width)
//! E_bd  = row_bands * Σ_col_tiles f_bd(width)
//! E_dec = e_dec * driven_rows     E_mux = e_mux * values_read
//! E_rc  = e_rc * (values_read + cropped values)
//! E_sa  = e_sa * (additions + overlap-added values)
//! ```
//!
//! Padding-free overlap-add and crop also cost latency after the last cycle:
//! `t_sa` per `cols` overlap-added values and `t_rc` per `cols` cropped
//! values. `bit_serial_cycles` scales every latency and energy term.

use serde::{Deserialize, Serialize, Serializer};

use crate::dataflow::ExecutionTrace;
use crate::error::{Error, Result};
use crate::mapping::{CrossbarGeometry, Design, PlanGeometry};
use crate::tensor::DeconvLayerSpec;

/// Cost coefficients. The defaults are order-of-magnitude placeholders, not
/// calibrated against any circuit simulator; use them for trends only.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostParams {
    pub clock_hz: f64,
    /// Seconds per column driven.
    pub t_wd: f64,
    /// Seconds per row of bitline.
    pub t_bd: f64,
    pub t_dec: f64,
    pub t_mux: f64,
    pub t_rc: f64,
    pub t_sa: f64,
    /// Joules per cell activation.
    pub e_cell: f64,
    pub e_wd_base: f64,
    pub e_wd_quadratic: f64,
    pub e_bd_base: f64,
    pub e_bd_quadratic: f64,
    pub e_dec: f64,
    pub e_mux: f64,
    pub e_rc: f64,
    pub e_sa: f64,
    /// Square metres per cell.
    pub a_cell: f64,
    /// Square metres per periphery port.
    pub a_wd: f64,
    pub a_bd: f64,
    pub a_dec: f64,
    pub a_mux: f64,
    pub a_rc: f64,
    pub a_sa: f64,
    pub bit_serial_cycles: u32,
}

impl Default for CostParams {
    fn default() -> Self {
        Self {
            clock_hz: 2e9,
            t_wd: 1e-12,
            t_bd: 1e-12,
            t_dec: 2e-10,
            t_mux: 1e-10,
            t_rc: 5e-10,
            t_sa: 1e-10,
            e_cell: 1e-15,
            e_wd_base: 1e-15,
            e_wd_quadratic: 1e-16,
            e_bd_base: 1e-15,
            e_bd_quadratic: 1e-16,
            e_dec: 1e-14,
            e_mux: 1e-14,
            e_rc: 1e-13,
            e_sa: 5e-14,
            a_cell: 1e-14,
            a_wd: 1e-12,
            a_bd: 1e-12,
            a_dec: 5e-13,
            a_mux: 5e-13,
            a_rc: 5e-12,
            a_sa: 2e-12,
            bit_serial_cycles: 1,
        }
    }
}

impl CostParams {
    /// Every field name, in declaration order.
    pub const FIELDS: [&'static str; 24] = [
        "clock_hz",
        "t_wd",
        "t_bd",
        "t_dec",
        "t_mux",
        "t_rc",
        "t_sa",
        "e_cell",
        "e_wd_base",
        "e_wd_quadratic",
        "e_bd_base",
        "e_bd_quadratic",
        "e_dec",
        "e_mux",
        "e_rc",
        "e_sa",
        "a_cell",
        "a_wd",
        "a_bd",
        "a_dec",
        "a_mux",
        "a_rc",
        "a_sa",
        "bit_serial_cycles",
    ];

    fn coefficients(&self) -> [(&'static str, f64); 23] {
        [
            ("clock_hz", self.clock_hz),
            ("t_wd", self.t_wd),
            ("t_bd", self.t_bd),
            ("t_dec", self.t_dec),
            ("t_mux", self.t_mux),
            ("t_rc", self.t_rc),
            ("t_sa", self.t_sa),
            ("e_cell", self.e_cell),
            ("e_wd_base", self.e_wd_base),
            ("e_wd_quadratic", self.e_wd_quadratic),
            ("e_bd_base", self.e_bd_base),
            ("e_bd_quadratic", self.e_bd_quadratic),
            ("e_dec", self.e_dec),
            ("e_mux", self.e_mux),
            ("e_rc", self.e_rc),
            ("e_sa", self.e_sa),
            ("a_cell", self.a_cell),
            ("a_wd", self.a_wd),
            ("a_bd", self.a_bd),
            ("a_dec", self.a_dec),
            ("a_mux", self.a_mux),
            ("a_rc", self.a_rc),
            ("a_sa", self.a_sa),
        ]
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in self.coefficients() {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::Config(format!(
                    "cost_params.{name} must be a finite number ≥ 0, got {v}"
                )));
            }
        }
        if self.clock_hz <= 0.0 {
            return Err(Error::Config("cost_params.clock_hz must be > 0".into()));
        }
        if self.bit_serial_cycles == 0 {
            return Err(Error::Config(
                "cost_params.bit_serial_cycles must be ≥ 1".into(),
            ));
        }
        Ok(())
    }

    /// All coefficients zero, unit clock and one bit-serial cycle.
    pub fn zero() -> Self {
        Self {
            clock_hz: 1.0,
            t_wd: 0.0,
            t_bd: 0.0,
            t_dec: 0.0,
            t_mux: 0.0,
            t_rc: 0.0,
            t_sa: 0.0,
            e_cell: 0.0,
            e_wd_base: 0.0,
            e_wd_quadratic: 0.0,
            e_bd_base: 0.0,
            e_bd_quadratic: 0.0,
            e_dec: 0.0,
            e_mux: 0.0,
            e_rc: 0.0,
            e_sa: 0.0,
            a_cell: 0.0,
            a_wd: 0.0,
            a_bd: 0.0,
            a_dec: 0.0,
            a_mux: 0.0,
            a_rc: 0.0,
            a_sa: 0.0,
            bit_serial_cycles: 1,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CriticalPath {
    #[default]
    Max,
    Sum,
}

impl std::str::FromStr for CriticalPath {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "max" => Ok(Self::Max),
            "sum" => Ok(Self::Sum),
            other => Err(Error::Config(format!(
                "critical_path_mode must be \"max\" or \"sum\", got {other:?}"
            ))),
        }
    }
}

/// Seconds.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct Latency {
    pub wd: f64,
    pub bd: f64,
    pub dec: f64,
    pub mux: f64,
    pub rc: f64,
    pub sa: f64,
    pub total: f64,
}

impl Latency {
    pub fn components(&self) -> [(&'static str, f64); 6] {
        [
            ("wd", self.wd),
            ("bd", self.bd),
            ("dec", self.dec),
            ("mux", self.mux),
            ("rc", self.rc),
            ("sa", self.sa),
        ]
    }

    fn add(&mut self, o: &Latency) {
        self.wd += o.wd;
        self.bd += o.bd;
        self.dec += o.dec;
        self.mux += o.mux;
        self.rc += o.rc;
        self.sa += o.sa;
    }

    fn scale(&mut self, k: f64) {
        for v in [
            &mut self.wd,
            &mut self.bd,
            &mut self.dec,
            &mut self.mux,
            &mut self.rc,
            &mut self.sa,
        ] {
            *v *= k;
        }
    }

    fn sum(&self) -> f64 {
        (self.wd + self.bd) + (self.dec + self.mux + self.rc + self.sa)
    }

    fn finish(mut self) -> Self {
        self.total = self.sum();
        self
    }
}

/// Joules.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct Energy {
    pub c: f64,
    pub wd: f64,
    pub bd: f64,
    pub dec: f64,
    pub mux: f64,
    pub rc: f64,
    pub sa: f64,
    pub total: f64,
}

impl Energy {
    pub fn components(&self) -> [(&'static str, f64); 7] {
        [
            ("c", self.c),
            ("wd", self.wd),
            ("bd", self.bd),
            ("dec", self.dec),
            ("mux", self.mux),
            ("rc", self.rc),
            ("sa", self.sa),
        ]
    }

    /// Computation plus driver energy inside the arrays.
    pub fn array(&self) -> f64 {
        self.c + self.wd + self.bd
    }

    fn sum(&self) -> f64 {
        (self.c + self.wd + self.bd) + (self.dec + self.mux + self.rc + self.sa)
    }
}

/// Square metres.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct Area {
    pub array: f64,
    pub wd: f64,
    pub bd: f64,
    pub dec: f64,
    pub mux: f64,
    pub rc: f64,
    pub sa: f64,
    pub total: f64,
}

impl Area {
    pub fn components(&self) -> [(&'static str, f64); 7] {
        [
            ("array", self.array),
            ("wd", self.wd),
            ("bd", self.bd),
            ("dec", self.dec),
            ("mux", self.mux),
            ("rc", self.rc),
            ("sa", self.sa),
        ]
    }

    fn sum(&self) -> f64 {
        self.array + (self.wd + self.bd + self.dec + self.mux + self.rc + self.sa)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct CostBreakdown {
    pub latency: Latency,
    pub energy: Energy,
    pub area: Area,
}

fn activation_latency(g: &CrossbarGeometry, p: &CostParams) -> Latency {
    let widest_rows = g.row_tiles.iter().copied().max().unwrap_or(0);
    let merges = if g.row_tiles.len() > 1 { 2.0 } else { 1.0 };
    Latency {
        wd: p.t_wd * g.widest_tile() as f64,
        bd: p.t_bd * widest_rows as f64,
        dec: p.t_dec,
        mux: p.t_mux,
        rc: p.t_rc,
        sa: p.t_sa * merges,
        total: 0.0,
    }
    .finish()
}

pub fn latency_of(
    trace: &ExecutionTrace,
    geometry: &PlanGeometry,
    params: &CostParams,
    mode: CriticalPath,
) -> Latency {
    let per: Vec<Latency> = geometry
        .crossbars
        .iter()
        .map(|g| activation_latency(g, params))
        .collect();
    let mut out = Latency::default();
    for t in 0..trace.cycle_count as usize {
        let active = trace.active_in_cycle(t);
        match mode {
            CriticalPath::Max => {
                let slowest =
                    active
                        .iter()
                        .map(|&n| &per[n as usize])
                        .fold(None::<&Latency>, |best, l| match best {
                            Some(b) if b.total >= l.total => Some(b),
                            _ => Some(l),
                        });
                if let Some(l) = slowest {
                    out.add(l);
                }
            }
            CriticalPath::Sum => active.iter().for_each(|&n| out.add(&per[n as usize])),
        }
    }

    let lanes = geometry
        .crossbars
        .iter()
        .map(|g| g.cols)
        .max()
        .unwrap_or(1)
        .max(1) as u64;
    out.sa += params.t_sa * trace.post_ops.overlap_add_values.div_ceil(lanes) as f64;
    out.rc += params.t_rc * trace.post_ops.crop_values.div_ceil(lanes) as f64;
    out.scale(params.bit_serial_cycles as f64);
    out.finish()
}

fn drive(base: f64, quadratic: f64, widths: &[usize]) -> f64 {
    widths
        .iter()
        .map(|&q| {
            let q = q as f64;
            base * q + quadratic * q * q
        })
        .sum()
}

pub fn energy_of(trace: &ExecutionTrace, geometry: &PlanGeometry, params: &CostParams) -> Energy {
    let p = params;
    let mut e = Energy::default();
    for (act, g) in trace.per_crossbar.iter().zip(&geometry.crossbars) {
        let rows = act.driven_rows as f64;
        e.c += p.e_cell * rows * g.cols as f64;
        e.wd += rows * drive(p.e_wd_base, p.e_wd_quadratic, &g.col_tiles);
        e.bd += (act.activations * g.row_tiles.len() as u64) as f64
            * drive(p.e_bd_base, p.e_bd_quadratic, &g.col_tiles);
    }
    e.dec = p.e_dec * trace.wordlines_driven as f64;
    e.mux = p.e_mux * trace.output_values_read as f64;
    e.rc = p.e_rc * (trace.output_values_read + trace.post_ops.crop_values) as f64;
    e.sa = p.e_sa * (trace.adds_performed + trace.post_ops.overlap_add_values) as f64;

    let k = p.bit_serial_cycles as f64;
    for v in [
        &mut e.c, &mut e.wd, &mut e.bd, &mut e.dec, &mut e.mux, &mut e.rc, &mut e.sa,
    ] {
        *v *= k;
    }
    e.total = e.sum();
    e
}

pub fn area_of(geometry: &PlanGeometry, params: &CostParams) -> Area {
    let inv = geometry.inventory();
    let mut a = Area {
        array: params.a_cell * geometry.total_cells() as f64,
        wd: params.a_wd * inv.wordline_drivers.ports as f64,
        bd: params.a_bd * inv.bitline_drivers.ports as f64,
        dec: params.a_dec * inv.decoders.ports as f64,
        mux: params.a_mux * inv.muxes.ports as f64,
        rc: params.a_rc * inv.read_circuits.ports as f64,
        sa: params.a_sa * inv.shift_adders.ports as f64,
        total: 0.0,
    };
    a.total = a.sum();
    a
}

pub fn evaluate(
    trace: &ExecutionTrace,
    geometry: &PlanGeometry,
    params: &CostParams,
    mode: CriticalPath,
) -> Result<CostBreakdown> {
    if trace.design != geometry.design {
        return Err(Error::DesignMismatch {
            plan: geometry.design,
            schedule: trace.design,
        });
    }
    if trace.per_crossbar.len() != geometry.crossbars.len() {
        return Err(Error::Shape(format!(
            "trace covers {} crossbars, plan has {}",
            trace.per_crossbar.len(),
            geometry.crossbars.len()
        )));
    }
    Ok(CostBreakdown {
        latency: latency_of(trace, geometry, params, mode),
        energy: energy_of(trace, geometry, params),
        area: area_of(geometry, params),
    })
}

/// One design's cost on one layer, ready for [`compare`].
#[derive(Clone, Debug, PartialEq)]
pub struct DesignCost {
    pub design: Design,
    pub spec: DeconvLayerSpec,
    pub cycles: u64,
    pub breakdown: CostBreakdown,
}

/// Totals divided by the zero-padding design's totals.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Normalized {
    #[serde(serialize_with = "ser_ratio")]
    pub latency: Option<f64>,
    #[serde(serialize_with = "ser_ratio")]
    pub energy: Option<f64>,
    #[serde(serialize_with = "ser_ratio")]
    pub area: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DesignResult {
    pub design: Design,
    pub cycles: u64,
    /// `cycles * bit_serial_cycles / clock_hz`.
    pub clock_time: f64,
    pub breakdown: CostBreakdown,
    /// `None` when zero-padding was not evaluated.
    pub normalized: Option<Normalized>,
    #[serde(serialize_with = "ser_ratio")]
    pub speedup: Option<f64>,
    #[serde(serialize_with = "ser_ratio")]
    pub energy_saving_pct: Option<f64>,
    #[serde(serialize_with = "ser_ratio")]
    pub area_overhead_pct: Option<f64>,
}

/// All designs evaluated on one layer, normalized to zero-padding when it is
/// present.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ComparisonReport {
    pub layer: String,
    pub spec: DeconvLayerSpec,
    /// False when any coefficient came from the built-in defaults.
    pub calibrated: bool,
    pub critical_path: CriticalPath,
    pub designs: Vec<DesignResult>,
}

impl ComparisonReport {
    pub fn design(&self, design: Design) -> Option<&DesignResult> {
        self.designs.iter().find(|d| d.design == design)
    }
}

/// Undefined ratios serialize as the string `"undefined"`.
fn ser_ratio<S: Serializer>(v: &Option<f64>, s: S) -> std::result::Result<S::Ok, S::Error> {
    match v {
        Some(x) => s.serialize_f64(*x),
        None => s.serialize_str("undefined"),
    }
}

/// `num / den`, or `None` when that would not be a finite number.
pub fn ratio(num: f64, den: f64) -> Option<f64> {
    let r = num / den;
    (den != 0.0 && r.is_finite()).then_some(r)
}

pub fn compare(
    layer: &str,
    costs: &[DesignCost],
    params: &CostParams,
    calibrated: bool,
    mode: CriticalPath,
) -> Result<ComparisonReport> {
    let Some(first) = costs.first() else {
        return Err(Error::Config(format!(
            "layer {layer}: no designs to compare"
        )));
    };
    if let Some(other) = costs.iter().find(|c| c.spec != first.spec) {
        return Err(Error::MismatchedLayers(
            format!("{} {:?}", first.design, first.spec),
            format!("{} {:?}", other.design, other.spec),
        ));
    }
    let base = costs
        .iter()
        .find(|c| c.design == Design::ZeroPadding)
        .map(|c| c.breakdown);
    let designs = costs
        .iter()
        .map(|c| {
            let b = &c.breakdown;
            let (norm, speedup, saving, overhead) = match base {
                Some(z) => (
                    Some(Normalized {
                        latency: ratio(b.latency.total, z.latency.total),
                        energy: ratio(b.energy.total, z.energy.total),
                        area: ratio(b.area.total, z.area.total),
                    }),
                    ratio(z.latency.total, b.latency.total),
                    ratio(b.energy.total, z.energy.total).map(|r| (1.0 - r) * 100.0),
                    ratio(b.area.total, z.area.total).map(|r| (r - 1.0) * 100.0),
                ),
                None => (None, None, None, None),
            };
            DesignResult {
                design: c.design,
                cycles: c.cycles,
                clock_time: (c.cycles * params.bit_serial_cycles as u64) as f64 / params.clock_hz,
                breakdown: *b,
                normalized: norm,
                speedup,
                energy_saving_pct: saving,
                area_overhead_pct: overhead,
            }
        })
        .collect();
    Ok(ComparisonReport {
        layer: layer.to_string(),
        spec: first.spec,
        calibrated,
        critical_path: mode,
        designs,
    })
}
