use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use redsim_core::bench::{check_channel_scale, parse_designs, Config};
use redsim_core::prelude::*;
use redsim_core::report;
use redsim_core::Error;
use serde_json::Value;

#[derive(Parser)]
#[command(
    name = "redsim",
    version,
    about = "ReRAM deconvolution accelerator simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// JSON config with layers, cost params and run options.
    #[arg(long, global = true, env = "RED_SIM_CONFIG")]
    config: Option<PathBuf>,

    /// Output file, or directory for `run` in CSV mode.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    #[arg(long, global = true, value_enum)]
    format: Option<Format>,

    /// Seed for generated inputs and kernels.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Channel fraction kept for functional runs, in (0, 1].
    #[arg(long, global = true)]
    channel_scale: Option<f64>,

    /// Comma-separated designs: zero_padding, padding_free, red, red_folded.
    #[arg(long, global = true, value_delimiter = ',')]
    designs: Option<Vec<String>>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Table,
    Csv,
    Json,
}

#[derive(Subcommand)]
enum Command {
    /// Print the benchmark layers.
    List,
    /// Verify every design against the oracle and report costs.
    Run,
    /// Fraction of zero multiplications in zero-padding deconvolution.
    Redundancy {
        #[arg(long, value_delimiter = ',', default_value = "2,4,8,16,32")]
        strides: Vec<usize>,
        /// `double` (K = 2s) or `fixed:K`.
        #[arg(long, default_value = "double")]
        kernel_rule: KernelRule,
        /// Square input side.
        #[arg(long, default_value_t = 64)]
        input_size: usize,
        #[arg(long, value_enum, default_value = "same")]
        crop: CropRule,
    },
    /// Write the per-cycle schedule of one layer.
    DumpSchedule {
        /// Built-in or configured layer name.
        #[arg(long, conflicts_with_all = ["input", "kernel"])]
        layer: Option<String>,
        /// H,W,C
        #[arg(long, value_delimiter = ',', requires = "kernel")]
        input: Option<Vec<usize>>,
        /// KH,KW,C,M
        #[arg(long, value_delimiter = ',', requires = "input")]
        kernel: Option<Vec<usize>>,
        #[arg(long, default_value_t = 1)]
        stride: usize,
        /// top,bottom,left,right
        #[arg(long, value_delimiter = ',')]
        crop: Option<Vec<usize>>,
        #[arg(long, default_value = "red")]
        design: String,
    },
}

#[derive(Clone, Copy, Debug)]
enum KernelRule {
    Double,
    Fixed(usize),
}

impl std::str::FromStr for KernelRule {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        if s == "double" {
            return Ok(Self::Double);
        }
        s.strip_prefix("fixed:")
            .and_then(|k| k.parse().ok())
            .filter(|&k| k >= 1)
            .map(Self::Fixed)
            .ok_or_else(|| format!("expected `double` or `fixed:K` with K ≥ 1, got `{s}`"))
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum CropRule {
    /// No cropping.
    None,
    /// Total crop K - s per axis, smaller half first, so O = s * I.
    Same,
    /// Crop K - 1 on every side.
    Full,
}

/// Exit status for a failed equivalence or cycle-count check.
const CHECK_FAILED: u8 = 1;
/// Exit status for usage and configuration errors.
const USAGE: u8 = 2;

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(USAGE)
        }
    }
}

fn dispatch(cli: &Cli) -> Result<ExitCode> {
    match &cli.command {
        Command::List => cmd_list(cli),
        Command::Run => cmd_run(cli),
        Command::Redundancy {
            strides,
            kernel_rule,
            input_size,
            crop,
        } => cmd_redundancy(cli, strides, *kernel_rule, *input_size, *crop),
        Command::DumpSchedule {
            layer,
            input,
            kernel,
            stride,
            crop,
            design,
        } => {
            let spec = match (layer, input, kernel) {
                (Some(name), _, _) => find_layer(cli, name)?,
                (None, Some(i), Some(k)) => {
                    expect_len("--input", i, 3)?;
                    expect_len("--kernel", k, 4)?;
                    if let Some(c) = crop {
                        expect_len("--crop", c, 4)?;
                    }
                    if i[2] != k[2] {
                        bail!(
                            "--kernel channels ({}) must equal --input channels ({})",
                            k[2],
                            i[2]
                        );
                    }
                    let c = crop.as_deref().unwrap_or(&[0, 0, 0, 0]);
                    DeconvLayerSpec::symmetric((i[0], i[1], i[2]), (k[0], k[1], k[3]), *stride, 0)
                        .with_crops(c[0], c[1], c[2], c[3])
                }
                _ => bail!("dump-schedule needs --layer or both --input and --kernel"),
            };
            cmd_dump_schedule(cli, &spec, design)
        }
    }
}

fn expect_len(flag: &str, values: &[usize], n: usize) -> Result<()> {
    if values.len() != n {
        bail!(
            "{flag} takes {n} comma-separated values, got {}",
            values.len()
        );
    }
    Ok(())
}

fn load(cli: &Cli) -> Result<Config> {
    let mut cfg = match &cli.config {
        Some(path) => redsim_core::bench::load_config(path)?,
        None => Config::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.options.seed = seed;
    }
    if let Some(scale) = cli.channel_scale {
        check_channel_scale(scale).context("--channel-scale")?;
        cfg.options.channel_scale = scale;
    }
    if let Some(designs) = &cli.designs {
        cfg.options.designs =
            parse_designs(designs.iter().map(String::as_str)).context("--designs")?;
    }
    Ok(cfg)
}

fn find_layer(cli: &Cli, name: &str) -> Result<DeconvLayerSpec> {
    let cfg = load(cli)?;
    cfg.entries
        .iter()
        .chain(builtin_benchmarks().iter())
        .find(|e| e.name == name)
        .map(|e| e.spec)
        .ok_or_else(|| anyhow!("unknown layer `{name}`"))
}

fn json_text(v: &Value) -> String {
    serde_json::to_string_pretty(v).expect("JSON values serialize") + "\n"
}

/// Writes to `--out` when given, else stdout.
fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(path) => fs::write(path, text).with_context(|| format!("writing {}", path.display())),
        None => io::stdout()
            .write_all(text.as_bytes())
            .context("writing to stdout"),
    }
}

fn cmd_list(cli: &Cli) -> Result<ExitCode> {
    let entries = match &cli.config {
        Some(_) => load(cli)?.entries,
        None => builtin_benchmarks(),
    };
    let text = match cli.format.unwrap_or(Format::Table) {
        Format::Table => report::benchmark_table(&entries),
        Format::Csv => report::benchmark_csv(&entries),
        Format::Json => json_text(&report::benchmark_json(&entries)),
    };
    emit(cli.out.as_deref(), &text)?;
    Ok(ExitCode::SUCCESS)
}

fn cmd_run(cli: &Cli) -> Result<ExitCode> {
    let cfg = load(cli)?;
    let format = cli.format.unwrap_or(Format::Csv);
    if format == Format::Table {
        bail!("run supports --format csv or json");
    }

    let mut reports = Vec::new();
    let mut failed_checks = false;
    let mut other_error = None;
    for (entry, result) in
        cfg.entries
            .iter()
            .zip(run_suite(&cfg.entries, &cfg.params, &cfg.options))
    {
        match result {
            Ok(r) => reports.push(r),
            Err(e @ (Error::Equivalence { .. } | Error::CycleCount { .. })) => {
                eprintln!("FAIL {}: {e}", entry.name);
                failed_checks = true;
            }
            Err(e) => {
                eprintln!("error in {}: {e}", entry.name);
                other_error.get_or_insert(e);
            }
        }
    }

    match (format, cli.out.as_deref()) {
        (Format::Json, out) => emit(out, &json_text(&report::report_json(&reports, &cfg.params)))?,
        (_, Some(dir)) => {
            fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
            for (file, text) in [
                ("breakdown.csv", report::breakdown_csv(&reports)),
                ("summary.csv", report::summary_csv(&reports)),
                ("reference.csv", report::reference_csv(&reports)),
            ] {
                emit(Some(&dir.join(file)), &text)?;
            }
        }
        (_, None) => emit(None, &report::summary_csv(&reports))?,
    }
    if !reports.iter().all(|r| r.calibrated) {
        eprintln!(
            "note: cost coefficients are {}; compare trends, not absolute values",
            report::NON_CALIBRATED
        );
    }

    if failed_checks {
        return Ok(ExitCode::from(CHECK_FAILED));
    }
    if let Some(e) = other_error {
        return Err(e.into());
    }
    Ok(ExitCode::SUCCESS)
}

fn redundancy_spec(
    stride: usize,
    rule: KernelRule,
    input: usize,
    crop: CropRule,
) -> Result<DeconvLayerSpec> {
    if stride == 0 {
        bail!("stride must be ≥ 1");
    }
    let k = match rule {
        KernelRule::Double => 2 * stride,
        KernelRule::Fixed(k) => k,
    };
    let (lo, hi) = match crop {
        CropRule::None => (0, 0),
        CropRule::Same => {
            let total = k
                .checked_sub(stride)
                .ok_or_else(|| anyhow!("--crop same needs K ≥ s (K = {k}, s = {stride})"))?;
            (total / 2, total - total / 2)
        }
        CropRule::Full => (k - 1, k - 1),
    };
    let spec = DeconvLayerSpec::symmetric((input, input, 1), (k, k, 1), stride, 0)
        .with_crops(lo, hi, lo, hi);
    spec.check_geometry()?;
    Ok(spec)
}

fn cmd_redundancy(
    cli: &Cli,
    strides: &[usize],
    rule: KernelRule,
    input: usize,
    crop: CropRule,
) -> Result<ExitCode> {
    if strides.is_empty() {
        bail!("--strides must not be empty");
    }
    let mut rows = Vec::new();
    for &s in strides {
        let spec = redundancy_spec(s, rule, input, crop)?;
        rows.push((s, spec.kh, zero_redundancy_ratio(&spec)?));
    }
    let text = match cli.format.unwrap_or(Format::Csv) {
        Format::Json => json_text(&report::sorted_keys(Value::Array(
            rows.iter()
                .map(|&(s, k, r)| serde_json::json!({ "stride": s, "kernel": k, "ratio": r }))
                .collect(),
        ))),
        _ => {
            let mut t = String::from("stride,ratio\n");
            for (s, _, r) in rows {
                t += &format!("{s},{r}\n");
            }
            t
        }
    };
    emit(cli.out.as_deref(), &text)?;
    Ok(ExitCode::SUCCESS)
}

fn cmd_dump_schedule(cli: &Cli, spec: &DeconvLayerSpec, design: &str) -> Result<ExitCode> {
    let design: Design = design.parse()?;
    let schedule = build_schedule(design, spec)?;
    let text = match cli.format {
        Some(Format::Json) => json_text(&report::sorted_keys(serde_json::to_value(&schedule)?)),
        _ => schedule.dump_string(),
    };
    emit(cli.out.as_deref(), &text)?;
    Ok(ExitCode::SUCCESS)
}
