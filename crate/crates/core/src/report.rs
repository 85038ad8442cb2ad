//! CSV and JSON renderings of comparison reports.
//!
//! All output is a pure function of the reports, so identical runs give
//! identical bytes. JSON objects are emitted with keys in lexicographic
//! order.

use serde_json::{json, Map, Value};

use crate::bench::BenchmarkEntry;
use crate::costmodel::{ComparisonReport, CostParams};
use crate::mapping::Design;

pub const NON_CALIBRATED: &str = "NON-CALIBRATED";
pub const UNDEFINED: &str = "undefined";

/// Published RED figures, shown next to the computed counterparts. They
/// depend on circuit-level coefficients and are not expected to match.
pub const REFERENCE: [(&str, &str); 3] = [
    ("red_speedup", "3.69-31.15x"),
    ("red_energy_saving_pct", "8-88.36%"),
    ("red_area_overhead_pct", "21.41%"),
];

fn field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| UNDEFINED.to_string(), |x| x.to_string())
}

fn calibration(calibrated: bool) -> &'static str {
    if calibrated {
        "calibrated"
    } else {
        NON_CALIBRATED
    }
}

fn normalized_everywhere(reports: &[ComparisonReport]) -> bool {
    !reports.is_empty()
        && reports
            .iter()
            .all(|r| r.designs.iter().all(|d| d.normalized.is_some()))
}

/// Metric name, components, total, and the baseline total.
type MetricRows = (&'static str, Vec<(&'static str, f64)>, f64, Option<f64>);

/// `design,layer,metric,component,value[,normalized]`; components are
/// normalized to the zero-padding total of the same metric, so they stack
/// to the normalized total. The last column is left out when any layer lacks
/// the zero-padding baseline.
pub fn breakdown_csv(reports: &[ComparisonReport]) -> String {
    let with_norm = normalized_everywhere(reports);
    let mut out = String::from("design,layer,metric,component,value");
    if with_norm {
        out.push_str(",normalized");
    }
    out.push('\n');
    for r in reports {
        let base = r.design(Design::ZeroPadding).map(|z| z.breakdown);
        for d in &r.designs {
            let b = &d.breakdown;
            let metrics: [MetricRows; 3] = [
                (
                    "latency",
                    b.latency.components().to_vec(),
                    b.latency.total,
                    base.map(|z| z.latency.total),
                ),
                (
                    "energy",
                    b.energy.components().to_vec(),
                    b.energy.total,
                    base.map(|z| z.energy.total),
                ),
                (
                    "area",
                    b.area.components().to_vec(),
                    b.area.total,
                    base.map(|z| z.area.total),
                ),
            ];
            for (metric, comps, total, base_total) in metrics {
                for (component, value) in comps.into_iter().chain([("total", total)]) {
                    out.push_str(&format!(
                        "{},{},{metric},{component},{value}",
                        d.design,
                        field(&r.layer)
                    ));
                    if with_norm {
                        let n = base_total.and_then(|t| crate::costmodel::ratio(value, t));
                        out.push_str(&format!(",{}", opt(n)));
                    }
                    out.push('\n');
                }
            }
        }
    }
    out
}

/// One row per layer and design with totals, baseline ratios, speedup and
/// savings.
pub fn summary_csv(reports: &[ComparisonReport]) -> String {
    let with_norm = normalized_everywhere(reports);
    let mut out = String::from("layer,design,cycles,latency_s,energy_j,area_m2");
    if with_norm {
        out.push_str(
            ",normalized_latency,normalized_energy,normalized_area,speedup,energy_saving_pct,area_overhead_pct",
        );
    }
    out.push_str(",calibration\n");
    for r in reports {
        for d in &r.designs {
            let b = &d.breakdown;
            out.push_str(&format!(
                "{},{},{},{},{},{}",
                field(&r.layer),
                d.design,
                d.cycles,
                b.latency.total,
                b.energy.total,
                b.area.total
            ));
            if let (true, Some(n)) = (with_norm, d.normalized) {
                out.push_str(&format!(
                    ",{},{},{},{},{},{}",
                    opt(n.latency),
                    opt(n.energy),
                    opt(n.area),
                    opt(d.speedup),
                    opt(d.energy_saving_pct),
                    opt(d.area_overhead_pct)
                ));
            }
            out.push_str(&format!(",{}\n", calibration(r.calibrated)));
        }
    }
    out
}

/// `(min, max)` of a RED metric over all layers, `None` if it is undefined
/// anywhere.
fn red_range(
    reports: &[ComparisonReport],
    pick: impl Fn(&crate::costmodel::DesignResult) -> Option<f64>,
) -> Option<(f64, f64)> {
    let vals: Option<Vec<f64>> = reports
        .iter()
        .map(|r| r.design(Design::RedPixelWise).and_then(&pick))
        .collect();
    let vals = vals.filter(|v| !v.is_empty())?;
    let min = vals.iter().copied().fold(f64::INFINITY, f64::min);
    let max = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Some((min, max))
}

/// Quantity, computed `(min, max)`, published value.
type ReferenceRow = (&'static str, Option<(f64, f64)>, &'static str);

fn reference_rows(reports: &[ComparisonReport]) -> Vec<ReferenceRow> {
    let ranges = [
        red_range(reports, |d| d.speedup),
        red_range(reports, |d| d.energy_saving_pct),
        red_range(reports, |d| d.area_overhead_pct),
    ];
    REFERENCE
        .iter()
        .zip(ranges)
        .map(|(&(name, paper), range)| (name, range, paper))
        .collect()
}

/// Computed RED ranges across layers next to the published values.
pub fn reference_csv(reports: &[ComparisonReport]) -> String {
    let calibrated = reports.iter().all(|r| r.calibrated);
    let mut out = String::from("quantity,computed_min,computed_max,published,calibration\n");
    for (name, range, paper) in reference_rows(reports) {
        out.push_str(&format!(
            "{name},{},{},{paper},{}\n",
            opt(range.map(|r| r.0)),
            opt(range.map(|r| r.1)),
            calibration(calibrated)
        ));
    }
    out
}

/// Rebuilds every object with keys inserted in sorted order.
pub fn sorted_keys(v: Value) -> Value {
    match v {
        Value::Object(map) => {
            let mut entries: Vec<(String, Value)> = map.into_iter().collect();
            entries.sort_by(|a, b| a.0.cmp(&b.0));
            Value::Object(
                entries
                    .into_iter()
                    .map(|(k, v)| (k, sorted_keys(v)))
                    .collect::<Map<_, _>>(),
            )
        }
        Value::Array(items) => Value::Array(items.into_iter().map(sorted_keys).collect()),
        other => other,
    }
}

/// Full report: params, per-layer breakdowns, and the reference table.
pub fn report_json(reports: &[ComparisonReport], params: &CostParams) -> Value {
    let calibrated = reports.iter().all(|r| r.calibrated);
    let reference: Vec<Value> = reference_rows(reports)
        .into_iter()
        .map(|(name, range, paper)| {
            json!({
                "quantity": name,
                "computed_min": range.map_or(json!(UNDEFINED), |r| json!(r.0)),
                "computed_max": range.map_or(json!(UNDEFINED), |r| json!(r.1)),
                "published": paper,
            })
        })
        .collect();
    sorted_keys(json!({
        "calibration": calibration(calibrated),
        "cost_params": params,
        "layers": reports,
        "reference": reference,
        "note": "cells store signed weights exactly; costs are for trend comparison",
    }))
}

pub const TABLE_HEADERS: [&str; 7] = [
    "Layer Name",
    "Network Model",
    "Dataset",
    "Input Size (I_H,I_W,C)",
    "Output Size (O_H,O_W,M)",
    "Kernel Size (K_H,K_W,C,M)",
    "Stride",
];

fn benchmark_cells(e: &BenchmarkEntry) -> [String; 7] {
    let s = &e.spec;
    let (oh, ow, m) = e.output_size();
    [
        e.name.clone(),
        e.network.clone(),
        e.dataset.clone(),
        format!("({},{},{})", s.input_h, s.input_w, s.channels),
        format!("({oh},{ow},{m})"),
        format!("({},{},{},{})", s.kh, s.kw, s.channels, s.filters),
        s.stride.to_string(),
    ]
}

/// Aligned text table of benchmark layers.
pub fn benchmark_table(entries: &[BenchmarkEntry]) -> String {
    let rows: Vec<[String; 7]> = entries.iter().map(benchmark_cells).collect();
    let mut widths = TABLE_HEADERS.map(str::len);
    for r in &rows {
        for (w, c) in widths.iter_mut().zip(r) {
            *w = (*w).max(c.chars().count());
        }
    }
    let line = |cells: Vec<&str>| {
        let padded: Vec<String> = cells
            .iter()
            .zip(widths)
            .map(|(c, w)| format!("{c:<w$}"))
            .collect();
        padded.join("  ").trim_end().to_string() + "\n"
    };
    let mut out = line(TABLE_HEADERS.to_vec());
    for r in &rows {
        out += &line(r.iter().map(String::as_str).collect());
    }
    out
}

pub fn benchmark_csv(entries: &[BenchmarkEntry]) -> String {
    let mut out = TABLE_HEADERS.map(field).join(",") + "\n";
    for e in entries {
        out += &(benchmark_cells(e).map(|c| field(&c)).join(",") + "\n");
    }
    out
}

pub fn benchmark_json(entries: &[BenchmarkEntry]) -> Value {
    let items = entries
        .iter()
        .map(|e| {
            let (oh, ow, m) = e.output_size();
            json!({
                "name": e.name,
                "network": e.network,
                "dataset": e.dataset,
                "spec": e.spec,
                "output": [oh, ow, m],
                "notes": e.notes,
            })
        })
        .collect();
    sorted_keys(Value::Array(items))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bench::{builtin_benchmarks, run_suite, RunOptions};

    fn reports(designs: Vec<Design>) -> Vec<ComparisonReport> {
        let opts = RunOptions {
            designs,
            ..RunOptions::default()
        };
        let entries: Vec<BenchmarkEntry> = builtin_benchmarks().into_iter().take(3).collect();
        run_suite(&entries, &CostParams::default(), &opts)
            .into_iter()
            .map(Result::unwrap)
            .collect()
    }

    #[test]
    fn breakdown_rows_and_normalization() {
        let r = reports(vec![Design::ZeroPadding, Design::RedPixelWise]);
        let csv = breakdown_csv(&r);
        let mut lines = csv.lines();
        assert_eq!(
            lines.next().unwrap(),
            "design,layer,metric,component,value,normalized"
        );
        // 3 layers x 2 designs x (7 + 8 + 8) rows.
        assert_eq!(lines.count(), 3 * 2 * 23);
        assert!(csv.contains("zero_padding,GAN_Deconv1,latency,total,"));
        let zp_total = csv
            .lines()
            .find(|l| l.starts_with("zero_padding,GAN_Deconv1,energy,total,"))
            .unwrap();
        assert!(zp_total.ends_with(",1"));
    }

    #[test]
    fn single_design_omits_normalization() {
        let r = reports(vec![Design::RedPixelWise]);
        assert!(breakdown_csv(&r).starts_with("design,layer,metric,component,value\n"));
        let s = summary_csv(&r);
        assert!(!s.lines().next().unwrap().contains("speedup"));
        assert!(reference_csv(&r).contains(UNDEFINED));
    }

    #[test]
    fn json_keys_sorted_and_flagged() {
        let r = reports(vec![Design::ZeroPadding, Design::RedPixelWise]);
        let v = report_json(&r, &CostParams::default());
        let keys: Vec<&String> = v.as_object().unwrap().keys().collect();
        let mut sorted = keys.clone();
        sorted.sort();
        assert_eq!(keys, sorted);
        assert_eq!(v["calibration"], NON_CALIBRATED);
        assert_eq!(v["reference"].as_array().unwrap().len(), 3);
    }

    #[test]
    fn table_headers() {
        let t = benchmark_table(&builtin_benchmarks());
        assert_eq!(t.lines().count(), 7);
        assert!(t.lines().next().unwrap().starts_with("Layer Name"));
        assert!(benchmark_csv(&builtin_benchmarks()).contains("\"Input Size (I_H,I_W,C)\""));
        assert_eq!(
            benchmark_json(&builtin_benchmarks())
                .as_array()
                .unwrap()
                .len(),
            6
        );
    }

    #[test]
    fn fields_with_commas_are_quoted() {
        assert_eq!(field("a,b"), "\"a,b\"");
        assert_eq!(field("say \"x\", y"), "\"say \"\"x\"\", y\"");
        assert_eq!(field("plain"), "plain");
    }
}
