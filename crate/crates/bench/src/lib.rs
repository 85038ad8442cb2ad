//! Shared fixtures for the criterion benchmarks.

use redsim_core::bench::{builtin_benchmarks, scale_channels, BenchmarkEntry};
use redsim_core::prelude::*;

/// A built-in layer with channels scaled down so one iteration stays short.
pub fn scaled_layer(name: &str, scale: f64) -> DeconvLayerSpec {
    let entry: BenchmarkEntry = builtin_benchmarks()
        .into_iter()
        .find(|e| e.name == name)
        .unwrap_or_else(|| panic!("no built-in layer {name}"));
    scale_channels(&entry.spec, scale)
}

pub fn fixture(spec: &DeconvLayerSpec, seed: u64) -> (Tensor3<i64>, Kernel4<i64>) {
    let mut rng = Lcg::new(seed);
    let input = rng.tensor(spec.input_h, spec.input_w, spec.channels);
    let kernel = rng.kernel(spec.kernel_shape());
    (input, kernel)
}
