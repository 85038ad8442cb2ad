//! Functional and cost simulation of ReRAM crossbar deconvolution
//! accelerators.
//!
//! Three hardware designs are modeled end to end:
//!
//! - **zero-padding**: the input is dilated with zeros and convolved on one
//!   `K_H K_W C x M` crossbar, one output pixel per cycle;
//! - **padding-free**: one `C x K_H K_W M` crossbar multiplies each input
//!   pixel by the rotated kernel, followed by overlap-add and cropping;
//! - **RED**: pixel-wise mapping onto `K_H K_W` sub-crossbars of `C x M`,
//!   driven by a zero-skipping dataflow that produces a `stride x stride`
//!   output tile per cycle (optionally folded onto half as many `2C x M`
//!   arrays at twice the cycles).
//!
//! Every design is executed cycle by cycle against [`tensor`]'s software
//! oracles, and the recorded activity feeds an analytical latency, energy and
//! area model ([`costmodel`]).
//!
//! ```
//! use redsim_core::prelude::*;
//!
//! let spec = DeconvLayerSpec::symmetric((4, 4, 2), (4, 4, 3), 2, 1);
//! let mut rng = Lcg::new(7);
//! let input: Tensor3<i64> = rng.tensor(4, 4, 2);
//! let kernel = rng.kernel(spec.kernel_shape());
//!
//! let plan = build_plan(Design::RedPixelWise, &kernel);
//! let schedule = build_schedule(Design::RedPixelWise, &spec).unwrap();
//! let (out, trace) = execute(&plan, &schedule, &input).unwrap();
//!
//! assert_eq!(out, deconv_oracle_zero_padding(&input, &kernel, &spec).unwrap());
//! assert_eq!(trace.cycle_count, 16);
//! ```

pub mod bench;
pub mod costmodel;
pub mod dataflow;
pub mod error;
pub mod mapping;
pub mod report;
pub mod rng;
pub mod tensor;

pub use error::{Error, Result};

pub mod prelude {
    pub use crate::bench::{
        builtin_benchmarks, load_config, run_suite, BenchmarkEntry, RunOptions,
    };
    pub use crate::costmodel::{
        compare, evaluate, ComparisonReport, CostBreakdown, CostParams, CriticalPath,
    };
    pub use crate::dataflow::{
        build_schedule, execute, partition_modes, trace_activity, CycleSchedule, ExecutionTrace,
    };
    pub use crate::mapping::{
        build_plan, CrossbarMatrix, Design, MappingPlan, PlanGeometry, SubCrossbarTensor,
    };
    pub use crate::rng::Lcg;
    pub use crate::tensor::{
        deconv_oracle_padding_free, deconv_oracle_zero_padding, zero_redundancy_ratio,
        DeconvLayerSpec, Element, Kernel4, KernelShape, Tensor3,
    };
}
