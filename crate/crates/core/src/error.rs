use thiserror::Error;

use crate::mapping::Design;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid layer: {field}: {constraint}")]
    InvalidSpec {
        field: &'static str,
        constraint: String,
    },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("sub-crossbar tensor is already folded")]
    AlreadyFolded,

    #[error("plan is for {plan} but schedule is for {schedule}")]
    DesignMismatch { plan: Design, schedule: Design },

    #[error("malformed schedule: {0}")]
    Schedule(String),

    #[error("unknown design `{0}` (expected zero_padding, padding_free, red or red_folded)")]
    UnknownDesign(String),

    #[error("breakdowns describe different layers: `{0}` vs `{1}`")]
    MismatchedLayers(String, String),

    #[error("config: {0}")]
    Config(String),

    #[error("{layer}/{design}: output differs from oracle in {mismatches} of {total} values (first at y={y}, x={x}, m={m}: got {got}, expected {expected})")]
    Equivalence {
        layer: String,
        design: Design,
        mismatches: usize,
        total: usize,
        y: usize,
        x: usize,
        m: usize,
        got: String,
        expected: String,
    },

    #[error("{layer}/{design}: {cycles} cycles, closed form says {expected}")]
    CycleCount {
        layer: String,
        design: Design,
        cycles: u64,
        expected: u64,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
