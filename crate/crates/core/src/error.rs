use alloc::string::String;
use alloc::vec::Vec;

use thiserror::Error;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("row {row}: field `{field}`: {reason}")]
    Field {
        row: usize,
        field: &'static str,
        reason: String,
    },

    #[error("duplicate post_id: {}", .0.join(", "))]
    DuplicatePostIds(Vec<String>),

    #[error("no temporal extent")]
    NoTemporalExtent,

    #[error("index ({i}, {j}, {k}) out of range for shape ({ni}, {nj}, {nk})")]
    IndexOutOfRange {
        i: usize,
        j: usize,
        k: usize,
        ni: usize,
        nj: usize,
        nk: usize,
    },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("invalid solver options: {0}")]
    InvalidOptions(&'static str),

    #[error("empty tensor")]
    EmptyTensor,

    #[error("solver failure: objective became non-finite at sweep {0}")]
    SolverFailure(usize),

    #[error("degenerate Poisson fit")]
    DegeneratePoissonFit,

    #[error("inconsistent cluster {0}: no posts in its user/thread/week intersection")]
    InconsistentCluster(usize),

    #[error("storyline unavailable: {0}")]
    StorylineUnavailable(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}
