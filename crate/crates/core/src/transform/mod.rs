//! Subtrace extraction, stitching, trace equivalence and densities.
//!
//! Extraction turns a trace and a subproblem into a smaller trace of a new
//! program in which everything outside the subproblem is fixed: applications
//! whose operator lies outside are hoisted into `assume` statements, and
//! choices outside become `observe` statements. Stitching is its inverse:
//! it grafts an updated subtrace back into the original.

mod density;
mod equiv;
mod extract;
mod stitch;

use thiserror::Error;

use crate::exec::{DistError, NodeId, ReplayError};

pub use density::{density, likelihood, prior};
pub use equiv::equiv;
pub use extract::{extract_trace, Subtrace};
pub use stitch::stitch_trace;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TransformError {
    #[error("subtrace does not line up with the original trace at node {0}")]
    Misaligned(NodeId),
    #[error("subtrace has {found} statements, expected {expected}")]
    StatementCount { expected: usize, found: usize },
    #[error("result is not a consistent trace: {0}")]
    Replay(#[from] ReplayError),
    #[error(transparent)]
    Dist(#[from] DistError),
}
