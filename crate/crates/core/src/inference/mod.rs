//! Inference kernels, subproblem strategies and metaprograms.
//!
//! A metaprogram is either a black-box kernel over the whole trace or a
//! weighted mixture of clauses. Each clause picks a subproblem with a
//! strategy, extracts it, runs a nested metaprogram on the subtrace and
//! stitches the result back.

mod config;
mod kernel;
mod strategy;

use num_traits::{One, Zero};
use thiserror::Error;

use crate::exec::{DistError, ExecError, ReplayError};
use crate::transform::TransformError;
use crate::Rational;

pub use config::{metaprogram_from_json, metaprogram_to_json, strategy_from_json, strategy_to_json, ConfigError};
pub use kernel::{infer_step, kernel_step, run_chain, run_chain_with, ChainConfig, ChainStats, Engine};
pub use strategy::{label_matches, select, select_in, Strategy};

/// A Markov kernel applied to a whole trace.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Kernel {
    /// Exact sample from the posterior, by enumerating every trace.
    EnumGibbs,
    /// Independence Metropolis-Hastings with the prior as proposal.
    PriorMh,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Metaprogram {
    BlackBox(Kernel),
    Mix(Vec<Clause>),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Clause {
    pub weight: Rational,
    pub strategy: Strategy,
    pub sub: Metaprogram,
}

impl Metaprogram {
    /// Single-clause mixture with weight one.
    pub fn clause(strategy: Strategy, sub: Metaprogram) -> Metaprogram {
        Metaprogram::Mix(vec![Clause { weight: Rational::one(), strategy, sub }])
    }

    /// Checks that every mixture is non-empty with positive weights summing
    /// to one.
    pub fn validate(&self) -> Result<(), ConfigError> {
        self.validate_at("")
    }

    fn validate_at(&self, path: &str) -> Result<(), ConfigError> {
        let Metaprogram::Mix(clauses) = self else { return Ok(()) };
        let here = if path.is_empty() { "mix".to_string() } else { format!("{path}.mix") };
        if clauses.is_empty() {
            return Err(ConfigError::new(&here, "mixture has no clauses"));
        }
        let mut total = Rational::zero();
        for (i, c) in clauses.iter().enumerate() {
            if c.weight <= Rational::zero() {
                return Err(ConfigError::new(&format!("{here}[{i}].weight"), "weight must be positive"));
            }
            total += &c.weight;
            c.sub.validate_at(&format!("{here}[{i}].sub"))?;
        }
        if !total.is_one() {
            return Err(ConfigError::new(
                &here,
                &format!("weights sum to {}, expected 1", crate::format_rational(&total)),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum InferError {
    #[error(transparent)]
    Exec(#[from] ExecError),
    #[error(transparent)]
    Dist(#[from] DistError),
    #[error(transparent)]
    Transform(#[from] TransformError),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("kernel broke its contract: {0}")]
    Contract(String),
    #[error("kernel result is not a valid trace: {0}")]
    Replay(#[from] ReplayError),
    #[error("no trace with positive density after {0} attempts")]
    NoPositiveInit(usize),
}
