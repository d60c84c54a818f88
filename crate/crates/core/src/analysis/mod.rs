//! Exact analysis of small programs: enumerated trace spaces, posteriors,
//! transition matrices of metaprograms and checks of the conditions under
//! which a metaprogram converges to the posterior.

mod checks;
mod classes;
mod matrix;

use std::collections::HashMap;

use num_traits::Zero;
use thiserror::Error;

use crate::exec::{enumerate_all, DistError, ExecError, Registry, Trace, Watermark};
use crate::inference::InferError;
use crate::lang::Program;
use crate::transform::{likelihood, prior, TransformError};
use crate::Rational;

pub use checks::{
    check_aperiodic, check_connectivity, check_irreducible, check_stationary, tv_distance, ConnectivityMode,
    ConnectivityReport, ConnectivityWitness, Residual, Verdict, EXACT_CONNECTIVITY_LIMIT,
};
pub use classes::{check_reversible, decompose_by_strategy, ClassDecomposition, ReversibilityReport};
pub use matrix::{build_kernel_matrix, KernelMatrix};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AnalysisError {
    #[error(transparent)]
    Exec(#[from] ExecError),
    #[error(transparent)]
    Dist(#[from] DistError),
    #[error(transparent)]
    Transform(#[from] TransformError),
    #[error(transparent)]
    Infer(#[from] InferError),
    #[error("every trace has density zero")]
    ZeroMass,
    #[error("enumeration produced two equivalent traces (entries {0} and {1})")]
    DuplicateTrace(usize, usize),
    #[error("trace not found in the enumerated space: {0}")]
    UnknownTrace(String),
    #[error("strategy is not reversible: subprograms differ within class {class} (traces {first} and {second})")]
    NotReversible { class: usize, first: usize, second: usize },
}

/// All traces of a program, one per equivalence class modulo ids.
#[derive(Clone, Debug)]
pub struct TraceSpace {
    pub traces: Vec<Trace>,
    pub keys: Vec<String>,
    pub priors: Vec<Rational>,
    pub likelihoods: Vec<Rational>,
    pub densities: Vec<Rational>,
    index: HashMap<String, usize>,
}

/// Default bound on the number of enumerated traces.
pub const DEFAULT_CAP: usize = 4096;

impl TraceSpace {
    pub fn len(&self) -> usize {
        self.traces.len()
    }

    pub fn is_empty(&self) -> bool {
        self.traces.is_empty()
    }

    /// Position of the trace equal to `t` up to ids and generated names.
    pub fn index_of(&self, t: &Trace) -> Option<usize> {
        self.index_of_key(&t.canonical_key())
    }

    pub fn index_of_key(&self, key: &str) -> Option<usize> {
        self.index.get(key).copied()
    }

    pub fn total_mass(&self) -> Rational {
        self.densities.iter().sum()
    }
}

/// Enumerates every trace of `p` with its exact density.
pub fn enumerate_traces(p: &Program, registry: &Registry, cap: usize) -> Result<TraceSpace, AnalysisError> {
    let traces = enumerate_all(p, registry, cap, Watermark::default())?;
    let mut space = TraceSpace {
        traces: Vec::with_capacity(traces.len()),
        keys: Vec::new(),
        priors: Vec::new(),
        likelihoods: Vec::new(),
        densities: Vec::new(),
        index: HashMap::new(),
    };
    for t in traces {
        let key = t.canonical_key();
        if let Some(&prev) = space.index.get(&key) {
            return Err(AnalysisError::DuplicateTrace(prev, space.traces.len()));
        }
        let q = prior(&t, registry)?;
        let w = likelihood(&t, registry)?;
        space.index.insert(key.clone(), space.traces.len());
        space.densities.push(&q * &w);
        space.priors.push(q);
        space.likelihoods.push(w);
        space.keys.push(key);
        space.traces.push(t);
    }
    Ok(space)
}

/// Normalised posterior over a trace space.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Posterior {
    pub probs: Vec<Rational>,
}

impl Posterior {
    pub fn support(&self) -> Vec<bool> {
        self.probs.iter().map(|p| !p.is_zero()).collect()
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.probs.iter().map(crate::rational_to_f64).collect()
    }
}

pub fn posterior(space: &TraceSpace) -> Result<Posterior, AnalysisError> {
    let total = space.total_mass();
    if total.is_zero() {
        return Err(AnalysisError::ZeroMass);
    }
    Ok(Posterior { probs: space.densities.iter().map(|d| d / &total).collect() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lang::parse_program;

    fn r(n: i64, d: i64) -> Rational {
        Rational::new(n.into(), d.into())
    }

    fn space(src: &str) -> TraceSpace {
        enumerate_traces(&parse_program(src).unwrap(), &Registry::builtin(), DEFAULT_CAP).unwrap()
    }

    #[test]
    fn deterministic_program_has_one_trace() {
        let s = space("(assume id (lambda (a) a)) (assume y (id 1/2))");
        assert_eq!(s.densities, vec![r(1, 1)]);
        assert_eq!(posterior(&s).unwrap().probs, vec![r(1, 1)]);
    }

    #[test]
    fn product_is_uniform() {
        let s = space("(assume x (flip 1/2)) (assume y (flip 1/2))");
        assert_eq!(s.densities, vec![r(1, 4); 4]);
        assert_eq!(posterior(&s).unwrap().probs, vec![r(1, 4); 4]);
        for (i, t) in s.traces.iter().enumerate() {
            assert_eq!(s.index_of(t), Some(i));
        }
    }

    #[test]
    fn two_flip_posterior() {
        let s = space("(assume x (flip 3/10)) (observe (flip (if x 9/10 1/10)) #t)");
        assert_eq!(s.densities, vec![r(27, 100), r(7, 100)]);
        assert_eq!(posterior(&s).unwrap().probs, vec![r(27, 34), r(7, 34)]);
    }

    #[test]
    fn zero_mass_is_an_error() {
        let s = space("(observe (flip 0) #t)");
        assert_eq!(posterior(&s), Err(AnalysisError::ZeroMass));
    }
}
