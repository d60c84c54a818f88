use std::collections::HashMap;

use num_traits::{One, Zero};

use super::{decompose_by_strategy, enumerate_traces, AnalysisError, TraceSpace};
use crate::inference::{select, Engine, Kernel, Metaprogram, Strategy};
use crate::lang::Program;
use crate::transform::{extract_trace, stitch_trace};
use crate::Rational;

/// Transition matrix over a trace space.
#[derive(Clone, Debug, PartialEq)]
pub enum KernelMatrix {
    Exact(Vec<Vec<Rational>>),
    Float(Vec<Vec<f64>>),
}

impl KernelMatrix {
    pub fn len(&self) -> usize {
        match self {
            KernelMatrix::Exact(m) => m.len(),
            KernelMatrix::Float(m) => m.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn get_f64(&self, i: usize, j: usize) -> f64 {
        match self {
            KernelMatrix::Exact(m) => crate::rational_to_f64(&m[i][j]),
            KernelMatrix::Float(m) => m[i][j],
        }
    }

    pub fn is_positive(&self, i: usize, j: usize) -> bool {
        match self {
            KernelMatrix::Exact(m) => !m[i][j].is_zero(),
            KernelMatrix::Float(m) => m[i][j] > 0.0,
        }
    }

    pub fn to_float(&self) -> Vec<Vec<f64>> {
        let n = self.len();
        (0..n).map(|i| (0..n).map(|j| self.get_f64(i, j)).collect()).collect()
    }

    /// Largest deviation of a row sum from one.
    pub fn max_row_deviation(&self) -> f64 {
        match self {
            KernelMatrix::Exact(m) => m
                .iter()
                .map(|row| {
                    let s: Rational = row.iter().sum();
                    crate::rational_to_f64(&(s - Rational::one())).abs()
                })
                .fold(0.0, f64::max),
            KernelMatrix::Float(m) => m.iter().map(|row| (row.iter().sum::<f64>() - 1.0).abs()).fold(0.0, f64::max),
        }
    }
}

fn identity(n: usize) -> Vec<Vec<Rational>> {
    (0..n).map(|i| (0..n).map(|j| if i == j { Rational::one() } else { Rational::zero() }).collect()).collect()
}

/// Exact transition matrix of `mp` over `space`.
pub fn build_kernel_matrix(
    engine: &Engine<'_>,
    mp: &Metaprogram,
    space: &TraceSpace,
) -> Result<KernelMatrix, AnalysisError> {
    let mut cache = HashMap::new();
    Ok(KernelMatrix::Exact(exact_matrix(engine, mp, space, &mut cache)?))
}

type Cache = HashMap<(Program, String), (TraceSpace, Vec<Vec<Rational>>)>;

fn exact_matrix(
    engine: &Engine<'_>,
    mp: &Metaprogram,
    space: &TraceSpace,
    cache: &mut Cache,
) -> Result<Vec<Vec<Rational>>, AnalysisError> {
    let n = space.len();
    match mp {
        Metaprogram::BlackBox(Kernel::EnumGibbs) => {
            let total = space.total_mass();
            if total.is_zero() {
                return Ok(identity(n));
            }
            let row: Vec<Rational> = space.densities.iter().map(|d| d / &total).collect();
            Ok(vec![row; n])
        }
        Metaprogram::BlackBox(Kernel::PriorMh) => {
            let mut m = vec![vec![Rational::zero(); n]; n];
            for (i, row) in m.iter_mut().enumerate() {
                let w_i = &space.likelihoods[i];
                let mut moved = Rational::zero();
                for j in 0..n {
                    if i == j {
                        continue;
                    }
                    let accept = if w_i.is_zero() {
                        Rational::one()
                    } else {
                        let ratio = &space.likelihoods[j] / w_i;
                        if ratio > Rational::one() {
                            Rational::one()
                        } else {
                            ratio
                        }
                    };
                    row[j] = &space.priors[j] * accept;
                    moved += &row[j];
                }
                row[i] = Rational::one() - moved;
            }
            Ok(m)
        }
        Metaprogram::Mix(clauses) => {
            let mut total = vec![vec![Rational::zero(); n]; n];
            for clause in clauses {
                let k = clause_matrix(engine, &clause.strategy, &clause.sub, space, cache)?;
                for (trow, krow) in total.iter_mut().zip(k) {
                    for (a, b) in trow.iter_mut().zip(krow) {
                        *a += &clause.weight * b;
                    }
                }
            }
            Ok(total)
        }
    }
}

/// Matrix of one clause: each trace moves within its class according to
/// the nested metaprogram's matrix on the extracted subprogram.
fn clause_matrix(
    engine: &Engine<'_>,
    strategy: &Strategy,
    sub: &Metaprogram,
    space: &TraceSpace,
    cache: &mut Cache,
) -> Result<Vec<Vec<Rational>>, AnalysisError> {
    let n = space.len();
    let classes = decompose_by_strategy(strategy, space);
    let mut programs = Vec::with_capacity(n);
    let mut m = vec![vec![Rational::zero(); n]; n];
    let sub_key = format!("{sub:?}");
    for (i, t) in space.traces.iter().enumerate() {
        let s = select(strategy, t).nodes;
        let extracted = extract_trace(t, &s, engine.registry)?;
        let key = (extracted.program.clone(), sub_key.clone());
        if !cache.contains_key(&key) {
            let sub_space = enumerate_traces(&extracted.program, engine.registry, engine.enum_cap)?;
            let sub_m = exact_matrix(engine, sub, &sub_space, cache)?;
            cache.insert(key.clone(), (sub_space, sub_m));
        }
        let (sub_space, sub_m) = &cache[&key];
        let r = sub_space
            .index_of(&extracted.trace)
            .ok_or_else(|| AnalysisError::UnknownTrace("extracted subtrace".into()))?;
        for (j, target) in sub_space.traces.iter().enumerate() {
            if sub_m[r][j].is_zero() {
                continue;
            }
            let stitched = stitch_trace(t, target, &s, engine.registry)?;
            let k = space.index_of(&stitched).ok_or_else(|| AnalysisError::UnknownTrace("stitched trace".into()))?;
            m[i][k] += &sub_m[r][j];
        }
        programs.push(extracted.program.canonical_key());
    }
    for (c, members) in classes.classes.iter().enumerate() {
        for &j in &members[1..] {
            if programs[j] != programs[members[0]] {
                return Err(AnalysisError::NotReversible { class: c, first: members[0], second: j });
            }
        }
    }
    Ok(m)
}
