use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use num_traits::Zero;

use super::strategy::select;
use super::{InferError, Kernel, Metaprogram};
use crate::exec::{
    enumerate_paths, execute_with, revalidate, RandomSource, Registry, Sampler, Scripted, Trace, Watermark,
};
use crate::lang::Program;
use crate::rational_to_f64;
use crate::transform::{density, extract_trace, likelihood, stitch_trace};
use crate::Rational;

/// Settings shared by every step of inference.
#[derive(Clone, Debug)]
pub struct Engine<'a> {
    pub registry: &'a Registry,
    /// Bound on the number of traces enumerated by exact kernels.
    pub enum_cap: usize,
    /// Keyed by canonical program text, so generated names do not matter.
    supports: Arc<Mutex<HashMap<String, Arc<Support>>>>,
}

/// Outcome scripts of every trace of a program, with their densities.
#[derive(Debug)]
struct Support {
    scripts: Vec<Vec<usize>>,
    densities: Vec<Rational>,
    total: Rational,
}

/// Programs whose supports are remembered at once.
const SUPPORT_CACHE_LIMIT: usize = 4096;

/// Counters collected while stepping.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct ChainStats {
    pub steps: u64,
    pub proposals: u64,
    pub accepted: u64,
    pub init_attempts: u64,
    /// Mixture steps whose strategy selected nothing.
    pub empty_selections: u64,
}

impl<'a> Engine<'a> {
    pub fn new(registry: &'a Registry) -> Self {
        Engine::with_cap(registry, 4096)
    }

    pub fn with_cap(registry: &'a Registry, enum_cap: usize) -> Self {
        Engine { registry, enum_cap, supports: Arc::default() }
    }

    fn support(&self, p: &Program) -> Result<Arc<Support>, InferError> {
        let key = p.canonical_key();
        if let Some(s) = self.supports.lock().expect("support cache").get(&key) {
            return Ok(s.clone());
        }
        let paths = enumerate_paths(p, self.registry, self.enum_cap, Watermark::default())?;
        let densities = paths.iter().map(|(_, u)| density(u, self.registry)).collect::<Result<Vec<_>, _>>()?;
        let support = Arc::new(Support {
            total: densities.iter().sum(),
            scripts: paths.into_iter().map(|(s, _)| s).collect(),
            densities,
        });
        let mut cache = self.supports.lock().expect("support cache");
        if cache.len() >= SUPPORT_CACHE_LIMIT {
            cache.clear();
        }
        cache.insert(key, support.clone());
        Ok(support)
    }
}

/// Index drawn from non-negative weights using one uniform variate.
fn pick(weights: &[Rational], total: &Rational, rng: &mut RandomSource) -> usize {
    let u = rng.uniform();
    let total = rational_to_f64(total);
    let mut cum = 0.0;
    let mut last = 0;
    for (i, w) in weights.iter().enumerate() {
        if w.is_zero() {
            continue;
        }
        cum += rational_to_f64(w) / total;
        last = i;
        if u < cum {
            return i;
        }
    }
    last
}

/// Applies a black-box kernel to the program of `t`.
pub fn kernel_step(
    engine: &Engine<'_>,
    kernel: Kernel,
    t: &Trace,
    rng: &mut RandomSource,
    floor: Watermark,
    stats: &mut ChainStats,
) -> Result<Trace, InferError> {
    let p = t.rollback();
    let start = floor.max(Watermark::of_trace(t));
    stats.proposals += 1;
    match kernel {
        Kernel::EnumGibbs => {
            let support = engine.support(&p)?;
            if support.total.is_zero() {
                return Ok(t.clone());
            }
            stats.accepted += 1;
            let i = pick(&support.densities, &support.total, rng);
            let mut chooser = Scripted::new(support.scripts[i].clone());
            Ok(execute_with(&p, engine.registry, &mut chooser, start)?.0)
        }
        Kernel::PriorMh => {
            let (proposal, _) = execute_with(&p, engine.registry, &mut Sampler(rng), start)?;
            let w_new = likelihood(&proposal, engine.registry)?;
            let w_old = likelihood(t, engine.registry)?;
            let accept = if w_old.is_zero() {
                true
            } else {
                let ratio = w_new / w_old;
                ratio >= Rational::from_integer(1.into()) || rng.uniform() < rational_to_f64(&ratio)
            };
            if accept {
                stats.accepted += 1;
                Ok(proposal)
            } else {
                Ok(t.clone())
            }
        }
    }
}

/// One transition of the chain defined by `mp`.
pub fn infer_step(
    engine: &Engine<'_>,
    mp: &Metaprogram,
    t: &Trace,
    rng: &mut RandomSource,
    stats: &mut ChainStats,
) -> Result<Trace, InferError> {
    step_at(engine, mp, t, rng, Watermark::of_trace(t), stats)
}

fn step_at(
    engine: &Engine<'_>,
    mp: &Metaprogram,
    t: &Trace,
    rng: &mut RandomSource,
    floor: Watermark,
    stats: &mut ChainStats,
) -> Result<Trace, InferError> {
    match mp {
        Metaprogram::BlackBox(k) => kernel_step(engine, *k, t, rng, floor, stats),
        Metaprogram::Mix(clauses) => {
            let weights: Vec<Rational> = clauses.iter().map(|c| c.weight.clone()).collect();
            let total: Rational = weights.iter().sum();
            let clause = &clauses[pick(&weights, &total, rng)];
            let sub = select(&clause.strategy, t);
            if sub.nodes.is_empty() {
                stats.empty_selections += 1;
            }
            let extracted = extract_trace(t, &sub.nodes, engine.registry)?;
            let floor = floor.max(Watermark::of_trace(&extracted.trace));
            let updated = step_at(engine, &clause.sub, &extracted.trace, rng, floor, stats)?;
            if updated.rollback() != extracted.program {
                return Err(InferError::Contract("subtrace no longer belongs to the extracted program".into()));
            }
            revalidate(&updated, engine.registry)?;
            Ok(stitch_trace(t, &updated, &sub.nodes, engine.registry)?)
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ChainConfig {
    pub iters: u64,
    pub burnin: u64,
    pub thin: u64,
    /// Forward executions tried to find a starting trace of positive density.
    pub init_attempts: u64,
}

impl Default for ChainConfig {
    fn default() -> Self {
        ChainConfig { iters: 1000, burnin: 0, thin: 1, init_attempts: 10_000 }
    }
}

/// Runs a chain and hands every retained trace to `visit`. Iteration `i`
/// (counted from zero) is retained when `i >= burnin` and
/// `(i - burnin) % thin == 0`.
pub fn run_chain_with(
    engine: &Engine<'_>,
    mp: &Metaprogram,
    p: &crate::lang::Program,
    cfg: &ChainConfig,
    rng: &mut RandomSource,
    visit: &mut dyn FnMut(u64, &Trace),
) -> Result<ChainStats, InferError> {
    mp.validate()?;
    let thin = cfg.thin.max(1);
    let mut stats = ChainStats::default();
    let mut t = None;
    while t.is_none() {
        if stats.init_attempts == cfg.init_attempts {
            return Err(InferError::NoPositiveInit(cfg.init_attempts as usize));
        }
        stats.init_attempts += 1;
        let (cand, _) = execute_with(p, engine.registry, &mut Sampler(rng), Watermark::default())?;
        if !density(&cand, engine.registry)?.is_zero() {
            t = Some(cand);
        }
    }
    let mut t = t.expect("initialised");
    for i in 0..cfg.iters {
        t = infer_step(engine, mp, &t, rng, &mut stats)?;
        stats.steps += 1;
        if i >= cfg.burnin && (i - cfg.burnin) % thin == 0 {
            visit(i, &t);
        }
    }
    Ok(stats)
}

/// Runs a chain and collects the retained traces.
pub fn run_chain(
    engine: &Engine<'_>,
    mp: &Metaprogram,
    p: &crate::lang::Program,
    cfg: &ChainConfig,
    rng: &mut RandomSource,
) -> Result<Vec<Trace>, InferError> {
    let mut out = Vec::new();
    run_chain_with(engine, mp, p, cfg, rng, &mut |_, t| out.push(t.clone()))?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::inference::Strategy;
    use crate::lang::parse_program;

    #[test]
    fn burn_in_and_thinning() {
        let reg = Registry::builtin();
        let engine = Engine::new(&reg);
        let p = parse_program("(assume x (flip 1/2))").unwrap();
        let mp = Metaprogram::BlackBox(Kernel::EnumGibbs);
        let mut rng = RandomSource::seed(0);
        let cfg = ChainConfig { iters: 10, burnin: 4, thin: 2, ..Default::default() };
        let mut kept = Vec::new();
        run_chain_with(&engine, &mp, &p, &cfg, &mut rng, &mut |i, _| kept.push(i)).unwrap();
        assert_eq!(kept, vec![4, 6, 8]);
        let cfg = ChainConfig { iters: 5, burnin: 5, thin: 1, ..Default::default() };
        assert!(run_chain(&engine, &mp, &p, &cfg, &mut rng).unwrap().is_empty());
    }

    #[test]
    fn mixture_step_preserves_program() {
        let reg = Registry::builtin();
        let engine = Engine::new(&reg);
        let p = parse_program("(assume x (flip 3/10)) (observe (flip (if x 9/10 1/10)) #t)").unwrap();
        let mp = Metaprogram::clause(Strategy::by_labels(["x"]), Metaprogram::BlackBox(Kernel::PriorMh));
        let mut rng = RandomSource::seed(5);
        let cfg = ChainConfig { iters: 50, ..Default::default() };
        for t in run_chain(&engine, &mp, &p, &cfg, &mut rng).unwrap() {
            assert_eq!(t.rollback(), p);
            revalidate(&t, &reg).unwrap();
        }
    }

    #[test]
    fn impossible_program_fails_to_initialise() {
        let reg = Registry::builtin();
        let engine = Engine::new(&reg);
        let p = parse_program("(observe (flip 0) #t)").unwrap();
        let cfg = ChainConfig { iters: 1, init_attempts: 5, ..Default::default() };
        let err = run_chain(&engine, &Metaprogram::BlackBox(Kernel::PriorMh), &p, &cfg, &mut RandomSource::seed(0));
        assert_eq!(err.unwrap_err(), InferError::NoPositiveInit(5));
    }
}
