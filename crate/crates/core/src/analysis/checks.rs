use std::collections::HashMap;

use num_traits::{Signed, Zero};

use super::{decompose_by_strategy, AnalysisError, KernelMatrix, Posterior, TraceSpace};
use crate::depgraph::build_graph;
use crate::inference::{select_in, Strategy};
use crate::Rational;

/// `‖πK − π‖₁`, exactly when the matrix is exact.
#[derive(Clone, Debug, PartialEq)]
pub struct Residual {
    pub exact: Option<Rational>,
    pub float: f64,
}

pub fn check_stationary(k: &KernelMatrix, post: &Posterior) -> Residual {
    let n = k.len();
    match k {
        KernelMatrix::Exact(m) => {
            let mut total = Rational::zero();
            for j in 0..n {
                let mass: Rational = (0..n).map(|i| &post.probs[i] * &m[i][j]).sum();
                total += (mass - &post.probs[j]).abs();
            }
            Residual { float: crate::rational_to_f64(&total), exact: Some(total) }
        }
        KernelMatrix::Float(m) => {
            let pi = post.to_f64();
            let total = (0..n).map(|j| ((0..n).map(|i| pi[i] * m[i][j]).sum::<f64>() - pi[j]).abs()).sum();
            Residual { exact: None, float: total }
        }
    }
}

/// Reachability over positive entries, restricted to `allowed` states.
fn reach(k: &KernelMatrix, allowed: &[bool]) -> Vec<Vec<bool>> {
    let n = k.len();
    let mut r = vec![vec![false; n]; n];
    for (i, row) in r.iter_mut().enumerate() {
        if !allowed[i] {
            continue;
        }
        let mut stack = vec![i];
        while let Some(u) = stack.pop() {
            for v in 0..n {
                if allowed[v] && k.is_positive(u, v) && !row[v] {
                    row[v] = true;
                    stack.push(v);
                }
            }
        }
    }
    r
}

/// Every state of positive posterior mass reaches every other one.
pub fn check_irreducible(k: &KernelMatrix, post: &Posterior) -> bool {
    let n = k.len();
    let support = post.support();
    let all = vec![true; n];
    let r = reach(k, &all);
    (0..n).filter(|&i| support[i]).all(|i| (0..n).filter(|&j| support[j]).all(|j| i == j || r[i][j]))
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Every communicating class that matters has period one. With a support
/// (typically the posterior's), the classes inside it are checked;
/// otherwise the closed classes are.
pub fn check_aperiodic(k: &KernelMatrix, support: Option<&[bool]>) -> bool {
    let n = k.len();
    let all = vec![true; n];
    let r = reach(k, &all);
    let same_class = |i: usize, j: usize| (i == j || r[i][j]) && (i == j || r[j][i]);
    let mut done = vec![false; n];
    for root in 0..n {
        if done[root] {
            continue;
        }
        let members: Vec<usize> = (0..n).filter(|&j| same_class(root, j)).collect();
        for &m in &members {
            done[m] = true;
        }
        let relevant = match support {
            Some(s) => members.iter().any(|&m| s[m]),
            None => members.iter().all(|&m| (0..n).all(|v| !k.is_positive(m, v) || members.contains(&v))),
        };
        if !relevant {
            continue;
        }
        // Breadth-first levels; the period is the gcd of level differences
        // over edges inside the class.
        let mut level = vec![usize::MAX; n];
        level[root] = 0;
        let mut queue = std::collections::VecDeque::from([root]);
        let mut period = 0;
        while let Some(u) = queue.pop_front() {
            for &v in &members {
                if !k.is_positive(u, v) {
                    continue;
                }
                if level[v] == usize::MAX {
                    level[v] = level[u] + 1;
                    queue.push_back(v);
                } else {
                    period = gcd(period, (level[u] + 1).abs_diff(level[v]));
                }
            }
        }
        if period != 1 {
            return false;
        }
    }
    true
}

/// Total variation between an empirical histogram keyed by canonical trace
/// keys and the posterior. Keys outside the space are an error.
pub fn tv_distance(space: &TraceSpace, counts: &HashMap<String, u64>, post: &Posterior) -> Result<f64, AnalysisError> {
    let total: u64 = counts.values().sum();
    let mut emp = vec![0.0; space.len()];
    for (key, c) in counts {
        let i = space.index_of_key(key).ok_or_else(|| AnalysisError::UnknownTrace(key.clone()))?;
        emp[i] = *c as f64 / total.max(1) as f64;
    }
    let pi = post.to_f64();
    Ok(0.5 * emp.iter().zip(&pi).map(|(a, b)| (a - b).abs()).sum::<f64>())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Verdict {
    Holds,
    Fails,
    Inconclusive,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ConnectivityMode {
    /// Every subset of the space was examined.
    Exact,
    /// The space was too large; only a sufficient condition was tested.
    SufficientOnly,
}

/// A set of traces whose strategy closures agree on the posterior support
/// without covering it.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConnectivityWitness {
    pub set: Vec<usize>,
    /// Indices of the strategies whose class functions are involved.
    pub f: usize,
    pub g: usize,
    /// Whether `set` is a union of classes of every strategy.
    pub class_aligned: bool,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConnectivityReport {
    pub verdict: Verdict,
    pub mode: ConnectivityMode,
    pub witness: Option<ConnectivityWitness>,
    /// Result of checking each pair of strategies on its own.
    pub pairwise: Option<bool>,
    /// Whether some violating set, for the combined check, was not a union
    /// of classes.
    pub unaligned_violation: bool,
}

/// Largest space examined subset by subset.
pub const EXACT_CONNECTIVITY_LIMIT: usize = 16;

/// Whether the class functions of `strategies` connect the posterior.
///
/// For a set `A`, `F_f(A)` is the union of the `f`-classes meeting `A`. A
/// set is a violation when all `F_f(A)` agree up to posterior-null sets
/// while some posterior mass lies outside them. With one or two strategies
/// this is exactly the pairwise condition; with more, the agreement must
/// hold across all of them, which `pairwise` reports separately.
pub fn check_connectivity(strategies: &[Strategy], space: &TraceSpace, post: &Posterior) -> ConnectivityReport {
    let n = space.len();
    if strategies.is_empty() {
        return ConnectivityReport {
            verdict: Verdict::Holds,
            mode: ConnectivityMode::Exact,
            witness: None,
            pairwise: Some(true),
            unaligned_violation: false,
        };
    }
    if n > EXACT_CONNECTIVITY_LIMIT {
        return sufficient_only(strategies, space, post);
    }
    let pos: u32 = post.support().iter().enumerate().filter(|(_, p)| **p).fold(0, |m, (i, _)| m | (1 << i));
    let class_masks: Vec<Vec<u32>> = strategies
        .iter()
        .map(|st| {
            decompose_by_strategy(st, space)
                .classes
                .iter()
                .map(|c| c.iter().fold(0u32, |m, &i| m | (1 << i)))
                .collect()
        })
        .collect();
    let closure = |f: usize, a: u32| class_masks[f].iter().filter(|c| *c & a != 0).fold(0u32, |m, c| m | c);
    let aligned = |a: u32| (0..strategies.len()).all(|f| closure(f, a) == a);
    let k = strategies.len();
    let mut witness = None;
    let mut pairwise_witness = None;
    let mut unaligned = false;
    for a in 1u32..(1u32 << n) {
        let fs: Vec<u32> = (0..k).map(|f| closure(f, a) & pos).collect();
        let covered = |f: usize| fs[f] == pos;
        if fs.iter().all(|m| *m == fs[0]) && !covered(0) {
            if witness.is_none() {
                witness = Some(ConnectivityWitness { set: bits(a), f: 0, g: k - 1, class_aligned: aligned(a) });
            }
            unaligned |= !aligned(a);
        }
        if pairwise_witness.is_none() {
            'pairs: for f in 0..k {
                for g in 0..k {
                    if fs[f] == fs[g] && !covered(f) {
                        pairwise_witness = Some((f, g));
                        break 'pairs;
                    }
                }
            }
        }
    }
    ConnectivityReport {
        verdict: if witness.is_none() { Verdict::Holds } else { Verdict::Fails },
        mode: ConnectivityMode::Exact,
        witness,
        pairwise: Some(pairwise_witness.is_none()),
        unaligned_violation: unaligned,
    }
}

fn bits(a: u32) -> Vec<usize> {
    (0..32).filter(|i| a & (1 << i) != 0).collect()
}

/// Holds when the posterior is positive everywhere and every choice of
/// every trace is selected by some strategy; otherwise undecided.
fn sufficient_only(strategies: &[Strategy], space: &TraceSpace, post: &Posterior) -> ConnectivityReport {
    let all_positive = post.probs.iter().all(|p| !p.is_zero());
    let covered = space.traces.iter().all(|t| {
        let g = build_graph(t);
        let selected: Vec<_> = strategies.iter().map(|st| select_in(st, t, &g).nodes).collect();
        g.choices().iter().all(|c| selected.iter().any(|s| s.contains(c)))
    });
    ConnectivityReport {
        verdict: if all_positive && covered { Verdict::Holds } else { Verdict::Inconclusive },
        mode: ConnectivityMode::SufficientOnly,
        witness: None,
        pairwise: None,
        unaligned_violation: false,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::{build_kernel_matrix, enumerate_traces, posterior, DEFAULT_CAP};
    use crate::exec::Registry;
    use crate::inference::{Clause, Engine, Kernel, Metaprogram};
    use crate::lang::parse_program;

    fn r(n: i64, d: i64) -> Rational {
        Rational::new(n.into(), d.into())
    }

    const XOR: &str = "(assume xor (lambda (a) (lambda (b) (if a (if b #f #t) b)))) \
                       (assume x (flip 1/2)) (assume y (flip 1/2)) \
                       (observe (flip (if ((xor x) y) 0 1)) #t)";

    fn gibbs(labels: &[&[&str]]) -> Metaprogram {
        let w = Rational::new(1.into(), (labels.len() as i64).into());
        Metaprogram::Mix(
            labels
                .iter()
                .map(|ls| Clause {
                    weight: w.clone(),
                    strategy: Strategy::by_labels(ls.iter().copied()),
                    sub: Metaprogram::BlackBox(Kernel::EnumGibbs),
                })
                .collect(),
        )
    }

    #[test]
    fn xor_connectivity_and_irreducibility() {
        let reg = Registry::builtin();
        let engine = Engine::new(&reg);
        let space = enumerate_traces(&parse_program(XOR).unwrap(), &reg, DEFAULT_CAP).unwrap();
        let post = posterior(&space).unwrap();
        assert_eq!(post.probs, vec![r(1, 2), r(0, 1), r(0, 1), r(1, 2)]);

        let two = [Strategy::by_labels(["x"]), Strategy::by_labels(["y"])];
        let rep = check_connectivity(&two, &space, &post);
        assert_eq!(rep.verdict, Verdict::Fails);
        assert_eq!(rep.witness.unwrap().set, vec![0]);
        let k = build_kernel_matrix(&engine, &gibbs(&[&["x"], &["y"]]), &space).unwrap();
        assert!(!check_irreducible(&k, &post));

        let three = [Strategy::by_labels(["x"]), Strategy::by_labels(["y"]), Strategy::by_labels(["x", "y"])];
        let rep = check_connectivity(&three, &space, &post);
        assert_eq!(rep.verdict, Verdict::Holds);
        assert_eq!(rep.pairwise, Some(false));
        let k = build_kernel_matrix(&engine, &gibbs(&[&["x"], &["y"], &["x", "y"]]), &space).unwrap();
        assert!(check_irreducible(&k, &post));
        assert!(check_aperiodic(&k, Some(&post.support())));
    }

    #[test]
    fn all_choices_connects() {
        let reg = Registry::builtin();
        let space =
            enumerate_traces(&parse_program("(assume x (flip 1/3)) (assume y (flip 1/4))").unwrap(), &reg, 64).unwrap();
        let post = posterior(&space).unwrap();
        let rep = check_connectivity(&[Strategy::AllChoices], &space, &post);
        assert_eq!(rep.verdict, Verdict::Holds);
        assert_eq!(rep.pairwise, Some(true));
    }

    #[test]
    fn periodicity() {
        let swap = KernelMatrix::Exact(vec![vec![r(0, 1), r(1, 1)], vec![r(1, 1), r(0, 1)]]);
        assert!(!check_aperiodic(&swap, None));
        let lazy = KernelMatrix::Exact(vec![vec![r(1, 2), r(1, 2)], vec![r(1, 1), r(0, 1)]]);
        assert!(check_aperiodic(&lazy, None));
        let float = KernelMatrix::Float(vec![vec![0.0, 1.0], vec![1.0, 0.0]]);
        assert!(!check_aperiodic(&float, Some(&[true, true])));
    }

    #[test]
    fn stationarity_negative_control() {
        let post = Posterior { probs: vec![r(3, 4), r(1, 4)] };
        let good = KernelMatrix::Exact(vec![vec![r(3, 4), r(1, 4)]; 2]);
        assert_eq!(check_stationary(&good, &post).exact, Some(r(0, 1)));
        let bad = KernelMatrix::Exact(vec![vec![r(1, 4), r(3, 4)], vec![r(3, 4), r(1, 4)]]);
        assert!(check_stationary(&bad, &post).float > 0.0);
    }

    #[test]
    fn total_variation() {
        let reg = Registry::builtin();
        let space = enumerate_traces(&parse_program("(assume x (flip 1/2))").unwrap(), &reg, 64).unwrap();
        let post = posterior(&space).unwrap();
        let point = HashMap::from([(space.keys[0].clone(), 10u64)]);
        assert!((tv_distance(&space, &point, &post).unwrap() - 0.5).abs() < 1e-15);
        let exact = HashMap::from([(space.keys[0].clone(), 5u64), (space.keys[1].clone(), 5)]);
        assert_eq!(tv_distance(&space, &exact, &post).unwrap(), 0.0);
        let unknown = HashMap::from([("nope".to_string(), 1u64)]);
        assert!(matches!(tv_distance(&space, &unknown, &post), Err(AnalysisError::UnknownTrace(_))));
    }
}
