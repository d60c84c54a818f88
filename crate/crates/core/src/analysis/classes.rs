use num_traits::Zero;

use super::{Posterior, TraceSpace};
use crate::inference::{select, Strategy};
use crate::transform::equiv;
use crate::Rational;

/// Partition of a trace space induced by a strategy.
#[derive(Clone, Debug)]
pub struct ClassDecomposition {
    pub classes: Vec<Vec<usize>>,
    pub class_of: Vec<usize>,
    /// `relation[i][j]`: trace `j` is reachable from trace `i` by changing
    /// only the subproblem the strategy selects in `i`.
    pub relation: Vec<Vec<bool>>,
    pub reflexive: bool,
    pub symmetric: bool,
    pub transitive: bool,
}

impl ClassDecomposition {
    /// Posterior restricted to `class` and renormalised, aligned with
    /// `classes[class]`. `None` when the class has no posterior mass.
    pub fn conditional(&self, class: usize, post: &Posterior) -> Option<Vec<Rational>> {
        let members = &self.classes[class];
        let mass: Rational = members.iter().map(|&i| &post.probs[i]).sum();
        if mass.is_zero() {
            return None;
        }
        Some(members.iter().map(|&i| &post.probs[i] / &mass).collect())
    }
}

/// Relation `R(t, u) = equiv(select(st, t), t, u)` and its connected
/// components.
pub fn decompose_by_strategy(st: &Strategy, space: &TraceSpace) -> ClassDecomposition {
    let n = space.len();
    let mut relation = vec![vec![false; n]; n];
    for (i, t) in space.traces.iter().enumerate() {
        let s = select(st, t).nodes;
        for (j, u) in space.traces.iter().enumerate() {
            relation[i][j] = equiv(&s, t, u);
        }
    }
    let reflexive = (0..n).all(|i| relation[i][i]);
    let symmetric = (0..n).all(|i| (0..n).all(|j| relation[i][j] == relation[j][i]));
    let transitive = transitivity_witness(&relation).is_none();

    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut [usize], mut i: usize) -> usize {
        while parent[i] != i {
            parent[i] = parent[parent[i]];
            i = parent[i];
        }
        i
    }
    for i in 0..n {
        for j in 0..n {
            if relation[i][j] {
                let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                if a != b {
                    parent[a.max(b)] = a.min(b);
                }
            }
        }
    }
    let mut class_of = vec![usize::MAX; n];
    let mut classes: Vec<Vec<usize>> = Vec::new();
    let mut root_class = std::collections::HashMap::new();
    for i in 0..n {
        let root = find(&mut parent, i);
        let c = *root_class.entry(root).or_insert_with(|| {
            classes.push(Vec::new());
            classes.len() - 1
        });
        classes[c].push(i);
        class_of[i] = c;
    }
    ClassDecomposition { classes, class_of, relation, reflexive, symmetric, transitive }
}

fn transitivity_witness(r: &[Vec<bool>]) -> Option<[usize; 3]> {
    let n = r.len();
    for i in 0..n {
        for j in 0..n {
            if !r[i][j] {
                continue;
            }
            for k in 0..n {
                if r[j][k] && !r[i][k] {
                    return Some([i, j, k]);
                }
            }
        }
    }
    None
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ReversibilityReport {
    pub reversible: bool,
    /// Trace indices showing the failure: `[i]` (not reflexive), `[i, j]`
    /// (`i` reaches `j` but not back) or `[i, j, k]` (`i` reaches `j`, `j`
    /// reaches `k`, `i` does not reach `k`).
    pub witness: Option<Vec<usize>>,
}

/// Whether the strategy's relation is an equivalence relation.
pub fn check_reversible(d: &ClassDecomposition) -> ReversibilityReport {
    let r = &d.relation;
    let n = r.len();
    let witness = (0..n)
        .find(|&i| !r[i][i])
        .map(|i| vec![i])
        .or_else(|| {
            (0..n).flat_map(|i| (0..n).map(move |j| (i, j))).find(|&(i, j)| r[i][j] && !r[j][i]).map(|(i, j)| vec![i, j])
        })
        .or_else(|| transitivity_witness(r).map(|w| w.to_vec()));
    ReversibilityReport { reversible: witness.is_none(), witness }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::{enumerate_traces, posterior, DEFAULT_CAP};
    use crate::exec::Registry;
    use crate::lang::{parse_program, Expr};

    fn space(src: &str) -> TraceSpace {
        enumerate_traces(&parse_program(src).unwrap(), &Registry::builtin(), DEFAULT_CAP).unwrap()
    }

    const PRODUCT: &str = "(assume x (flip 1/2)) (assume y (flip 1/2))";

    #[test]
    fn fixed_label_classes_group_by_other_variable() {
        let s = space(PRODUCT);
        let d = decompose_by_strategy(&Strategy::by_labels(["x"]), &s);
        assert_eq!(d.classes, vec![vec![0, 2], vec![1, 3]]);
        assert!(check_reversible(&d).reversible);
        let c = d.conditional(0, &posterior(&s).unwrap()).unwrap();
        assert_eq!(c, vec![Rational::new(1.into(), 2.into()); 2]);
    }

    #[test]
    fn extreme_strategies() {
        let s = space(PRODUCT);
        assert_eq!(decompose_by_strategy(&Strategy::AllChoices, &s).classes.len(), 1);
        let empty = decompose_by_strategy(&Strategy::ByLabels(Default::default()), &s);
        assert_eq!(empty.classes.len(), 4);
        assert!(check_reversible(&empty).reversible);
    }

    #[test]
    fn conditional_strategy_is_not_reversible() {
        let s = space(PRODUCT);
        let st = Strategy::IfChoice {
            label: "y".into(),
            equals: Expr::church_true(),
            then: Box::new(Strategy::by_labels(["x", "y"])),
            otherwise: Box::new(Strategy::by_labels(["x"])),
        };
        let d = decompose_by_strategy(&st, &s);
        assert!(!d.symmetric);
        let rep = check_reversible(&d);
        assert!(!rep.reversible);
        let w = rep.witness.unwrap();
        assert_eq!(w.len(), 2);
        assert!(d.relation[w[0]][w[1]] && !d.relation[w[1]][w[0]]);
    }
}
