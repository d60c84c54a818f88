use std::collections::BTreeSet;

use crate::depgraph::{build_graph, DepGraph, Subproblem};
use crate::exec::{AugNode, NodeId, Trace};
use crate::lang::{alpha_eq, Expr};

/// Chooses a subproblem of a trace.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Strategy {
    /// Every choice whose label matches one of the given labels.
    ByLabels(BTreeSet<String>),
    /// The first choice, in evaluation order, whose label matches.
    SingleSite(String),
    /// Every choice of the trace.
    AllChoices,
    /// Branches on the outcome of the first choice matching `label`.
    IfChoice { label: String, equals: Expr, then: Box<Strategy>, otherwise: Box<Strategy> },
}

/// `pattern` matches `label` itself and the labels nested under it
/// (`pattern/...`).
pub fn label_matches(pattern: &str, label: &str) -> bool {
    label == pattern || (label.len() > pattern.len() && label.starts_with(pattern) && label.as_bytes()[pattern.len()] == b'/')
}

impl Strategy {
    pub fn by_labels<I: IntoIterator<Item = S>, S: Into<String>>(labels: I) -> Strategy {
        Strategy::ByLabels(labels.into_iter().map(Into::into).collect())
    }

    /// Choice nodes used as seeds.
    pub fn seeds(&self, t: &Trace, g: &DepGraph) -> BTreeSet<NodeId> {
        let labelled = |pred: &dyn Fn(&str) -> bool| -> Vec<NodeId> {
            g.choices().iter().copied().filter(|c| g.label(*c).is_some_and(|l| pred(l))).collect()
        };
        match self {
            Strategy::ByLabels(ls) => labelled(&|l| ls.iter().any(|p| label_matches(p, l))).into_iter().collect(),
            Strategy::SingleSite(p) => labelled(&|l| label_matches(p, l)).into_iter().take(1).collect(),
            Strategy::AllChoices => g.choices().iter().copied().collect(),
            Strategy::IfChoice { label, equals, then, otherwise } => {
                let mut outcome = None;
                t.visit(&mut |e| {
                    if let AugNode::Dist { label: l, result, .. } = &e.node {
                        if outcome.is_none() && label_matches(label, l) {
                            outcome = Some(result.rollback());
                        }
                    }
                });
                let hit = outcome.is_some_and(|o| alpha_eq(&o, equals));
                if hit {
                    then.seeds(t, g)
                } else {
                    otherwise.seeds(t, g)
                }
            }
        }
    }
}

/// The subproblem a strategy picks in `t`: the completion of its seeds.
pub fn select(st: &Strategy, t: &Trace) -> Subproblem {
    let g = build_graph(t);
    select_in(st, t, &g)
}

/// Like [`select`] with a prebuilt graph of `t`.
pub fn select_in(st: &Strategy, t: &Trace, g: &DepGraph) -> Subproblem {
    g.complete_subproblem(&st.seeds(t, g))
}
