//! Dependence graphs over trace nodes and subproblem validity.
//!
//! Edges point from producer to consumer. A data edge means the consumer's
//! value is computed from the producer's; an existential edge means the
//! consumer only exists because of the producer's value.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write;

use thiserror::Error;

use crate::exec::{AppTail, AugExpr, AugNode, AugStmt, NodeId, Trace};
use crate::lang::Ident;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum NodeKind {
    /// Deterministically computed from its data predecessors.
    Det,
    /// A random choice or an observation.
    Sample,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum EdgeKind {
    Data,
    Existential,
}

#[derive(Clone, Debug, Default)]
pub struct DepGraph {
    kinds: BTreeMap<NodeId, NodeKind>,
    edges: BTreeSet<(NodeId, NodeId, EdgeKind)>,
    succ: BTreeMap<NodeId, Vec<(NodeId, EdgeKind)>>,
    pred: BTreeMap<NodeId, Vec<(NodeId, EdgeKind)>>,
    labels: BTreeMap<NodeId, Ident>,
    choices: Vec<NodeId>,
    observations: BTreeSet<NodeId>,
    descriptions: BTreeMap<NodeId, String>,
}

/// Why a node set is not a valid subproblem.
#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum Violation {
    #[error("node {0} is not in the graph")]
    UnknownNode(NodeId),
    #[error("existential edge {0} -> {1} leaves the subproblem")]
    ExistentialOut(NodeId, NodeId),
    #[error("data edge {0} -> {1} leaves the subproblem into a deterministic node")]
    DataToDet(NodeId, NodeId),
}

/// A valid subproblem with its absorbing and boundary sets.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Subproblem {
    pub nodes: BTreeSet<NodeId>,
    /// Sample nodes outside the subproblem read by it.
    pub absorbing: BTreeSet<NodeId>,
    /// Nodes outside the subproblem that feed data into it.
    pub boundary: BTreeSet<NodeId>,
}

impl DepGraph {
    pub fn kind(&self, id: NodeId) -> Option<NodeKind> {
        self.kinds.get(&id).copied()
    }

    pub fn nodes(&self) -> impl Iterator<Item = (NodeId, NodeKind)> + '_ {
        self.kinds.iter().map(|(k, v)| (*k, *v))
    }

    pub fn node_count(&self) -> usize {
        self.kinds.len()
    }

    pub fn edges(&self) -> impl Iterator<Item = (NodeId, NodeId, EdgeKind)> + '_ {
        self.edges.iter().copied()
    }

    pub fn has_edge(&self, from: NodeId, to: NodeId, kind: EdgeKind) -> bool {
        self.edges.contains(&(from, to, kind))
    }

    pub fn successors(&self, id: NodeId) -> &[(NodeId, EdgeKind)] {
        self.succ.get(&id).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn predecessors(&self, id: NodeId) -> &[(NodeId, EdgeKind)] {
        self.pred.get(&id).map(Vec::as_slice).unwrap_or(&[])
    }

    /// Label of a Sample node.
    pub fn label(&self, id: NodeId) -> Option<&Ident> {
        self.labels.get(&id)
    }

    /// Choice nodes of distribution calls in evaluation order; observations
    /// are excluded.
    pub fn choices(&self) -> &[NodeId] {
        &self.choices
    }

    pub fn is_observation(&self, id: NodeId) -> bool {
        self.observations.contains(&id)
    }

    fn node(&mut self, id: NodeId, kind: NodeKind, descr: String) {
        self.kinds.insert(id, kind);
        self.descriptions.insert(id, descr);
    }

    fn edge(&mut self, from: NodeId, to: NodeId, kind: EdgeKind) {
        if self.edges.insert((from, to, kind)) {
            self.succ.entry(from).or_default().push((to, kind));
            self.pred.entry(to).or_default().push((from, kind));
        }
    }

    fn expr(&mut self, e: &AugExpr) {
        match &e.node {
            AugNode::FreeVar(x) => self.node(e.id, NodeKind::Det, x.to_string()),
            AugNode::BoundVar { name, binder } => {
                self.node(e.id, NodeKind::Det, name.to_string());
                self.edge(*binder, e.id, EdgeKind::Data);
            }
            AugNode::Literal(r) => self.node(e.id, NodeKind::Det, crate::format_rational(r)),
            AugNode::Lambda { param, .. } => self.node(e.id, NodeKind::Det, format!("lambda {param}")),
            AugNode::App { func, arg, tail } => {
                self.expr(func);
                self.expr(arg);
                match tail {
                    AppTail::Opaque => {
                        self.node(e.id, NodeKind::Det, "app (stuck)".into());
                        self.edge(func.id, e.id, EdgeKind::Data);
                        self.edge(arg.id, e.id, EdgeKind::Data);
                    }
                    AppTail::Beta { bound, body } => {
                        self.node(e.id, NodeKind::Det, format!("app {bound}"));
                        self.expr(body);
                        self.edge(func.id, e.id, EdgeKind::Data);
                        self.edge(body.id, e.id, EdgeKind::Data);
                        for n in subtree_ids(body) {
                            self.edge(func.id, n, EdgeKind::Existential);
                        }
                    }
                }
            }
            AugNode::Dist { dist, label, param, choice, result } => {
                self.node(e.id, NodeKind::Det, format!("dist {dist}"));
                self.node(*choice, NodeKind::Sample, format!("choice {label}"));
                self.labels.insert(*choice, label.clone());
                self.choices.push(*choice);
                self.expr(param);
                self.expr(result);
                self.edge(param.id, *choice, EdgeKind::Data);
                for n in subtree_ids(result) {
                    self.edge(*choice, n, EdgeKind::Existential);
                }
                self.edge(result.id, e.id, EdgeKind::Data);
                self.edge(*choice, e.id, EdgeKind::Data);
            }
        }
    }

    /// Valid subproblems emit no existential edges and only emit data edges
    /// into Sample nodes.
    pub fn check_subproblem(&self, s: &BTreeSet<NodeId>) -> Result<Subproblem, Vec<Violation>> {
        let mut violations = Vec::new();
        for &n in s {
            if !self.kinds.contains_key(&n) {
                violations.push(Violation::UnknownNode(n));
                continue;
            }
            for &(m, kind) in self.successors(n) {
                if s.contains(&m) {
                    continue;
                }
                match kind {
                    EdgeKind::Existential => violations.push(Violation::ExistentialOut(n, m)),
                    EdgeKind::Data if self.kinds[&m] == NodeKind::Det => violations.push(Violation::DataToDet(n, m)),
                    EdgeKind::Data => {}
                }
            }
        }
        if !violations.is_empty() {
            return Err(violations);
        }
        let mut absorbing = BTreeSet::new();
        let mut boundary = BTreeSet::new();
        for &n in s {
            for &(m, kind) in self.successors(n) {
                if kind == EdgeKind::Data && !s.contains(&m) {
                    absorbing.insert(m);
                }
            }
            for &(m, kind) in self.predecessors(n) {
                if kind == EdgeKind::Data && !s.contains(&m) {
                    boundary.insert(m);
                }
            }
        }
        Ok(Subproblem { nodes: s.clone(), absorbing, boundary })
    }

    /// Smallest superset of `seeds` closed under existential successors and
    /// data successors that are deterministic. Closed sets are closed under
    /// intersection, so this closure is the unique minimal valid superset.
    pub fn complete_subproblem(&self, seeds: &BTreeSet<NodeId>) -> Subproblem {
        let mut s: BTreeSet<NodeId> = BTreeSet::new();
        let mut work: Vec<NodeId> = seeds.iter().copied().filter(|n| self.kinds.contains_key(n)).collect();
        while let Some(n) = work.pop() {
            if !s.insert(n) {
                continue;
            }
            for &(m, kind) in self.successors(n) {
                let take = match kind {
                    EdgeKind::Existential => true,
                    EdgeKind::Data => self.kinds[&m] == NodeKind::Det,
                };
                if take && !s.contains(&m) {
                    work.push(m);
                }
            }
        }
        self.check_subproblem(&s).expect("closure is a valid subproblem")
    }

    /// Graphviz rendering. Sample nodes are shaded and existential edges
    /// are dashed.
    pub fn to_dot(&self) -> String {
        let mut out = String::from("digraph trace {\n  node [shape=box, fontname=\"monospace\"];\n");
        for (id, kind) in &self.kinds {
            let descr = self.descriptions.get(id).map(String::as_str).unwrap_or("");
            let text = format!("{} {}", id.0, descr).replace('\\', "\\\\").replace('"', "\\\"");
            let style = match kind {
                NodeKind::Sample => ", style=filled, fillcolor=\"#cccccc\"",
                NodeKind::Det => "",
            };
            let _ = writeln!(out, "  n{} [label=\"{}\"{}];", id.0, text, style);
        }
        for (from, to, kind) in &self.edges {
            let style = match kind {
                EdgeKind::Data => "",
                EdgeKind::Existential => " [style=dashed]",
            };
            let _ = writeln!(out, "  n{} -> n{}{};", from.0, to.0, style);
        }
        out.push_str("}\n");
        out
    }
}

/// Ids of every node under `e`, choice nodes included.
fn subtree_ids(e: &AugExpr) -> Vec<NodeId> {
    let mut ids = Vec::new();
    e.visit(&mut |n| {
        ids.push(n.id);
        if let AugNode::Dist { choice, .. } = &n.node {
            ids.push(*choice);
        }
    });
    ids
}

/// Builds the dependence graph of a trace.
pub fn build_graph(t: &Trace) -> DepGraph {
    let mut g = DepGraph::default();
    for s in &t.stmts {
        match s {
            AugStmt::Assume { expr, .. } => g.expr(expr),
            AugStmt::Observe { label, param, obs, .. } => {
                g.expr(param);
                g.node(*obs, NodeKind::Sample, format!("observe {label}"));
                g.labels.insert(*obs, label.clone());
                g.observations.insert(*obs);
                g.edge(param.id, *obs, EdgeKind::Data);
            }
        }
    }
    g
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exec::{execute, RandomSource, Registry};
    use crate::lang::parse_program;

    fn graph(src: &str) -> (Trace, DepGraph) {
        let t = execute(&parse_program(src).unwrap(), &Registry::builtin(), &mut RandomSource::seed(1)).unwrap();
        let g = build_graph(&t);
        (t, g)
    }

    fn dist_parts(e: &AugExpr) -> (NodeId, NodeId, NodeId, NodeId) {
        let AugNode::Dist { param, choice, result, .. } = &e.node else { panic!() };
        (e.id, param.id, *choice, result.id)
    }

    #[test]
    fn dist_edges() {
        let (t, g) = graph("(assume x (flip 1/2))");
        let AugStmt::Assume { expr, .. } = &t.stmts[0] else { panic!() };
        let (d, p, c, r) = dist_parts(expr);
        assert_eq!(g.kind(c), Some(NodeKind::Sample));
        assert!(g.has_edge(p, c, EdgeKind::Data));
        assert!(g.has_edge(c, r, EdgeKind::Existential));
        assert!(g.has_edge(r, d, EdgeKind::Data));
        assert!(g.has_edge(c, d, EdgeKind::Data));
        assert_eq!(g.label(c).map(|l| l.to_string()), Some("x".into()));
    }

    #[test]
    fn beta_edges() {
        let (t, g) = graph("(assume y ((lambda (a) a) 2))");
        let AugStmt::Assume { expr, .. } = &t.stmts[0] else { panic!() };
        let AugNode::App { func, arg, tail: AppTail::Beta { body, .. } } = &expr.node else { panic!() };
        assert!(g.has_edge(func.id, expr.id, EdgeKind::Data));
        assert!(g.has_edge(body.id, expr.id, EdgeKind::Data));
        assert!(g.has_edge(func.id, body.id, EdgeKind::Existential));
        assert!(g.has_edge(arg.id, body.id, EdgeKind::Data));
        assert!(!g.has_edge(arg.id, expr.id, EdgeKind::Data));
    }

    #[test]
    fn choices_inside_reduced_bodies_are_controlled_by_the_operator() {
        let (t, g) = graph("(assume v (if #t (flip 1/3) #f))");
        let AugStmt::Assume { expr, .. } = &t.stmts[0] else { panic!() };
        let AugNode::App { func, .. } = &expr.node else { panic!() };
        assert_eq!(g.choices().len(), 1);
        assert!(g.has_edge(func.id, g.choices()[0], EdgeKind::Existential));
    }

    #[test]
    fn observation_is_sample_fed_by_parameter() {
        let (t, g) = graph("(assume x (flip 3/10)) (observe (flip (if x 9/10 1/10)) #t)");
        let AugStmt::Observe { param, obs, .. } = &t.stmts[1] else { panic!() };
        assert_eq!(g.kind(*obs), Some(NodeKind::Sample));
        assert!(g.has_edge(param.id, *obs, EdgeKind::Data));
        assert!(g.is_observation(*obs));
        assert_eq!(g.choices().len(), 1);
    }

    #[test]
    fn completion_of_single_choice() {
        let (t, g) = graph("(assume x (flip 3/10)) (observe (flip (if x 9/10 1/10)) #t)");
        let c = g.choices()[0];
        let sub = g.complete_subproblem(&BTreeSet::from([c]));
        let AugStmt::Observe { obs, .. } = &t.stmts[1] else { panic!() };
        assert!(!sub.nodes.contains(obs));
        assert_eq!(sub.absorbing, BTreeSet::from([*obs]));
        let AugStmt::Assume { expr, .. } = &t.stmts[0] else { panic!() };
        let (d, p, _, r) = dist_parts(expr);
        assert!(sub.nodes.contains(&d) && sub.nodes.contains(&r));
        assert!(!sub.nodes.contains(&p));
        assert!(sub.boundary.contains(&p));
    }

    #[test]
    fn violations_are_reported() {
        let (_, g) = graph("(assume x (flip 1/2))");
        let c = g.choices()[0];
        let errs = g.check_subproblem(&BTreeSet::from([c])).unwrap_err();
        assert!(errs.iter().any(|v| matches!(v, Violation::ExistentialOut(..))));
        assert!(errs.iter().any(|v| matches!(v, Violation::DataToDet(..))));
        let errs = g.check_subproblem(&BTreeSet::from([NodeId(999)])).unwrap_err();
        assert_eq!(errs, vec![Violation::UnknownNode(NodeId(999))]);
    }

    #[test]
    fn dot_marks_samples_and_existentials() {
        let (_, g) = graph("(assume x (flip 1/2))");
        let dot = g.to_dot();
        assert!(dot.contains("fillcolor"));
        assert!(dot.contains("style=dashed"));
    }
}
