use std::collections::{BTreeMap, BTreeSet};

use super::TransformError;
use crate::exec::{refresh, AppTail, AugExpr, AugNode, AugStmt, NameSupply, NodeId, Registry, Trace, Watermark};
use crate::lang::Program;

/// An extracted subtrace together with its program. Node ids are shared
/// with the original trace; `provenance` maps each subtrace id to the
/// original node it came from.
#[derive(Clone, Debug)]
pub struct Subtrace {
    pub trace: Trace,
    pub program: Program,
    pub provenance: BTreeMap<NodeId, NodeId>,
}

struct Extractor<'a> {
    s: &'a BTreeSet<NodeId>,
    names: NameSupply,
    out: Vec<AugStmt>,
}

impl Extractor<'_> {
    fn expr(&mut self, e: &AugExpr) -> AugExpr {
        match &e.node {
            AugNode::FreeVar(_) | AugNode::BoundVar { .. } | AugNode::Literal(_) | AugNode::Lambda { .. } => e.clone(),
            AugNode::App { func, arg, tail } => match tail {
                AppTail::Beta { bound, body } if !self.s.contains(&func.id) => {
                    let func = self.expr(func);
                    let op_name = self.names.fresh();
                    self.out.push(AugStmt::Assume { name: op_name, expr: func });
                    let arg = self.expr(arg);
                    self.out.push(AugStmt::Assume { name: bound.clone(), expr: arg });
                    self.expr(body)
                }
                _ => {
                    let tail = match tail {
                        AppTail::Opaque => AppTail::Opaque,
                        AppTail::Beta { bound, body } => {
                            AppTail::Beta { bound: bound.clone(), body: Box::new(self.expr(body)) }
                        }
                    };
                    let func = Box::new(self.expr(func));
                    let arg = Box::new(self.expr(arg));
                    AugExpr { id: e.id, value: e.value.clone(), node: AugNode::App { func, arg, tail } }
                }
            },
            AugNode::Dist { dist, label, param, choice, result } => {
                if self.s.contains(choice) {
                    let param = Box::new(self.expr(param));
                    let result = Box::new(self.expr(result));
                    AugExpr {
                        id: e.id,
                        value: e.value.clone(),
                        node: AugNode::Dist { dist: dist.clone(), label: label.clone(), param, choice: *choice, result },
                    }
                } else {
                    let param = self.expr(param);
                    self.out.push(AugStmt::Observe {
                        dist: dist.clone(),
                        label: label.clone(),
                        param,
                        obs: *choice,
                        value: result.rollback(),
                    });
                    self.expr(result)
                }
            }
        }
    }
}

/// Extracts the subtrace of `t` for the node set `s`, which should be a
/// valid subproblem of `t`'s dependence graph.
pub fn extract_trace(t: &Trace, s: &BTreeSet<NodeId>, registry: &Registry) -> Result<Subtrace, TransformError> {
    let wm = Watermark::of_trace(t);
    let mut ex = Extractor { s, names: NameSupply::new(wm.next_name, BTreeSet::new()), out: Vec::new() };
    for stmt in &t.stmts {
        match stmt {
            AugStmt::Assume { name, expr } => {
                let expr = ex.expr(expr);
                ex.out.push(AugStmt::Assume { name: name.clone(), expr });
            }
            AugStmt::Observe { dist, label, param, obs, value } => {
                let param = ex.expr(param);
                ex.out.push(AugStmt::Observe {
                    dist: dist.clone(),
                    label: label.clone(),
                    param,
                    obs: *obs,
                    value: value.clone(),
                });
            }
        }
    }
    let trace = refresh(&Trace { stmts: ex.out }, registry, None)?;
    let provenance = trace.node_ids().into_iter().map(|id| (id, id)).collect();
    let program = trace.rollback();
    Ok(Subtrace { trace, program, provenance })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::depgraph::build_graph;
    use crate::exec::{enumerate_all, revalidate, AugStmt};
    use crate::lang::{parse_program, print_program};
    use crate::transform::density;

    fn setup(src: &str) -> (Vec<Trace>, Registry) {
        let reg = Registry::builtin();
        let ts = enumerate_all(&parse_program(src).unwrap(), &reg, 100, Watermark::default()).unwrap();
        (ts, reg)
    }

    #[test]
    fn unselected_choice_becomes_observation() {
        let (ts, reg) = setup("(assume x (flip 3/10)) (assume y (flip 1/2))");
        let t = &ts[0];
        let g = build_graph(t);
        let sub = g.complete_subproblem(&BTreeSet::from([g.choices()[0]]));
        let st = extract_trace(t, &sub.nodes, &reg).unwrap();
        let text = print_program(&st.program);
        assert_eq!(text, "(assume x (flip 3/10))\n(observe (flip 1/2 :label \"y\") #t)\n(assume y #t)\n");
        revalidate(&st.trace, &reg).unwrap();
        assert_eq!(density(&st.trace, &reg).unwrap(), density(t, &reg).unwrap());
        assert!(matches!(st.trace.stmts[1], AugStmt::Observe { obs, .. } if obs == g.choices()[1]));
    }

    #[test]
    fn application_outside_is_hoisted() {
        let (ts, reg) = setup("(assume f (lambda (q) (flip q))) (assume a (f 1/4))");
        let t = &ts[0];
        let g = build_graph(t);
        let sub = g.complete_subproblem(&BTreeSet::from([g.choices()[0]]));
        let st = extract_trace(t, &sub.nodes, &reg).unwrap();
        let text = print_program(&st.program);
        assert!(text.contains("(assume %"), "{text}");
        assert_eq!(st.program.stmts.len(), 4, "{text}");
        revalidate(&st.trace, &reg).unwrap();
        assert_eq!(density(&st.trace, &reg).unwrap(), density(t, &reg).unwrap());
        assert!(st.provenance.iter().all(|(a, b)| a == b));
    }
}
