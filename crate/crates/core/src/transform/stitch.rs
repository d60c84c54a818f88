use std::collections::{BTreeSet, HashMap};

use super::TransformError;
use crate::exec::{refresh, AppTail, AugExpr, AugNode, AugStmt, NodeId, Registry, Trace, Watermark};

/// Zips the original trace (the skeleton) with an updated subtrace. The
/// subtrace's statements are consumed left to right; `hoisted` tells how
/// many of them extraction emitted in front of each original node.
struct Stitcher<'a> {
    s: &'a BTreeSet<NodeId>,
    sub: &'a [AugStmt],
    cursor: usize,
    hoisted: HashMap<NodeId, usize>,
}

fn count_hoisted(e: &AugExpr, s: &BTreeSet<NodeId>, memo: &mut HashMap<NodeId, usize>) -> usize {
    let n = match &e.node {
        AugNode::FreeVar(_) | AugNode::BoundVar { .. } | AugNode::Literal(_) | AugNode::Lambda { .. } => 0,
        AugNode::App { func, arg, tail } => {
            let inner = count_hoisted(func, s, memo) + count_hoisted(arg, s, memo);
            match tail {
                AppTail::Beta { body, .. } => {
                    let b = count_hoisted(body, s, memo);
                    if s.contains(&func.id) {
                        inner + b
                    } else {
                        inner + 2 + b
                    }
                }
                AppTail::Opaque => inner,
            }
        }
        AugNode::Dist { param, choice, result, .. } => {
            let p = count_hoisted(param, s, memo);
            let r = count_hoisted(result, s, memo);
            if s.contains(choice) {
                p + r
            } else {
                p + 1 + r
            }
        }
    };
    memo.insert(e.id, n);
    n
}

impl<'a> Stitcher<'a> {
    fn count(&self, e: &AugExpr) -> usize {
        self.hoisted[&e.id]
    }

    /// Statement that extraction emitted right after the hoisted material
    /// of `e`.
    fn after(&self, e: &AugExpr) -> Result<&'a AugStmt, TransformError> {
        self.sub.get(self.cursor + self.count(e)).ok_or(TransformError::Misaligned(e.id))
    }

    fn hoisted_assume(&mut self, e: &AugExpr, name: Option<&str>) -> Result<AugExpr, TransformError> {
        let stmt = self.after(e)?;
        let AugStmt::Assume { name: found, expr } = stmt else {
            return Err(TransformError::Misaligned(e.id));
        };
        if name.is_some_and(|n| n != &**found) {
            return Err(TransformError::Misaligned(e.id));
        }
        let out = self.expr(e, expr)?;
        self.cursor += 1;
        Ok(out)
    }

    /// Rebuilds the node corresponding to original `o`, whose in-place
    /// counterpart in the subtrace is `i`.
    fn expr(&mut self, o: &AugExpr, i: &AugExpr) -> Result<AugExpr, TransformError> {
        let mis = || TransformError::Misaligned(o.id);
        match &o.node {
            AugNode::FreeVar(_) | AugNode::BoundVar { .. } | AugNode::Literal(_) | AugNode::Lambda { .. } => {
                Ok(i.clone())
            }
            AugNode::App { func, arg, tail } => match tail {
                AppTail::Beta { bound, body } if !self.s.contains(&func.id) => {
                    let f = self.hoisted_assume(func, None)?;
                    let a = self.hoisted_assume(arg, Some(bound))?;
                    let b = self.expr(body, i)?;
                    Ok(AugExpr {
                        id: o.id,
                        value: b.value.clone(),
                        node: AugNode::App {
                            func: Box::new(f),
                            arg: Box::new(a),
                            tail: AppTail::Beta { bound: bound.clone(), body: Box::new(b) },
                        },
                    })
                }
                _ => {
                    let AugNode::App { func: ifunc, arg: iarg, tail: itail } = &i.node else {
                        return Err(mis());
                    };
                    let f = self.expr(func, ifunc)?;
                    let a = self.expr(arg, iarg)?;
                    let tail = if self.s.contains(&func.id) {
                        itail.clone()
                    } else {
                        match (tail, itail) {
                            (AppTail::Opaque, AppTail::Opaque) => AppTail::Opaque,
                            _ => return Err(mis()),
                        }
                    };
                    Ok(AugExpr {
                        id: i.id,
                        value: i.value.clone(),
                        node: AugNode::App { func: Box::new(f), arg: Box::new(a), tail },
                    })
                }
            },
            AugNode::Dist { dist, label, param, choice, result } => {
                if self.s.contains(choice) {
                    let AugNode::Dist { param: iparam, choice: ichoice, result: iresult, .. } = &i.node else {
                        return Err(mis());
                    };
                    let p = self.expr(param, iparam)?;
                    Ok(AugExpr {
                        id: i.id,
                        value: i.value.clone(),
                        node: AugNode::Dist {
                            dist: dist.clone(),
                            label: label.clone(),
                            param: Box::new(p),
                            choice: *ichoice,
                            result: iresult.clone(),
                        },
                    })
                } else {
                    let stmt = self.after(param)?;
                    let AugStmt::Observe { param: oparam, .. } = stmt else {
                        return Err(mis());
                    };
                    let p = self.expr(param, oparam)?;
                    self.cursor += 1;
                    let r = self.expr(result, i)?;
                    Ok(AugExpr {
                        id: o.id,
                        value: r.value.clone(),
                        node: AugNode::Dist {
                            dist: dist.clone(),
                            label: label.clone(),
                            param: Box::new(p),
                            choice: *choice,
                            result: Box::new(r),
                        },
                    })
                }
            }
        }
    }
}

/// Grafts `sub` (a trace of the program extracted from `t` with node set
/// `s`) back into `t`. Values, binder ids and captured environments of the
/// result are recomputed; node ids that collide are renumbered.
pub fn stitch_trace(
    t: &Trace,
    sub: &Trace,
    s: &BTreeSet<NodeId>,
    registry: &Registry,
) -> Result<Trace, TransformError> {
    let mut memo = HashMap::new();
    let mut expected = 0;
    for stmt in &t.stmts {
        let e = match stmt {
            AugStmt::Assume { expr, .. } => expr,
            AugStmt::Observe { param, .. } => param,
        };
        expected += count_hoisted(e, s, &mut memo) + 1;
    }
    if expected != sub.stmts.len() {
        return Err(TransformError::StatementCount { expected, found: sub.stmts.len() });
    }
    let mut st = Stitcher { s, sub: &sub.stmts, cursor: 0, hoisted: memo };
    let mut out = Vec::with_capacity(t.stmts.len());
    for stmt in &t.stmts {
        match stmt {
            AugStmt::Assume { name, expr } => {
                let AugStmt::Assume { name: sname, expr: sexpr } = st.after(expr)? else {
                    return Err(TransformError::Misaligned(expr.id));
                };
                if sname != name {
                    return Err(TransformError::Misaligned(expr.id));
                }
                let e = st.expr(expr, sexpr)?;
                st.cursor += 1;
                out.push(AugStmt::Assume { name: name.clone(), expr: e });
            }
            AugStmt::Observe { dist, label, param, obs, value } => {
                let AugStmt::Observe { param: sparam, .. } = st.after(param)? else {
                    return Err(TransformError::Misaligned(*obs));
                };
                let p = st.expr(param, sparam)?;
                st.cursor += 1;
                out.push(AugStmt::Observe {
                    dist: dist.clone(),
                    label: label.clone(),
                    param: p,
                    obs: *obs,
                    value: value.clone(),
                });
            }
        }
    }
    let mut wm = Watermark::of_trace(t).max(Watermark::of_trace(sub));
    Ok(refresh(&Trace { stmts: out }, registry, Some(&mut wm))?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::depgraph::build_graph;
    use crate::exec::{enumerate_all, revalidate, trace_equal_mod_ids};
    use crate::lang::parse_program;
    use crate::transform::extract_trace;

    #[test]
    fn stitching_the_unchanged_subtrace_restores_the_trace() {
        let src = "(assume f (lambda (q) (flip q))) (assume a (f 1/4)) (assume b (f 3/4)) \
                   (observe (flip (if a 1/3 2/3)) b)";
        let reg = Registry::builtin();
        for t in enumerate_all(&parse_program(src).unwrap(), &reg, 100, Watermark::default()).unwrap() {
            let g = build_graph(&t);
            for &c in g.choices() {
                let sub = g.complete_subproblem(&BTreeSet::from([c]));
                let st = extract_trace(&t, &sub.nodes, &reg).unwrap();
                let back = stitch_trace(&t, &st.trace, &sub.nodes, &reg).unwrap();
                assert_eq!(back, t);
                revalidate(&back, &reg).unwrap();
            }
        }
    }

    #[test]
    fn stitching_an_alternative_changes_only_the_subproblem() {
        let src = "(assume x (flip 3/10)) (assume y (flip 1/2)) (observe (flip (if x 9/10 1/10)) #t)";
        let reg = Registry::builtin();
        let ts = enumerate_all(&parse_program(src).unwrap(), &reg, 100, Watermark::default()).unwrap();
        let t = &ts[0];
        let g = build_graph(t);
        let sub = g.complete_subproblem(&BTreeSet::from([g.choices()[0]]));
        let st = extract_trace(t, &sub.nodes, &reg).unwrap();
        let alts = enumerate_all(&st.program, &reg, 100, Watermark::of_trace(t)).unwrap();
        assert_eq!(alts.len(), 2);
        let back = stitch_trace(t, &alts[1], &sub.nodes, &reg).unwrap();
        assert!(trace_equal_mod_ids(&back, &ts[2]));
    }

    #[test]
    fn wrong_shape_is_rejected() {
        let reg = Registry::builtin();
        let t = enumerate_all(&parse_program("(assume x (flip 1/2))").unwrap(), &reg, 10, Watermark::default())
            .unwrap()
            .remove(0);
        let s = BTreeSet::new();
        let err = stitch_trace(&t, &Trace::default(), &s, &reg).unwrap_err();
        assert!(matches!(err, TransformError::StatementCount { expected: 2, found: 0 }));
    }
}
