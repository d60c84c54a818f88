use std::collections::{BTreeSet, HashMap};

use crate::exec::{AppTail, AugExpr, AugNode, AugStmt, NodeId, Trace};
use crate::lang::{is_generated, Expr, Ident};

/// Pairs generated names of the two traces one-to-one as they are met.
#[derive(Default)]
struct Names {
    fwd: HashMap<Ident, Ident>,
    bwd: HashMap<Ident, Ident>,
}

impl Names {
    fn same(&mut self, a: &Ident, b: &Ident) -> bool {
        if !is_generated(a) || !is_generated(b) {
            return a == b;
        }
        match (self.fwd.get(a), self.bwd.get(b)) {
            (Some(x), Some(y)) => x == b && y == a,
            (None, None) => {
                self.fwd.insert(a.clone(), b.clone());
                self.bwd.insert(b.clone(), a.clone());
                true
            }
            _ => false,
        }
    }

    fn expr(&mut self, a: &Expr, b: &Expr) -> bool {
        match (a, b) {
            (Expr::Var(x), Expr::Var(y)) => self.same(x, y),
            (Expr::Literal(x), Expr::Literal(y)) => x == y,
            (Expr::Lambda { param: p, body: bp }, Expr::Lambda { param: q, body: bq }) => {
                self.same(p, q) && self.expr(bp, bq)
            }
            (Expr::App { func: f1, arg: a1 }, Expr::App { func: f2, arg: a2 }) => {
                self.expr(f1, f2) && self.expr(a1, a2)
            }
            (Expr::Dist(c1), Expr::Dist(c2)) => {
                c1.dist == c2.dist && c1.label == c2.label && self.expr(&c1.param, &c2.param)
            }
            _ => false,
        }
    }
}

struct Equiv<'a> {
    s: &'a BTreeSet<NodeId>,
    names: Names,
}

impl Equiv<'_> {
    fn expr(&mut self, a: &AugExpr, b: &AugExpr) -> bool {
        match (&a.node, &b.node) {
            (AugNode::FreeVar(x), AugNode::FreeVar(y)) => self.names.same(x, y),
            (AugNode::BoundVar { name: x, .. }, AugNode::BoundVar { name: y, .. }) => self.names.same(x, y),
            (AugNode::Literal(x), AugNode::Literal(y)) => x == y,
            (AugNode::Lambda { param: p, body: bp }, AugNode::Lambda { param: q, body: bq }) => {
                self.names.same(p, q) && self.names.expr(bp, bq)
            }
            (
                AugNode::App { func: f1, arg: a1, tail: t1 },
                AugNode::App { func: f2, arg: a2, tail: t2 },
            ) => {
                if !(self.expr(f1, f2) && self.expr(a1, a2)) {
                    return false;
                }
                if self.s.contains(&f1.id) {
                    return true;
                }
                match (t1, t2) {
                    (AppTail::Opaque, AppTail::Opaque) => true,
                    (AppTail::Beta { bound: x, body: b1 }, AppTail::Beta { bound: y, body: b2 }) => {
                        self.names.same(x, y) && self.expr(b1, b2)
                    }
                    _ => false,
                }
            }
            (
                AugNode::Dist { dist: d1, label: l1, param: p1, choice, result: r1 },
                AugNode::Dist { dist: d2, label: l2, param: p2, result: r2, .. },
            ) => {
                if d1 != d2 || l1 != l2 || !self.expr(p1, p2) {
                    return false;
                }
                self.s.contains(choice) || self.expr(r1, r2)
            }
            _ => false,
        }
    }

    fn trace(&mut self, a: &Trace, b: &Trace) -> bool {
        a.stmts.len() == b.stmts.len()
            && a.stmts.iter().zip(&b.stmts).all(|pair| match pair {
                (AugStmt::Assume { name: x, expr: e1 }, AugStmt::Assume { name: y, expr: e2 }) => {
                    self.names.same(x, y) && self.expr(e1, e2)
                }
                (
                    AugStmt::Observe { dist: d1, label: l1, param: p1, value: v1, .. },
                    AugStmt::Observe { dist: d2, label: l2, param: p2, value: v2, .. },
                ) => d1 == d2 && l1 == l2 && self.names.expr(v1, v2) && self.expr(p1, p2),
                _ => false,
            })
    }
}

/// Whether `u` agrees with `t` outside the subproblem `s` (given as node
/// ids of `t`). Inside `s`, choice outcomes and the bodies of applications
/// with an operator in `s` may differ. Node ids and values are ignored;
/// generated names are compared up to a consistent renaming.
pub fn equiv(s: &BTreeSet<NodeId>, t: &Trace, u: &Trace) -> bool {
    Equiv { s, names: Names::default() }.trace(t, u)
}
