use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::sync::Arc;

use num_traits::Zero;
use thiserror::Error;

use super::registry::{DistError, Outcome, Registry};
use super::rng::RandomSource;
use super::trace::{AppTail, AugExpr, AugNode, AugStmt, Binding, Closure, NodeId, Trace, Value, Watermark};
use crate::lang::{alpha_eq, generated_index, ident, Expr, Ident, Program, Stmt};
use crate::rational_to_f64;

/// Maximum nesting of evaluation before execution is abandoned.
pub const MAX_DEPTH: usize = 2000;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ExecError {
    #[error("distribution `{label}` at node {node}: {source}")]
    Dist {
        label: String,
        node: NodeId,
        #[source]
        source: DistError,
    },
    #[error("evaluation nested deeper than {MAX_DEPTH} levels")]
    TooDeep,
    #[error("program has more than {cap} traces")]
    CapExceeded { cap: usize },
}

/// Picks an outcome index for each choice.
pub trait Chooser {
    fn choose(&mut self, outcomes: &[Outcome]) -> usize;
}

/// Samples by inverse CDF from a single uniform draw. Outcomes of
/// probability zero are never picked.
pub struct Sampler<'a>(pub &'a mut RandomSource);

impl Chooser for Sampler<'_> {
    fn choose(&mut self, outcomes: &[Outcome]) -> usize {
        let u = self.0.uniform();
        let mut cum = 0.0;
        let mut last = 0;
        for (i, o) in outcomes.iter().enumerate() {
            if o.prob.is_zero() {
                continue;
            }
            cum += rational_to_f64(&o.prob);
            last = i;
            if u < cum {
                return i;
            }
        }
        last
    }
}

/// Follows a fixed script of outcome indices and records the branching
/// factor at every choice; choices past the script take index 0.
#[derive(Default)]
pub struct Scripted {
    script: Vec<usize>,
    record: Vec<(usize, usize)>,
}

impl Scripted {
    pub fn new(script: Vec<usize>) -> Self {
        Scripted { script, record: Vec::new() }
    }

    /// Indices taken so far.
    pub fn taken(&self) -> Vec<usize> {
        self.record.iter().map(|(i, _)| *i).collect()
    }
}

impl Chooser for Scripted {
    fn choose(&mut self, outcomes: &[Outcome]) -> usize {
        let pos = self.record.len();
        let i = self.script.get(pos).copied().unwrap_or(0).min(outcomes.len().saturating_sub(1));
        self.record.push((i, outcomes.len()));
        i
    }
}

/// Supply of generated names `%N` avoiding a reserved set.
#[derive(Clone, Debug)]
pub struct NameSupply {
    next: u64,
    avoid: BTreeSet<Ident>,
}

impl NameSupply {
    pub fn new(next: u64, avoid: BTreeSet<Ident>) -> Self {
        let floor = avoid.iter().filter_map(|n| generated_index(n)).map(|i| i + 1).max().unwrap_or(0);
        NameSupply { next: next.max(floor), avoid }
    }

    pub fn fresh(&mut self) -> Ident {
        loop {
            let name = ident(&format!("%{}", self.next));
            self.next += 1;
            if !self.avoid.contains(&name) {
                return name;
            }
        }
    }

    pub fn peek_next(&self) -> u64 {
        self.next
    }
}

type Env = BTreeMap<Ident, Binding>;

struct Executor<'a> {
    registry: &'a Registry,
    chooser: &'a mut dyn Chooser,
    next_id: u64,
    names: NameSupply,
    depth: usize,
}

impl Executor<'_> {
    fn alloc(&mut self) -> NodeId {
        let id = NodeId(self.next_id);
        self.next_id += 1;
        id
    }

    fn eval(&mut self, e: &Expr, env: &Env) -> Result<AugExpr, ExecError> {
        self.depth += 1;
        if self.depth > MAX_DEPTH {
            return Err(ExecError::TooDeep);
        }
        let r = self.eval_inner(e, env);
        self.depth -= 1;
        r
    }

    fn eval_inner(&mut self, e: &Expr, env: &Env) -> Result<AugExpr, ExecError> {
        let id = self.alloc();
        Ok(match e {
            Expr::Var(x) => match env.get(x) {
                Some(b) => AugExpr {
                    id,
                    value: b.value.clone(),
                    node: AugNode::BoundVar { name: x.clone(), binder: b.id },
                },
                None => AugExpr { id, value: Value::Symbol(x.clone()), node: AugNode::FreeVar(x.clone()) },
            },
            Expr::Literal(r) => AugExpr { id, value: Value::Rational(r.clone()), node: AugNode::Literal(r.clone()) },
            Expr::Lambda { param, body } => AugExpr {
                id,
                value: make_closure(param, body, env),
                node: AugNode::Lambda { param: param.clone(), body: body.clone() },
            },
            Expr::App { func, arg } => {
                let f = self.eval(func, env)?;
                let a = self.eval(arg, env)?;
                match &f.value {
                    Value::Closure(c) => {
                        let c = c.clone();
                        let bound = self.names.fresh();
                        let body = c.body.rename_free(&c.param, &bound);
                        let mut inner = c.env.clone();
                        inner.insert(bound.clone(), Binding { value: a.value.clone(), id: a.id });
                        let b = self.eval(&body, &inner)?;
                        AugExpr {
                            id,
                            value: b.value.clone(),
                            node: AugNode::App {
                                func: Box::new(f),
                                arg: Box::new(a),
                                tail: AppTail::Beta { bound, body: Box::new(b) },
                            },
                        }
                    }
                    _ => AugExpr {
                        id,
                        value: Value::Stuck(Arc::new(f.value.clone()), Arc::new(a.value.clone())),
                        node: AugNode::App { func: Box::new(f), arg: Box::new(a), tail: AppTail::Opaque },
                    },
                }
            }
            Expr::Dist(call) => {
                let choice = self.alloc();
                let param = self.eval(&call.param, env)?;
                let outcomes = self.registry.outcomes(&call.dist, &param.value).map_err(|source| {
                    ExecError::Dist { label: call.label.to_string(), node: id, source }
                })?;
                let i = self.chooser.choose(&outcomes);
                let result = self.eval(&outcomes[i].expr, env)?;
                AugExpr {
                    id,
                    value: result.value.clone(),
                    node: AugNode::Dist {
                        dist: call.dist.clone(),
                        label: call.label.clone(),
                        param: Box::new(param),
                        choice,
                        result: Box::new(result),
                    },
                }
            }
        })
    }

    fn run(&mut self, p: &Program) -> Result<Trace, ExecError> {
        let mut env = Env::new();
        let mut stmts = Vec::with_capacity(p.stmts.len());
        for s in &p.stmts {
            match s {
                Stmt::Assume { name, expr } => {
                    let ae = self.eval(expr, &env)?;
                    env.insert(name.clone(), Binding { value: ae.value.clone(), id: ae.id });
                    stmts.push(AugStmt::Assume { name: name.clone(), expr: ae });
                }
                Stmt::Observe { call, value } => {
                    let obs = self.alloc();
                    let param = self.eval(&call.param, &env)?;
                    self.registry.outcomes(&call.dist, &param.value).map_err(|source| ExecError::Dist {
                        label: call.label.to_string(),
                        node: obs,
                        source,
                    })?;
                    stmts.push(AugStmt::Observe {
                        dist: call.dist.clone(),
                        label: call.label.clone(),
                        param,
                        obs,
                        value: value.clone(),
                    });
                }
            }
        }
        Ok(Trace { stmts })
    }
}

fn make_closure(param: &Ident, body: &Arc<Expr>, env: &Env) -> Value {
    let lam = Expr::Lambda { param: param.clone(), body: body.clone() };
    let captured = lam
        .free_variables()
        .into_iter()
        .filter_map(|x| env.get(&x).map(|b| (x, b.clone())))
        .collect();
    Value::Closure(Arc::new(Closure { param: param.clone(), body: body.clone(), env: captured }))
}

/// Executes `p` with ids and generated names allocated from `start`.
pub fn execute_with(
    p: &Program,
    registry: &Registry,
    chooser: &mut dyn Chooser,
    start: Watermark,
) -> Result<(Trace, Watermark), ExecError> {
    let mut ex = Executor {
        registry,
        chooser,
        next_id: start.next_id,
        names: NameSupply::new(start.next_name, p.names()),
        depth: 0,
    };
    let t = ex.run(p)?;
    let end = Watermark { next_id: ex.next_id, next_name: ex.names.peek_next() };
    Ok((t, end))
}

/// Samples a trace of `p` by forward execution.
pub fn execute(p: &Program, registry: &Registry, rng: &mut RandomSource) -> Result<Trace, ExecError> {
    execute_with(p, registry, &mut Sampler(rng), Watermark::default()).map(|(t, _)| t)
}

/// Every trace of `p`, one per path through the full support of each
/// choice (zero-probability outcomes included), in depth-first order.
pub fn enumerate_all(p: &Program, registry: &Registry, cap: usize, start: Watermark) -> Result<Vec<Trace>, ExecError> {
    Ok(enumerate_paths(p, registry, cap, start)?.into_iter().map(|(_, t)| t).collect())
}

/// Like [`enumerate_all`], pairing each trace with the outcome indices
/// that reproduce it through [`Scripted`].
pub fn enumerate_paths(
    p: &Program,
    registry: &Registry,
    cap: usize,
    start: Watermark,
) -> Result<Vec<(Vec<usize>, Trace)>, ExecError> {
    let mut out = Vec::new();
    let mut script = Vec::new();
    loop {
        let mut chooser = Scripted { script: std::mem::take(&mut script), record: Vec::new() };
        let (t, _) = execute_with(p, registry, &mut chooser, start)?;
        if out.len() == cap {
            return Err(ExecError::CapExceeded { cap });
        }
        out.push((chooser.taken(), t));
        let rec = chooser.record;
        match rec.iter().rposition(|(i, n)| i + 1 < *n) {
            Some(k) => {
                script = rec[..k].iter().map(|(i, _)| *i).collect();
                script.push(rec[k].0 + 1);
            }
            None => return Ok(out),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ReplayError {
    #[error("node {0}: variable `{1}` is not bound")]
    Unbound(NodeId, String),
    #[error("node {0}: free variable `{1}` is shadowed by a binding")]
    Captured(NodeId, String),
    #[error("node {0}: application tail does not match its operator")]
    TailMismatch(NodeId),
    #[error("node {0}: outcome is outside the support of `{1}`")]
    OutsideSupport(NodeId, String),
    #[error("node {0}: {1}")]
    Dist(NodeId, DistError),
    #[error("node {0}: duplicate node id")]
    DuplicateId(NodeId),
    #[error("node {0}: stored annotation differs from recomputed one")]
    Mismatch(NodeId),
}

struct Refresher<'a> {
    registry: &'a Registry,
    seen: HashSet<NodeId>,
    fresh_ids: Option<&'a mut Watermark>,
}

impl Refresher<'_> {
    fn id(&mut self, id: NodeId) -> Result<NodeId, ReplayError> {
        if self.seen.insert(id) {
            return Ok(id);
        }
        match self.fresh_ids.as_deref_mut() {
            Some(w) => {
                let new = NodeId(w.next_id);
                w.next_id += 1;
                self.seen.insert(new);
                Ok(new)
            }
            None => Err(ReplayError::DuplicateId(id)),
        }
    }

    fn expr(&mut self, e: &AugExpr, env: &Env) -> Result<AugExpr, ReplayError> {
        let id = self.id(e.id)?;
        Ok(match &e.node {
            AugNode::FreeVar(x) => {
                if env.contains_key(x) {
                    return Err(ReplayError::Captured(id, x.to_string()));
                }
                AugExpr { id, value: Value::Symbol(x.clone()), node: e.node.clone() }
            }
            AugNode::BoundVar { name, .. } => {
                let b = env.get(name).ok_or_else(|| ReplayError::Unbound(id, name.to_string()))?;
                AugExpr { id, value: b.value.clone(), node: AugNode::BoundVar { name: name.clone(), binder: b.id } }
            }
            AugNode::Literal(r) => AugExpr { id, value: Value::Rational(r.clone()), node: e.node.clone() },
            AugNode::Lambda { param, body } => {
                AugExpr { id, value: make_closure(param, body, env), node: e.node.clone() }
            }
            AugNode::App { func, arg, tail } => {
                let f = self.expr(func, env)?;
                let a = self.expr(arg, env)?;
                match (&f.value, tail) {
                    (Value::Closure(c), AppTail::Beta { bound, body }) => {
                        let expected = c.body.rename_free(&c.param, bound);
                        if body.rollback() != expected || env.contains_key(bound) {
                            return Err(ReplayError::TailMismatch(id));
                        }
                        let mut inner = c.env.clone();
                        inner.insert(bound.clone(), Binding { value: a.value.clone(), id: a.id });
                        let b = self.expr(body, &inner)?;
                        AugExpr {
                            id,
                            value: b.value.clone(),
                            node: AugNode::App {
                                func: Box::new(f),
                                arg: Box::new(a),
                                tail: AppTail::Beta { bound: bound.clone(), body: Box::new(b) },
                            },
                        }
                    }
                    (Value::Closure(_), AppTail::Opaque) | (_, AppTail::Beta { .. }) => {
                        return Err(ReplayError::TailMismatch(id))
                    }
                    (_, AppTail::Opaque) => AugExpr {
                        id,
                        value: Value::Stuck(Arc::new(f.value.clone()), Arc::new(a.value.clone())),
                        node: AugNode::App { func: Box::new(f), arg: Box::new(a), tail: AppTail::Opaque },
                    },
                }
            }
            AugNode::Dist { dist, label, param, choice, result } => {
                let choice = self.id(*choice)?;
                let p = self.expr(param, env)?;
                let outcomes = self.registry.outcomes(dist, &p.value).map_err(|err| ReplayError::Dist(id, err))?;
                let taken = result.rollback();
                if !outcomes.iter().any(|o| alpha_eq(&o.expr, &taken)) {
                    return Err(ReplayError::OutsideSupport(id, dist.to_string()));
                }
                let r = self.expr(result, env)?;
                AugExpr {
                    id,
                    value: r.value.clone(),
                    node: AugNode::Dist {
                        dist: dist.clone(),
                        label: label.clone(),
                        param: Box::new(p),
                        choice,
                        result: Box::new(r),
                    },
                }
            }
        })
    }

    fn trace(&mut self, t: &Trace) -> Result<Trace, ReplayError> {
        let mut env = Env::new();
        let mut stmts = Vec::with_capacity(t.stmts.len());
        for s in &t.stmts {
            match s {
                AugStmt::Assume { name, expr } => {
                    let ae = self.expr(expr, &env)?;
                    env.insert(name.clone(), Binding { value: ae.value.clone(), id: ae.id });
                    stmts.push(AugStmt::Assume { name: name.clone(), expr: ae });
                }
                AugStmt::Observe { dist, label, param, obs, value } => {
                    let obs = self.id(*obs)?;
                    let p = self.expr(param, &env)?;
                    self.registry.outcomes(dist, &p.value).map_err(|err| ReplayError::Dist(obs, err))?;
                    stmts.push(AugStmt::Observe {
                        dist: dist.clone(),
                        label: label.clone(),
                        param: p,
                        obs,
                        value: value.clone(),
                    });
                }
            }
        }
        Ok(Trace { stmts })
    }
}

/// Recomputes every value, binder id and captured environment of `t` by
/// replaying it, keeping node ids. Duplicate ids are renumbered from
/// `fresh_ids` when given, and rejected otherwise.
pub fn refresh(t: &Trace, registry: &Registry, fresh_ids: Option<&mut Watermark>) -> Result<Trace, ReplayError> {
    Refresher { registry, seen: HashSet::new(), fresh_ids }.trace(t)
}

/// Checks that `t` is exactly what replaying it produces. On failure the
/// error names the first offending node in evaluation order.
pub fn revalidate(t: &Trace, registry: &Registry) -> Result<(), ReplayError> {
    let fresh = refresh(t, registry, None)?;
    if fresh == *t {
        return Ok(());
    }
    let mut a = Vec::new();
    let mut b = Vec::new();
    t.visit(&mut |e| a.push(e));
    fresh.visit(&mut |e| b.push(e));
    for (x, y) in a.iter().zip(&b) {
        let shallow_eq = x.id == y.id
            && x.value == y.value
            && match (&x.node, &y.node) {
                (AugNode::BoundVar { binder: p, .. }, AugNode::BoundVar { binder: q, .. }) => p == q,
                _ => true,
            };
        if !shallow_eq {
            return Err(ReplayError::Mismatch(x.id));
        }
    }
    let first = a.first().map(|e| e.id).unwrap_or(NodeId(0));
    Err(ReplayError::Mismatch(first))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lang::parse_program;
    use crate::Rational;

    fn r(n: i64, d: i64) -> Rational {
        Rational::new(n.into(), d.into())
    }

    fn run(src: &str, seed: u64) -> Trace {
        execute(&parse_program(src).unwrap(), &Registry::builtin(), &mut RandomSource::seed(seed)).unwrap()
    }

    #[test]
    fn literal_assume() {
        let t = run("(assume x 1/2)", 0);
        let AugStmt::Assume { expr, .. } = &t.stmts[0] else { panic!() };
        assert_eq!(expr.value, Value::Rational(r(1, 2)));
        assert_eq!(expr.node, AugNode::Literal(r(1, 2)));
    }

    #[test]
    fn beta_application_binds_fresh_name() {
        let t = run("(assume y ((lambda (a) a) 3))", 0);
        let AugStmt::Assume { expr, .. } = &t.stmts[0] else { panic!() };
        assert_eq!(expr.value, Value::Rational(r(3, 1)));
        let AugNode::App { arg, tail: AppTail::Beta { bound, body }, .. } = &expr.node else { panic!() };
        assert!(bound.starts_with('%'));
        assert_eq!(body.node, AugNode::BoundVar { name: bound.clone(), binder: arg.id });
    }

    #[test]
    fn opaque_application_is_stuck() {
        let t = run("(assume s (g 1))", 0);
        let AugStmt::Assume { expr, .. } = &t.stmts[0] else { panic!() };
        let g = Arc::new(Value::Symbol(ident("g")));
        assert_eq!(expr.value, Value::Stuck(g, Arc::new(Value::Rational(r(1, 1)))));
    }

    #[test]
    fn ids_are_unique() {
        let t = run("(assume f (lambda (q) (flip q))) (assume a (f 1/4)) (observe (flip 1/2) a)", 3);
        let ids = t.node_ids();
        let set: HashSet<_> = ids.iter().collect();
        assert_eq!(set.len(), ids.len());
    }

    #[test]
    fn closures_capture_only_free_variables() {
        let t = run("(assume a 1) (assume b 2) (assume k (lambda (z) a))", 0);
        let AugStmt::Assume { expr, .. } = &t.stmts[2] else { panic!() };
        let Value::Closure(c) = &expr.value else { panic!() };
        assert_eq!(c.env.keys().map(|k| k.to_string()).collect::<Vec<_>>(), vec!["a"]);
    }

    #[test]
    fn enumeration_covers_full_support() {
        let p = parse_program("(assume x (flip 1)) (assume y (dist uniform-int 3))").unwrap();
        let all = enumerate_all(&p, &Registry::builtin(), 100, Watermark::default()).unwrap();
        assert_eq!(all.len(), 6);
        let keys: HashSet<_> = all.iter().map(|t| t.canonical_key()).collect();
        assert_eq!(keys.len(), 6);
        assert!(matches!(
            enumerate_all(&p, &Registry::builtin(), 5, Watermark::default()),
            Err(ExecError::CapExceeded { cap: 5 })
        ));
    }

    #[test]
    fn sampler_never_picks_zero_probability() {
        let p = parse_program("(assume x (flip 1))").unwrap();
        let mut rng = RandomSource::seed(1);
        for _ in 0..50 {
            let t = execute(&p, &Registry::builtin(), &mut rng).unwrap();
            let AugStmt::Assume { expr, .. } = &t.stmts[0] else { panic!() };
            let AugNode::Dist { result, .. } = &expr.node else { panic!() };
            assert_eq!(result.rollback(), Expr::church_true());
        }
    }

    #[test]
    fn bad_parameter_names_the_node() {
        let p = parse_program("(assume x (flip 2))").unwrap();
        let err = execute(&p, &Registry::builtin(), &mut RandomSource::seed(0)).unwrap_err();
        assert!(matches!(err, ExecError::Dist { ref label, .. } if label == "x"), "{err}");
    }

    #[test]
    fn runaway_recursion_is_reported() {
        let p = parse_program("(assume w ((lambda (x) (x x)) (lambda (x) (x x))))").unwrap();
        let err = execute(&p, &Registry::builtin(), &mut RandomSource::seed(0)).unwrap_err();
        assert_eq!(err, ExecError::TooDeep);
    }

    #[test]
    fn revalidate_accepts_executions_and_names_corruption() {
        let mut t = run("(assume x (flip 1/2)) (assume y ((lambda (a) a) x))", 4);
        revalidate(&t, &Registry::builtin()).unwrap();
        let AugStmt::Assume { expr, .. } = &mut t.stmts[1] else { panic!() };
        let AugNode::App { arg, .. } = &mut expr.node else { panic!() };
        let bad = arg.id;
        arg.value = Value::Rational(r(5, 1));
        assert_eq!(revalidate(&t, &Registry::builtin()), Err(ReplayError::Mismatch(bad)));
    }
}
