use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::fmt::Write as _;
use std::sync::Arc;

use crate::lang::{generated_index, is_generated, DistCall, Expr, Ident, Program, Stmt};
use crate::Rational;

/// Identifier of a node in a trace. Unique within a trace.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId(pub u64);

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.0)
    }
}

/// A runtime value.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Value {
    /// Value of an unbound variable.
    Symbol(Ident),
    Closure(Arc<Closure>),
    /// Application whose operator is not a closure.
    Stuck(Arc<Value>, Arc<Value>),
    Rational(Rational),
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Closure {
    pub param: Ident,
    pub body: Arc<Expr>,
    /// Captured variables with their values and producing node ids.
    pub env: BTreeMap<Ident, Binding>,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Binding {
    pub value: Value,
    pub id: NodeId,
}

/// An expression node annotated with its id and value.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AugExpr {
    pub id: NodeId,
    pub value: Value,
    pub node: AugNode,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum AugNode {
    FreeVar(Ident),
    BoundVar { name: Ident, binder: NodeId },
    Literal(Rational),
    Lambda { param: Ident, body: Arc<Expr> },
    App { func: Box<AugExpr>, arg: Box<AugExpr>, tail: AppTail },
    Dist { dist: Ident, label: Ident, param: Box<AugExpr>, choice: NodeId, result: Box<AugExpr> },
}

/// How an application was reduced.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum AppTail {
    /// The operator was not a closure; the value is stuck.
    Opaque,
    /// The closure body, with its parameter renamed to the fresh `bound`.
    Beta { bound: Ident, body: Box<AugExpr> },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum AugStmt {
    Assume { name: Ident, expr: AugExpr },
    /// An observation. The constrained value is not sampled; `obs` is the
    /// node standing for the observed choice.
    Observe { dist: Ident, label: Ident, param: AugExpr, obs: NodeId, value: Expr },
}

/// A full execution record of a program.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Trace {
    pub stmts: Vec<AugStmt>,
}

impl AugExpr {
    /// Pre-order visit of every expression node.
    pub fn visit<'a>(&'a self, f: &mut dyn FnMut(&'a AugExpr)) {
        f(self);
        match &self.node {
            AugNode::App { func, arg, tail } => {
                func.visit(f);
                arg.visit(f);
                if let AppTail::Beta { body, .. } = tail {
                    body.visit(f);
                }
            }
            AugNode::Dist { param, result, .. } => {
                param.visit(f);
                result.visit(f);
            }
            _ => {}
        }
    }

    /// Expression this node was evaluated from.
    pub fn rollback(&self) -> Expr {
        match &self.node {
            AugNode::FreeVar(x) | AugNode::BoundVar { name: x, .. } => Expr::Var(x.clone()),
            AugNode::Literal(r) => Expr::Literal(r.clone()),
            AugNode::Lambda { param, body } => Expr::Lambda { param: param.clone(), body: body.clone() },
            AugNode::App { func, arg, .. } => Expr::app(func.rollback(), arg.rollback()),
            AugNode::Dist { dist, label, param, .. } => Expr::Dist(DistCall {
                dist: dist.clone(),
                param: Arc::new(param.rollback()),
                label: label.clone(),
            }),
        }
    }
}

impl Trace {
    /// Recovers the program that produced this trace.
    pub fn rollback(&self) -> Program {
        let stmts = self
            .stmts
            .iter()
            .map(|s| match s {
                AugStmt::Assume { name, expr } => Stmt::Assume { name: name.clone(), expr: expr.rollback() },
                AugStmt::Observe { dist, label, param, value, .. } => Stmt::Observe {
                    call: DistCall { dist: dist.clone(), param: Arc::new(param.rollback()), label: label.clone() },
                    value: value.clone(),
                },
            })
            .collect();
        Program { stmts }
    }

    /// Pre-order visit of every expression node, statement by statement.
    pub fn visit<'a>(&'a self, f: &mut dyn FnMut(&'a AugExpr)) {
        for s in &self.stmts {
            match s {
                AugStmt::Assume { expr, .. } => expr.visit(f),
                AugStmt::Observe { param, .. } => param.visit(f),
            }
        }
    }

    /// Every node id, including choice and observation ids.
    pub fn node_ids(&self) -> Vec<NodeId> {
        let mut ids = Vec::new();
        for s in &self.stmts {
            if let AugStmt::Observe { obs, .. } = s {
                ids.push(*obs);
            }
        }
        self.visit(&mut |e| {
            ids.push(e.id);
            if let AugNode::Dist { choice, .. } = &e.node {
                ids.push(*choice);
            }
        });
        ids
    }

    /// Number of distribution choices made (observations excluded).
    pub fn choice_count(&self) -> usize {
        let mut n = 0;
        self.visit(&mut |e| {
            if matches!(e.node, AugNode::Dist { .. }) {
                n += 1;
            }
        });
        n
    }

    /// Canonical text of the trace: node ids and generated names are
    /// renumbered by first occurrence, so two traces have the same key
    /// exactly when they are equal up to a consistent renaming of both.
    pub fn canonical_key(&self) -> String {
        let mut c = Canon::default();
        for s in &self.stmts {
            match s {
                AugStmt::Assume { name, expr } => {
                    c.out.push_str("A ");
                    c.name(name);
                    c.aug(expr);
                }
                AugStmt::Observe { dist, label, param, obs, value } => {
                    c.out.push_str("O ");
                    let _ = write!(c.out, "{dist}:{label:?}");
                    c.id(*obs);
                    c.aug(param);
                    c.expr(value);
                }
            }
            c.out.push('\n');
        }
        c.out
    }
}

/// Trace equality up to renaming of node ids and generated names.
pub fn trace_equal_mod_ids(a: &Trace, b: &Trace) -> bool {
    a.canonical_key() == b.canonical_key()
}

#[derive(Default)]
struct Canon {
    ids: HashMap<NodeId, usize>,
    names: HashMap<Ident, usize>,
    out: String,
}

impl Canon {
    fn id(&mut self, id: NodeId) {
        let next = self.ids.len();
        let n = *self.ids.entry(id).or_insert(next);
        let _ = write!(self.out, " #{n}");
    }

    fn name(&mut self, name: &Ident) {
        if is_generated(name) {
            let next = self.names.len();
            let n = *self.names.entry(name.clone()).or_insert(next);
            let _ = write!(self.out, " %{n}");
        } else {
            self.out.push(' ');
            self.out.push_str(name);
        }
    }

    fn aug(&mut self, e: &AugExpr) {
        self.out.push_str(" (");
        self.id(e.id);
        match &e.node {
            AugNode::FreeVar(x) => {
                self.out.push_str(" free");
                self.name(x);
            }
            AugNode::BoundVar { name, binder } => {
                self.out.push_str(" bound");
                self.name(name);
                self.id(*binder);
            }
            AugNode::Literal(r) => {
                self.out.push_str(" lit ");
                let _ = write!(self.out, "{r}");
            }
            AugNode::Lambda { param, body } => {
                self.out.push_str(" lam");
                self.name(param);
                self.expr(body);
            }
            AugNode::App { func, arg, tail } => {
                self.out.push_str(" app");
                self.aug(func);
                self.aug(arg);
                match tail {
                    AppTail::Opaque => self.out.push_str(" opaque"),
                    AppTail::Beta { bound, body } => {
                        self.out.push_str(" beta");
                        self.name(bound);
                        self.aug(body);
                    }
                }
            }
            AugNode::Dist { dist, label, param, choice, result } => {
                let _ = write!(self.out, " dist {dist}:{label:?}");
                self.id(*choice);
                self.aug(param);
                self.aug(result);
            }
        }
        self.out.push_str(" =");
        self.value(&e.value);
        self.out.push(')');
    }

    fn value(&mut self, v: &Value) {
        match v {
            Value::Symbol(x) => {
                self.out.push_str(" sym");
                self.name(x);
            }
            Value::Rational(r) => {
                self.out.push_str(" rat ");
                let _ = write!(self.out, "{r}");
            }
            Value::Stuck(f, a) => {
                self.out.push_str(" [stuck");
                self.value(f);
                self.value(a);
                self.out.push(']');
            }
            Value::Closure(c) => {
                self.out.push_str(" [clo");
                self.name(&c.param);
                self.expr(&c.body);
                // Entries are emitted in canonical-name order so that the
                // key does not depend on the concrete generated names.
                let mut entries: Vec<(String, &Ident, &Binding)> = Vec::new();
                for (k, b) in &c.env {
                    let key = if is_generated(k) {
                        match self.names.get(k) {
                            Some(n) => format!("%{n:020}"),
                            None => format!("%~{}", generated_index(k).unwrap_or(u64::MAX)),
                        }
                    } else {
                        k.to_string()
                    };
                    entries.push((key, k, b));
                }
                entries.sort_by(|a, b| a.0.cmp(&b.0));
                for (_, k, b) in entries {
                    self.name(k);
                    self.value(&b.value);
                    self.id(b.id);
                }
                self.out.push(']');
            }
        }
    }

    fn expr(&mut self, e: &Expr) {
        match e {
            Expr::Var(x) => {
                self.out.push_str(" v");
                self.name(x);
            }
            Expr::Literal(r) => {
                self.out.push_str(" n ");
                let _ = write!(self.out, "{r}");
            }
            Expr::Lambda { param, body } => {
                self.out.push_str(" (l");
                self.name(param);
                self.expr(body);
                self.out.push(')');
            }
            Expr::App { func, arg } => {
                self.out.push_str(" (a");
                self.expr(func);
                self.expr(arg);
                self.out.push(')');
            }
            Expr::Dist(call) => {
                self.out.push_str(&format!(" (d {}:{:?}", call.dist, &*call.label));
                self.expr(&call.param);
                self.out.push(')');
            }
        }
    }
}

/// Lower bounds for freshly allocated node ids and generated names.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Watermark {
    pub next_id: u64,
    pub next_name: u64,
}

impl Watermark {
    /// Smallest watermark above every id and generated name in `t`.
    pub fn of_trace(t: &Trace) -> Watermark {
        let mut w = Watermark::default();
        for id in t.node_ids() {
            w.next_id = w.next_id.max(id.0 + 1);
        }
        let mut bump = |n: &Ident| {
            if let Some(i) = generated_index(n) {
                w.next_name = w.next_name.max(i + 1);
            }
        };
        for s in &t.stmts {
            match s {
                AugStmt::Assume { name, .. } => bump(name),
                AugStmt::Observe { value, .. } => value.for_each_name(&mut bump),
            }
        }
        t.visit(&mut |e| {
            match &e.node {
                AugNode::FreeVar(x) | AugNode::BoundVar { name: x, .. } => bump(x),
                AugNode::Lambda { param, body } => {
                    bump(param);
                    body.for_each_name(&mut bump);
                }
                AugNode::App { tail: AppTail::Beta { bound, .. }, .. } => bump(bound),
                _ => {}
            }
            value_names(&e.value, &mut bump);
        });
        w
    }

    /// Pointwise maximum.
    pub fn max(self, other: Watermark) -> Watermark {
        Watermark { next_id: self.next_id.max(other.next_id), next_name: self.next_name.max(other.next_name) }
    }
}

fn value_names(v: &Value, f: &mut dyn FnMut(&Ident)) {
    match v {
        Value::Symbol(x) => f(x),
        Value::Rational(_) => {}
        Value::Stuck(a, b) => {
            value_names(a, f);
            value_names(b, f);
        }
        Value::Closure(c) => {
            f(&c.param);
            c.body.for_each_name(f);
            for (k, b) in &c.env {
                f(k);
                value_names(&b.value, f);
            }
        }
    }
}
