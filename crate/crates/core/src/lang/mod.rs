//! Abstract syntax, parsing and printing of programs.

mod parse;
mod print;

use std::collections::BTreeSet;
use std::fmt;
use std::sync::Arc;

use crate::Rational;

pub use parse::{parse_expr, parse_program, ParseError};
pub use print::{print_expr, print_program};

/// Identifier. Names starting with `%` are reserved for generated names.
pub type Ident = Arc<str>;

/// Builds an identifier.
pub fn ident(s: &str) -> Ident {
    Arc::from(s)
}

/// Whether `name` is a generated name of the form `%N`.
pub fn is_generated(name: &str) -> bool {
    name.starts_with('%')
}

/// Numeric suffix of a generated name `%N`.
pub fn generated_index(name: &str) -> Option<u64> {
    name.strip_prefix('%')?.parse().ok()
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Expr {
    Var(Ident),
    Lambda { param: Ident, body: Arc<Expr> },
    App { func: Arc<Expr>, arg: Arc<Expr> },
    Dist(DistCall),
    Literal(Rational),
}

/// A call to a registered distribution. `label` is always resolved; the
/// parser fills in a positional default when the source omits one.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct DistCall {
    pub dist: Ident,
    pub param: Arc<Expr>,
    pub label: Ident,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Stmt {
    Assume { name: Ident, expr: Expr },
    Observe { call: DistCall, value: Expr },
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
pub struct Program {
    pub stmts: Vec<Stmt>,
}

impl Expr {
    pub fn var(name: &str) -> Expr {
        Expr::Var(ident(name))
    }

    pub fn lambda(param: &str, body: Expr) -> Expr {
        Expr::Lambda { param: ident(param), body: Arc::new(body) }
    }

    pub fn app(func: Expr, arg: Expr) -> Expr {
        Expr::App { func: Arc::new(func), arg: Arc::new(arg) }
    }

    pub fn literal(r: Rational) -> Expr {
        Expr::Literal(r)
    }

    /// Church encoding of `true`: `λt. λf. t`.
    pub fn church_true() -> Expr {
        static TRUE: std::sync::OnceLock<Expr> = std::sync::OnceLock::new();
        TRUE.get_or_init(|| Expr::lambda("t", Expr::lambda("f", Expr::var("t")))).clone()
    }

    /// Church encoding of `false`: `λt. λf. f`.
    pub fn church_false() -> Expr {
        static FALSE: std::sync::OnceLock<Expr> = std::sync::OnceLock::new();
        FALSE.get_or_init(|| Expr::lambda("t", Expr::lambda("f", Expr::var("f")))).clone()
    }

    /// Whether the expression belongs to the value grammar.
    pub fn is_value_expr(&self) -> bool {
        match self {
            Expr::Var(_) | Expr::Lambda { .. } | Expr::Literal(_) => true,
            Expr::App { func, arg } => func.is_value_expr() && arg.is_value_expr(),
            Expr::Dist(_) => false,
        }
    }

    /// Free variables, in sorted order.
    pub fn free_variables(&self) -> BTreeSet<Ident> {
        let mut out = BTreeSet::new();
        let mut bound = Vec::new();
        collect_free(self, &mut bound, &mut out);
        out
    }

    /// Whether `name` occurs free.
    pub fn has_free(&self, name: &str) -> bool {
        match self {
            Expr::Var(x) => &**x == name,
            Expr::Lambda { param, body } => &**param != name && body.has_free(name),
            Expr::App { func, arg } => func.has_free(name) || arg.has_free(name),
            Expr::Dist(call) => call.param.has_free(name),
            Expr::Literal(_) => false,
        }
    }

    /// Replaces free occurrences of `from` by the variable `to`. `to` must not
    /// be bound anywhere inside the expression.
    pub fn rename_free(&self, from: &str, to: &Ident) -> Expr {
        if !self.has_free(from) {
            return self.clone();
        }
        match self {
            Expr::Var(_) => Expr::Var(to.clone()),
            Expr::Lambda { param, body } => Expr::Lambda {
                param: param.clone(),
                body: Arc::new(body.rename_free(from, to)),
            },
            Expr::App { func, arg } => Expr::App {
                func: Arc::new(func.rename_free(from, to)),
                arg: Arc::new(arg.rename_free(from, to)),
            },
            Expr::Dist(call) => Expr::Dist(DistCall {
                dist: call.dist.clone(),
                param: Arc::new(call.param.rename_free(from, to)),
                label: call.label.clone(),
            }),
            Expr::Literal(_) => self.clone(),
        }
    }

    /// Calls `f` on every identifier (binders and occurrences).
    pub fn for_each_name(&self, f: &mut dyn FnMut(&Ident)) {
        match self {
            Expr::Var(x) => f(x),
            Expr::Lambda { param, body } => {
                f(param);
                body.for_each_name(f);
            }
            Expr::App { func, arg } => {
                func.for_each_name(f);
                arg.for_each_name(f);
            }
            Expr::Dist(call) => call.param.for_each_name(f),
            Expr::Literal(_) => {}
        }
    }
}

fn collect_free(e: &Expr, bound: &mut Vec<Ident>, out: &mut BTreeSet<Ident>) {
    match e {
        Expr::Var(x) => {
            if !bound.contains(x) {
                out.insert(x.clone());
            }
        }
        Expr::Lambda { param, body } => {
            bound.push(param.clone());
            collect_free(body, bound, out);
            bound.pop();
        }
        Expr::App { func, arg } => {
            collect_free(func, bound, out);
            collect_free(arg, bound, out);
        }
        Expr::Dist(call) => collect_free(&call.param, bound, out),
        Expr::Literal(_) => {}
    }
}

/// Alpha-equivalence. Free variables compare by name; labels are ignored.
pub fn alpha_eq(a: &Expr, b: &Expr) -> bool {
    fn go<'a>(a: &'a Expr, b: &'a Expr, ea: &mut Vec<&'a Ident>, eb: &mut Vec<&'a Ident>) -> bool {
        match (a, b) {
            (Expr::Var(x), Expr::Var(y)) => {
                let ix = ea.iter().rposition(|n| *n == x);
                let iy = eb.iter().rposition(|n| *n == y);
                match (ix, iy) {
                    (Some(i), Some(j)) => ea.len() - i == eb.len() - j,
                    (None, None) => x == y,
                    _ => false,
                }
            }
            (Expr::Lambda { param: p, body: bp }, Expr::Lambda { param: q, body: bq }) => {
                ea.push(p);
                eb.push(q);
                let r = go(bp, bq, ea, eb);
                ea.pop();
                eb.pop();
                r
            }
            (Expr::App { func: f1, arg: a1 }, Expr::App { func: f2, arg: a2 }) => {
                go(f1, f2, ea, eb) && go(a1, a2, ea, eb)
            }
            (Expr::Dist(c1), Expr::Dist(c2)) => c1.dist == c2.dist && go(&c1.param, &c2.param, ea, eb),
            (Expr::Literal(x), Expr::Literal(y)) => x == y,
            _ => false,
        }
    }
    go(a, b, &mut Vec::new(), &mut Vec::new())
}

impl DistCall {
    /// Free variables of the call: those of its parameter. Builtin
    /// distributions have closed supports.
    pub fn free_variables(&self) -> BTreeSet<Ident> {
        self.param.free_variables()
    }
}

impl Program {
    /// Every identifier appearing in the program.
    pub fn names(&self) -> BTreeSet<Ident> {
        let mut out = BTreeSet::new();
        for stmt in &self.stmts {
            match stmt {
                Stmt::Assume { name, expr } => {
                    out.insert(name.clone());
                    expr.for_each_name(&mut |n| {
                        out.insert(n.clone());
                    });
                }
                Stmt::Observe { call, value } => {
                    call.param.for_each_name(&mut |n| {
                        out.insert(n.clone());
                    });
                    value.for_each_name(&mut |n| {
                        out.insert(n.clone());
                    });
                }
            }
        }
        out
    }

    /// Key identifying the program up to renaming of generated names.
    pub fn canonical_key(&self) -> String {
        let mut map = std::collections::HashMap::new();
        let mut rename = |n: &Ident| -> String {
            if is_generated(n) {
                let next = map.len();
                format!("%{}", map.entry(n.clone()).or_insert(next))
            } else {
                n.to_string()
            }
        };
        let mut out = String::new();
        for stmt in &self.stmts {
            match stmt {
                Stmt::Assume { name, expr } => {
                    out.push_str("A ");
                    out.push_str(&rename(name));
                    key_expr(expr, &mut rename, &mut out);
                }
                Stmt::Observe { call, value } => {
                    out.push_str("O ");
                    key_expr(&Expr::Dist(call.clone()), &mut rename, &mut out);
                    key_expr(value, &mut rename, &mut out);
                }
            }
            out.push('\n');
        }
        out
    }
}

fn key_expr(e: &Expr, rename: &mut dyn FnMut(&Ident) -> String, out: &mut String) {
    match e {
        Expr::Var(x) => {
            out.push_str(" v:");
            out.push_str(&rename(x));
        }
        Expr::Lambda { param, body } => {
            out.push_str(" (l:");
            out.push_str(&rename(param));
            key_expr(body, rename, out);
            out.push(')');
        }
        Expr::App { func, arg } => {
            out.push_str(" (a");
            key_expr(func, rename, out);
            key_expr(arg, rename, out);
            out.push(')');
        }
        Expr::Dist(call) => {
            out.push_str(&format!(" (d:{}:{:?}", call.dist, &*call.label));
            key_expr(&call.param, rename, out);
            out.push(')');
        }
        Expr::Literal(r) => {
            out.push_str(" n:");
            out.push_str(&crate::format_rational(r));
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&print_expr(self))
    }
}

impl fmt::Display for Program {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&print_program(self))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn free_variables_respect_binders() {
        let e = Expr::lambda("x", Expr::app(Expr::var("x"), Expr::var("y")));
        let fv: Vec<_> = e.free_variables().into_iter().map(|s| s.to_string()).collect();
        assert_eq!(fv, vec!["y"]);
    }

    #[test]
    fn alpha_equivalence_ignores_binder_names() {
        let a = Expr::lambda("x", Expr::lambda("y", Expr::var("x")));
        let b = Expr::lambda("p", Expr::lambda("q", Expr::var("p")));
        let c = Expr::lambda("p", Expr::lambda("q", Expr::var("q")));
        assert!(alpha_eq(&a, &b));
        assert!(!alpha_eq(&a, &c));
        assert!(!alpha_eq(&Expr::var("x"), &Expr::var("y")));
    }

    #[test]
    fn rename_free_skips_shadowed() {
        let e = Expr::app(Expr::var("x"), Expr::lambda("x", Expr::var("x")));
        let r = e.rename_free("x", &ident("%1"));
        assert_eq!(r, Expr::app(Expr::var("%1"), Expr::lambda("x", Expr::var("x"))));
    }

    #[test]
    fn generated_names() {
        assert!(is_generated("%3"));
        assert_eq!(generated_index("%12"), Some(12));
        assert_eq!(generated_index("x"), None);
    }
}
