use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use num_traits::{One, Signed, ToPrimitive, Zero};
use thiserror::Error;

use super::trace::Value;
use crate::lang::{alpha_eq, Expr};
use crate::Rational;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DistError {
    #[error("unknown distribution `{0}`")]
    Unknown(String),
    #[error("invalid parameter for `{dist}`: {reason}")]
    BadParam { dist: String, reason: String },
}

/// One support element with its probability.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Outcome {
    pub expr: Expr,
    pub prob: Rational,
}

/// A distribution with a finite, exactly weighted support.
pub trait Distribution: Send + Sync {
    fn name(&self) -> &str;

    /// Ordered support for `param`. Probabilities are non-negative and sum
    /// to one. Zero-probability outcomes may be listed.
    fn outcomes(&self, param: &Value) -> Result<Vec<Outcome>, DistError>;
}

/// Named collection of distributions.
#[derive(Clone)]
pub struct Registry {
    dists: BTreeMap<String, Arc<dyn Distribution>>,
}

impl fmt::Debug for Registry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(self.dists.keys()).finish()
    }
}

impl Default for Registry {
    fn default() -> Self {
        Registry::builtin()
    }
}

impl Registry {
    pub fn empty() -> Self {
        Registry { dists: BTreeMap::new() }
    }

    /// `bernoulli`, `categorical` and `uniform-int`.
    pub fn builtin() -> Self {
        let mut r = Registry::empty();
        r.register(Arc::new(Bernoulli));
        r.register(Arc::new(Categorical));
        r.register(Arc::new(UniformInt));
        r
    }

    pub fn register(&mut self, d: Arc<dyn Distribution>) {
        self.dists.insert(d.name().to_string(), d);
    }

    pub fn get(&self, name: &str) -> Result<&dyn Distribution, DistError> {
        self.dists.get(name).map(|d| &**d).ok_or_else(|| DistError::Unknown(name.to_string()))
    }

    pub fn outcomes(&self, name: &str, param: &Value) -> Result<Vec<Outcome>, DistError> {
        self.get(name)?.outcomes(param)
    }

    /// Probability of `outcome`, matched up to alpha-equivalence. Values
    /// outside the support have probability zero.
    pub fn pdf(&self, name: &str, param: &Value, outcome: &Expr) -> Result<Rational, DistError> {
        let mut p = Rational::zero();
        for o in self.outcomes(name, param)? {
            if alpha_eq(&o.expr, outcome) {
                p += o.prob;
            }
        }
        Ok(p)
    }
}

fn bad(dist: &str, reason: impl Into<String>) -> DistError {
    DistError::BadParam { dist: dist.to_string(), reason: reason.into() }
}

/// Coin with success probability `p`; outcomes `#t` then `#f`.
pub struct Bernoulli;

impl Distribution for Bernoulli {
    fn name(&self) -> &str {
        "bernoulli"
    }

    fn outcomes(&self, param: &Value) -> Result<Vec<Outcome>, DistError> {
        let Value::Rational(p) = param else {
            return Err(bad("bernoulli", "expected a rational probability"));
        };
        if p.is_negative() || *p > Rational::one() {
            return Err(bad("bernoulli", format!("probability {} outside [0, 1]", crate::format_rational(p))));
        }
        Ok(vec![
            Outcome { expr: Expr::church_true(), prob: p.clone() },
            Outcome { expr: Expr::church_false(), prob: Rational::one() - p },
        ])
    }
}

/// Uniform over the literals `0 .. n-1`.
pub struct UniformInt;

impl Distribution for UniformInt {
    fn name(&self) -> &str {
        "uniform-int"
    }

    fn outcomes(&self, param: &Value) -> Result<Vec<Outcome>, DistError> {
        let n = match param {
            Value::Rational(n) if n.is_integer() && n.is_positive() => n.to_integer(),
            _ => return Err(bad("uniform-int", "expected a positive integer")),
        };
        let count = n.to_u32().filter(|c| *c <= 1 << 16).ok_or_else(|| bad("uniform-int", "support too large"))?;
        let p = Rational::new(1.into(), n);
        Ok((0..count)
            .map(|i| Outcome { expr: Expr::Literal(Rational::from_integer(i.into())), prob: p.clone() })
            .collect())
    }
}

/// Weighted choice among explicit outcomes. The parameter is written
/// `((o1 w1) (o2 w2) ...)`; weights are normalised.
pub struct Categorical;

impl Distribution for Categorical {
    fn name(&self) -> &str {
        "categorical"
    }

    fn outcomes(&self, param: &Value) -> Result<Vec<Outcome>, DistError> {
        let entries = decode_entries(param).ok_or_else(|| bad("categorical", "expected a list of (outcome weight) pairs"))?;
        let mut total = Rational::zero();
        let mut out: Vec<Outcome> = Vec::new();
        for (o, w) in entries {
            if w.is_negative() {
                return Err(bad("categorical", "negative weight"));
            }
            let expr = readback(o).ok_or_else(|| bad("categorical", "outcomes must be closed values"))?;
            if out.iter().any(|prev| alpha_eq(&prev.expr, &expr)) {
                return Err(bad("categorical", format!("duplicate outcome {expr}")));
            }
            total += &w;
            out.push(Outcome { expr, prob: w });
        }
        if total.is_zero() {
            return Err(bad("categorical", "weights sum to zero"));
        }
        for o in &mut out {
            o.prob = &o.prob / &total;
        }
        Ok(out)
    }
}

fn entry(v: &Value) -> Option<(&Value, Rational)> {
    match v {
        Value::Stuck(o, w) => match &**w {
            Value::Rational(w) => Some((o, w.clone())),
            _ => None,
        },
        _ => None,
    }
}

fn decode_entries(v: &Value) -> Option<Vec<(&Value, Rational)>> {
    if let Value::Stuck(rest, last) = v {
        if let Some(e) = entry(last) {
            if let Some(mut init) = decode_entries(rest) {
                init.push(e);
                return Some(init);
            }
        }
    }
    entry(v).map(|e| vec![e])
}

/// Reads a value back as an expression. Closures must be closed.
pub fn readback(v: &Value) -> Option<Expr> {
    match v {
        Value::Symbol(x) => Some(Expr::Var(x.clone())),
        Value::Rational(r) => Some(Expr::Literal(r.clone())),
        Value::Stuck(f, a) => Some(Expr::app(readback(f)?, readback(a)?)),
        Value::Closure(c) => {
            let lam = Expr::Lambda { param: c.param.clone(), body: c.body.clone() };
            lam.free_variables().is_empty().then_some(lam)
        }
    }
}
