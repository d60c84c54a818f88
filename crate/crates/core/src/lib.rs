//! Probabilistic lambda calculus with execution traces, dependence graphs,
//! subproblem extraction/stitching and inference metaprogramming.
//!
//! The pipeline is:
//!
//! 1. [`lang`] parses and prints programs made of `assume`/`observe` statements.
//! 2. [`exec`] executes programs into fully annotated [`exec::Trace`]s.
//! 3. [`depgraph`] derives data and existential dependencies from a trace.
//! 4. [`transform`] extracts a subtrace for a chosen subproblem, and stitches
//!    an updated subtrace back into the original.
//! 5. [`inference`] composes kernels into metaprograms and runs chains.
//! 6. [`analysis`] checks the resulting Markov chains on small programs by
//!    exhaustive enumeration.

pub mod analysis;
pub mod corpus;
pub mod depgraph;
pub mod exec;
pub mod inference;
pub mod lang;
pub mod transform;

pub use num_rational::BigRational as Rational;

/// Parses a rational written as `a` or `a/b`.
pub fn parse_rational(text: &str) -> Option<Rational> {
    use num_bigint::BigInt;
    use num_traits::Zero;
    let (num, den) = match text.split_once('/') {
        Some((n, d)) => (n, d),
        None => (text, "1"),
    };
    let valid = |s: &str, signed: bool| {
        let digits = if signed { s.strip_prefix('-').unwrap_or(s) } else { s };
        !digits.is_empty() && digits.bytes().all(|b| b.is_ascii_digit())
    };
    if !valid(num, true) || !valid(den, false) {
        return None;
    }
    let num: BigInt = num.parse().ok()?;
    let den: BigInt = den.parse().ok()?;
    if den.is_zero() {
        return None;
    }
    Some(Rational::new(num, den))
}

/// Formats a rational as `a` or `a/b` in lowest terms.
pub fn format_rational(r: &Rational) -> String {
    if r.is_integer() {
        r.numer().to_string()
    } else {
        format!("{}/{}", r.numer(), r.denom())
    }
}

/// Converts a rational to the nearest `f64`.
pub fn rational_to_f64(r: &Rational) -> f64 {
    use num_traits::ToPrimitive;
    r.to_f64().unwrap_or(f64::NAN)
}
