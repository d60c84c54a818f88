use num_traits::One;

use crate::exec::{AugNode, AugStmt, DistError, Registry, Trace};
use crate::Rational;

/// Product of the probabilities of every choice taken.
pub fn prior(t: &Trace, registry: &Registry) -> Result<Rational, DistError> {
    let mut p = Rational::one();
    let mut err = None;
    t.visit(&mut |e| {
        if let AugNode::Dist { dist, param, result, .. } = &e.node {
            if err.is_none() {
                match registry.pdf(dist, &param.value, &result.rollback()) {
                    Ok(q) => p *= q,
                    Err(e) => err = Some(e),
                }
            }
        }
    });
    err.map_or(Ok(p), Err)
}

/// Product of the probabilities of every observation.
pub fn likelihood(t: &Trace, registry: &Registry) -> Result<Rational, DistError> {
    let mut w = Rational::one();
    for s in &t.stmts {
        if let AugStmt::Observe { dist, param, value, .. } = s {
            w *= registry.pdf(dist, &param.value, value)?;
        }
    }
    Ok(w)
}

/// Unnormalised density: prior times likelihood.
pub fn density(t: &Trace, registry: &Registry) -> Result<Rational, DistError> {
    Ok(prior(t, registry)? * likelihood(t, registry)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exec::{enumerate_all, Watermark};
    use crate::lang::parse_program;

    fn r(n: i64, d: i64) -> Rational {
        Rational::new(n.into(), d.into())
    }

    #[test]
    fn two_flip_densities() {
        let p = parse_program("(assume x (flip 3/10)) (observe (flip (if x 9/10 1/10)) #t)").unwrap();
        let reg = Registry::builtin();
        let ts = enumerate_all(&p, &reg, 10, Watermark::default()).unwrap();
        let ds: Vec<_> = ts.iter().map(|t| density(t, &reg).unwrap()).collect();
        assert_eq!(ds, vec![r(27, 100), r(7, 100)]);
        assert_eq!(prior(&ts[1], &reg).unwrap(), r(7, 10));
        assert_eq!(likelihood(&ts[1], &reg).unwrap(), r(1, 10));
    }

    #[test]
    fn zero_probability_outcome_has_zero_density() {
        let p = parse_program("(assume x (flip 1))").unwrap();
        let reg = Registry::builtin();
        let ts = enumerate_all(&p, &reg, 10, Watermark::default()).unwrap();
        assert_eq!(density(&ts[0], &reg).unwrap(), r(1, 1));
        assert_eq!(density(&ts[1], &reg).unwrap(), r(0, 1));
    }
}
