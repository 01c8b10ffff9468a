//! Extended-real arithmetic for integrability exponents in `[1, inf]`.
//!
//! `f64::INFINITY` is a first-class exponent value. The IEEE conventions
//! `1/inf = 0` and `d/inf = 0` match the ones used throughout the condition
//! algebra; the single non-IEEE convention, `inf/inf = 1`, applies to ratios
//! of conjugate exponents and is provided by [`ratio`].

use crate::error::{Error, Result};

/// Conjugate exponent `p'` with `1/p + 1/p' = 1`; endpoints map `1 <-> inf`.
pub fn conjugate_exponent(p: f64) -> Result<f64> {
    if !(p >= 1.0) {
        return Err(Error::Domain(format!("exponent {p} < 1 has no conjugate")));
    }
    if p == 1.0 {
        Ok(f64::INFINITY)
    } else if p.is_infinite() {
        Ok(1.0)
    } else {
        Ok(p / (p - 1.0))
    }
}

/// `a / b` with the convention `inf / inf = 1`.
pub fn ratio(a: f64, b: f64) -> f64 {
    if a.is_infinite() && b.is_infinite() {
        1.0
    } else {
        a / b
    }
}

/// `1 / p` with `1/inf = 0`.
pub fn recip(p: f64) -> f64 {
    if p.is_infinite() {
        0.0
    } else {
        1.0 / p
    }
}

/// Positive part `(x)_+`.
pub fn pos(x: f64) -> f64 {
    x.max(0.0)
}

/// Validates an integrability exponent (`>= 1`, possibly infinite).
pub fn check_exponent(name: &str, p: f64) -> Result<()> {
    if p >= 1.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!("{name} = {p} must lie in [1, inf]")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn conjugate_endpoints() {
        assert_eq!(conjugate_exponent(1.0).unwrap(), f64::INFINITY);
        assert_eq!(conjugate_exponent(f64::INFINITY).unwrap(), 1.0);
        assert_eq!(conjugate_exponent(2.0).unwrap(), 2.0);
        assert!(conjugate_exponent(0.5).is_err());
    }

    #[test]
    fn infinite_ratio_convention() {
        assert_eq!(ratio(f64::INFINITY, f64::INFINITY), 1.0);
        assert_eq!(ratio(3.0, f64::INFINITY), 0.0);
        assert_eq!(recip(f64::INFINITY), 0.0);
    }

    proptest! {
        #[test]
        fn conjugate_is_involutive(p in 1.0f64..1e6) {
            let q = conjugate_exponent(p).unwrap();
            let back = conjugate_exponent(q).unwrap();
            prop_assert!((back - p).abs() <= 1e-9 * p);
        }

        #[test]
        fn holder_identity(p in 1.0f64..1e6) {
            let q = conjugate_exponent(p).unwrap();
            prop_assert!((recip(p) + recip(q) - 1.0).abs() < 1e-12);
        }
    }
}
