//! Closed forms for the grand-canonical model at zero chemical potential,
//! where every link is an independent two-level system.

use crate::error::{Error, Result};

/// String probability per link, `e^{-beta h} / (2 cosh beta h)`.
pub fn bernoulli_p(t_over_h: f64) -> f64 {
    1.0 / (1.0 + (2.0 / t_over_h).exp())
}

/// Inverse of [`bernoulli_p`] on `0 < p < 1/2`.
pub fn t_over_h_from_p(p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 0.5) {
        return Err(Error::Invalid(format!("string probability {p} outside (0, 1/2)")));
    }
    Ok(2.0 / (1.0 / p - 1.0).ln())
}

/// Matter density `(1 - (2p - 1)^z) / 2` for independent links and even
/// coordination `z`.
pub fn density_from_p(p: f64, z: u32) -> Result<f64> {
    if z % 2 == 1 {
        return Err(Error::Invalid(format!("coordination number {z} must be even")));
    }
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::Invalid(format!("probability {p} outside [0, 1]")));
    }
    Ok(0.5 * (1.0 - (2.0 * p - 1.0).powi(z as i32)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn values() {
        let direct = (-1.0f64).exp() / (2.0 * 1.0f64.cosh());
        assert!((bernoulli_p(1.0) - direct).abs() < 1e-15);
        assert!((bernoulli_p(1.0) - 0.11920).abs() < 1e-5);
        assert!(bernoulli_p(1e-3) < 1e-300);
        assert!((bernoulli_p(1e9) - 0.5).abs() < 1e-8);
        assert_eq!(density_from_p(0.5, 4).unwrap(), 0.5);
        assert_eq!(density_from_p(0.0, 4).unwrap(), 0.0);
        assert_eq!(density_from_p(0.25, 4).unwrap(), 0.46875);
        assert!(density_from_p(0.25, 3).is_err());
    }

    #[test]
    fn monotone_and_invertible() {
        let mut last = 0.0;
        for i in 1..400 {
            let t = i as f64 * 0.05;
            let p = bernoulli_p(t);
            assert!(p > last);
            last = p;
            if p > 1e-12 {
                assert!((t_over_h_from_p(p).unwrap() / t - 1.0).abs() < 1e-9);
            }
        }
        for eps in [0.01, 0.2, 0.5] {
            assert!(density_from_p(0.5 - eps, 6).unwrap() < 0.5);
        }
        assert!(t_over_h_from_p(0.5).is_err());
    }
}
