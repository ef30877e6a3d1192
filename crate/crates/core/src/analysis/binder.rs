use serde::{Deserialize, Serialize};

use super::stats::{autocorrelation, jackknife, jackknife_blocks};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BinderEstimate {
    /// `None` when `<P^2>` vanishes.
    pub value: Option<f64>,
    pub error: f64,
}

/// `U = <P^4> / <P^2>^2` with a blocked jackknife error; blocks are sized
/// from the autocorrelation time of `P^2`.
pub fn binder(samples: &[f64]) -> BinderEstimate {
    let nonzero = samples.iter().filter(|&&p| p != 0.0).count();
    if nonzero < 2 {
        return BinderEstimate {
            value: None,
            error: f64::NAN,
        };
    }
    let p2: Vec<f64> = samples.iter().map(|p| p * p).collect();
    let p4: Vec<f64> = p2.iter().map(|q| q * q).collect();
    let tau = if samples.len() >= 32 {
        autocorrelation(&p2).map(|a| a.tau_int.max(0.5)).unwrap_or(0.5)
    } else {
        0.5
    };
    let blocks = jackknife_blocks(samples.len(), tau);
    let est = jackknife(&[&p2, &p4], blocks, |m| if m[0] > 0.0 { m[1] / (m[0] * m[0]) } else { f64::NAN });
    BinderEstimate {
        value: Some(est.value),
        error: if est.error.is_finite() { est.error } else { f64::INFINITY },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn closed_forms() {
        assert!((binder(&[0.3; 100]).value.unwrap() - 1.0).abs() < 1e-12);
        let two: Vec<f64> = (0..1000).map(|i| if i % 2 == 0 { 0.0 } else { 0.4 }).collect();
        assert!((binder(&two).value.unwrap() - 2.0).abs() < 1e-12);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let u: Vec<f64> = (0..400_000).map(|_| rng.random::<f64>()).collect();
        let b = binder(&u);
        assert!((b.value.unwrap() - 1.8).abs() < 3.0 * b.error, "{b:?}");
        assert!(binder(&[0.0; 50]).value.is_none());
    }
}
