//! Post-processing of Monte Carlo series: error analysis, Binder cumulants,
//! crossings, scaling collapse, closed forms and the dual Ising mapping.

pub mod binder;
pub mod collapse;
pub mod crossing;
pub mod dual;
pub mod exact;
pub mod optimize;
pub mod stats;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use binder::{binder, BinderEstimate};
pub use collapse::{collapse_fit, Ansatz, CollapseFit};
pub use crossing::{crossing_points, Crossing, CrossingReport, Drift, Interpolation};
pub use dual::{dual_ising_map, DualMap};
pub use exact::{bernoulli_p, density_from_p, t_over_h_from_p};
pub use stats::{autocorrelation, jackknife, mean_estimate, Autocorrelation, Estimate};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub x: f64,
    pub y: f64,
    pub error: f64,
}

/// One observable against a control parameter at fixed system size.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Curve {
    pub size: usize,
    pub points: Vec<CurvePoint>,
}

impl Curve {
    /// Points must be finite, strictly increasing in `x`, at least two.
    pub fn check(&self) -> Result<()> {
        if self.points.len() < 2 {
            return Err(Error::Invalid(format!("curve for L={} has fewer than 2 points", self.size)));
        }
        if self.points.iter().any(|p| !(p.x.is_finite() && p.y.is_finite())) {
            return Err(Error::Invalid(format!("curve for L={} has non-finite points", self.size)));
        }
        if self.points.windows(2).any(|w| w[1].x <= w[0].x) {
            return Err(Error::Invalid(format!("curve for L={} is not sorted by x", self.size)));
        }
        Ok(())
    }
}
