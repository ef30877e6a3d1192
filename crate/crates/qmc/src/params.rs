use serde::{Deserialize, Serialize};

use z2perc::{Basis, Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Couplings {
    pub mu: f64,
    pub j: f64,
    pub h: f64,
    pub lambda: f64,
}

impl Couplings {
    /// `mu = J = 1`.
    pub fn fields(h: f64, lambda: f64) -> Self {
        Self {
            mu: 1.0,
            j: 1.0,
            h,
            lambda,
        }
    }
}

/// How the segment update treats links that carry events.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SegmentMode {
    /// Only links without any flip are proposed; others are skipped.
    EventFree,
    /// The spin of the chosen link is flipped at all times, events kept.
    #[default]
    WholeWorldline,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QmcParams {
    pub size: usize,
    pub couplings: Couplings,
    pub basis: Basis,
    pub beta: f64,
    /// Sweeps before the first sample.
    pub thermalization: u64,
    /// Sweeps between samples.
    pub stride: u64,
    pub n_samples: usize,
    pub seed: u64,
    pub stream: u64,
    /// Largest imaginary-time separation of an inserted event pair; capped
    /// at `beta / 2`.
    pub pair_window: f64,
    pub segment_mode: SegmentMode,
    /// Four-body event plus one link event on each of its links.
    pub composite_updates: bool,
    /// Composite proposals per four-body object per sweep. Their acceptance
    /// is of order `c1^4`, and they alone change the parity of link events
    /// per link, so they are proposed often.
    pub composite_per_object: usize,
    /// One four-body event on every object at once; only used when there
    /// are at most 16 objects, beyond which it is never accepted.
    pub global_updates: bool,
    /// Whole-worldline flips of four-body loops and winding lines.
    pub loop_updates: bool,
}

impl QmcParams {
    /// `mu = J = 1`, `beta = L`; 500 thermalization sweeps, 2 between samples.
    pub fn ground_state(size: usize, h: f64, lambda: f64, basis: Basis) -> Self {
        Self {
            size,
            couplings: Couplings::fields(h, lambda),
            basis,
            beta: size as f64,
            thermalization: 500,
            stride: 2,
            n_samples: 1000,
            seed: 0,
            stream: 0,
            pair_window: 1.0,
            segment_mode: SegmentMode::default(),
            composite_updates: true,
            composite_per_object: 4,
            global_updates: true,
            loop_updates: true,
        }
    }

    pub fn window(&self) -> f64 {
        self.pair_window.min(self.beta / 2.0)
    }

    pub fn validate(&self) -> Result<()> {
        if self.size < 2 {
            return Err(Error::Size(self.size));
        }
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return Err(Error::Invalid(format!("beta must be positive, got {}", self.beta)));
        }
        let c = self.couplings;
        for (name, v) in [("mu", c.mu), ("J", c.j), ("h", c.h), ("lambda", c.lambda)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Invalid(format!("{name} must be finite and non-negative, got {v}")));
            }
        }
        if !(self.pair_window > 0.0 && self.pair_window.is_finite()) {
            return Err(Error::Invalid("pair_window must be positive".into()));
        }
        if self.stride == 0 || self.n_samples == 0 {
            return Err(Error::Invalid("stride and n_samples must be positive".into()));
        }
        Ok(())
    }
}
