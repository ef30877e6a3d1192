//! Error analysis for correlated Monte Carlo series.
//!
//! Integrated autocorrelation time uses the convention
//! `tau_int = 1/2 + sum_{t>=1} rho(t)`, so uncorrelated data give 1/2 and the
//! variance of the mean is `2 tau_int sigma^2 / n`. The sum is truncated at
//! the smallest window `W >= 6 tau_int(W)` (self-consistent windowing).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Unbiased sample variance.
pub fn variance(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() as f64 - 1.0)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Autocorrelation {
    pub tau_int: f64,
    pub window: usize,
    pub mean: f64,
    /// Standard error of the mean including autocorrelation.
    pub error: f64,
    pub effective_samples: f64,
    /// `(bin length, naive error of the mean of bin averages)`.
    pub binning: Vec<(usize, f64)>,
    /// Constant series: `tau_int` is reported as 0.
    pub degenerate: bool,
}

const WINDOW_FACTOR: f64 = 6.0;

pub fn autocorrelation(series: &[f64]) -> Result<Autocorrelation> {
    let n = series.len();
    if n < 32 {
        return Err(Error::Invalid(format!("autocorrelation needs >= 32 samples, got {n}")));
    }
    let m = mean(series);
    let c0 = series.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n as f64;
    let binning = binning_curve(series);
    if c0 <= (m.abs() * 1e-14).powi(2) {
        return Ok(Autocorrelation {
            tau_int: 0.0,
            window: 0,
            mean: m,
            error: 0.0,
            effective_samples: n as f64,
            binning,
            degenerate: true,
        });
    }
    let mut tau = 0.5;
    let mut window = 0;
    for t in 1..n / 2 {
        let ct = (0..n - t).map(|i| (series[i] - m) * (series[i + t] - m)).sum::<f64>() / (n - t) as f64;
        tau += ct / c0;
        window = t;
        if t as f64 >= WINDOW_FACTOR * tau {
            break;
        }
    }
    // Noise can drive the running sum slightly below 1/2 for white series.
    let tau = tau.max(0.5);
    let var = c0 * n as f64 / (n as f64 - 1.0);
    Ok(Autocorrelation {
        tau_int: tau,
        window,
        mean: m,
        error: (2.0 * tau * var / n as f64).sqrt(),
        effective_samples: n as f64 / (2.0 * tau),
        binning,
        degenerate: false,
    })
}

fn binning_curve(series: &[f64]) -> Vec<(usize, f64)> {
    let mut out = Vec::new();
    let mut len = 1;
    while series.len() / len >= 16 {
        let bins = block_means(series, series.len() / len);
        out.push((len, (variance(&bins) / bins.len() as f64).sqrt()));
        len *= 2;
    }
    out
}

/// Means of `n_bins` consecutive equal blocks; a remainder is dropped.
pub fn block_means(series: &[f64], n_bins: usize) -> Vec<f64> {
    let len = series.len() / n_bins;
    (0..n_bins).map(|b| mean(&series[b * len..(b + 1) * len])).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub error: f64,
}

/// Number of jackknife blocks for `n` samples with autocorrelation `tau`:
/// blocks span at least `6 tau` samples, at most 200 blocks, at least 8.
pub fn jackknife_blocks(n: usize, tau: f64) -> usize {
    let len = (6.0 * tau).ceil().max(1.0) as usize;
    (n / len).clamp(8.min(n), 200)
}

/// Jackknife estimate of `f(column means)` over equally blocked columns.
pub fn jackknife(columns: &[&[f64]], n_blocks: usize, f: impl Fn(&[f64]) -> f64) -> Estimate {
    let n = columns[0].len();
    assert!(columns.iter().all(|c| c.len() == n), "columns differ in length");
    let k = n_blocks.clamp(2, n);
    let blocks: Vec<Vec<f64>> = columns.iter().map(|c| block_means(c, k)).collect();
    let totals: Vec<f64> = blocks.iter().map(|b| b.iter().sum::<f64>()).collect();
    let full: Vec<f64> = totals.iter().map(|t| t / k as f64).collect();
    let value = f(&full);
    let mut leave = vec![0.0; columns.len()];
    let estimates: Vec<f64> = (0..k)
        .map(|b| {
            for (c, slot) in leave.iter_mut().enumerate() {
                *slot = (totals[c] - blocks[c][b]) / (k - 1) as f64;
            }
            f(&leave)
        })
        .collect();
    let m = mean(&estimates);
    let var = estimates.iter().map(|e| (e - m).powi(2)).sum::<f64>() * (k - 1) as f64 / k as f64;
    Estimate {
        value,
        error: var.sqrt(),
    }
}

/// Bin counts at or above this make a binning level trustworthy enough to
/// override the windowed error.
const MIN_BINS: usize = 128;

/// Mean with an autocorrelation-aware error: the larger of the windowed
/// estimate and the binning errors with at least 128 bins. Slow modes of
/// small amplitude escape the window but show up in the binning curve.
pub fn mean_estimate(series: &[f64]) -> Estimate {
    if series.len() >= 32 {
        let a = autocorrelation(series).expect("length checked");
        let n = series.len();
        let binned = a
            .binning
            .iter()
            .filter(|(len, _)| n / len >= MIN_BINS)
            .map(|b| b.1)
            .fold(0.0, f64::max);
        return Estimate {
            value: a.mean,
            error: a.error.max(binned),
        };
    }
    let value = mean(series);
    let error = if series.len() > 1 {
        (variance(series) / series.len() as f64).sqrt()
    } else {
        f64::INFINITY
    };
    Estimate { value, error }
}
