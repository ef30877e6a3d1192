//! Pairwise crossings of finite-size curves with bootstrap errors.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{Curve, CurvePoint};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Interpolation {
    #[default]
    Linear,
    /// Natural cubic spline through the points.
    Cubic,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Crossing {
    pub sizes: (usize, usize),
    /// `None` when the curves do not cross inside their common window.
    pub x: Option<f64>,
    pub y: Option<f64>,
    pub error: f64,
    /// Bootstrap replicas without a crossing.
    pub failures: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Drift {
    /// Weighted straight-line fit of the crossing position against `1/L`,
    /// with `L` the mean size of each pair.
    pub intercept: f64,
    pub intercept_error: f64,
    pub slope: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CrossingReport {
    pub crossings: Vec<Crossing>,
    pub drift: Option<Drift>,
}

pub struct Interpolant {
    xs: Vec<f64>,
    ys: Vec<f64>,
    /// Second derivatives for the cubic spline; empty for linear.
    m: Vec<f64>,
}

impl Interpolant {
    pub fn new(points: &[CurvePoint], kind: Interpolation) -> Self {
        let xs: Vec<f64> = points.iter().map(|p| p.x).collect();
        let ys: Vec<f64> = points.iter().map(|p| p.y).collect();
        let m = match kind {
            Interpolation::Linear => Vec::new(),
            Interpolation::Cubic => natural_spline(&xs, &ys),
        };
        Self { xs, ys, m }
    }

    pub fn eval(&self, x: f64) -> f64 {
        let n = self.xs.len();
        let i = match self.xs.partition_point(|&k| k <= x) {
            0 => 0,
            k if k >= n => n - 2,
            k => k - 1,
        };
        let (x0, x1) = (self.xs[i], self.xs[i + 1]);
        let h = x1 - x0;
        let a = (x1 - x) / h;
        let b = (x - x0) / h;
        let mut y = a * self.ys[i] + b * self.ys[i + 1];
        if !self.m.is_empty() {
            y += ((a * a * a - a) * self.m[i] + (b * b * b - b) * self.m[i + 1]) * h * h / 6.0;
        }
        y
    }
}

pub(crate) fn natural_spline(xs: &[f64], ys: &[f64]) -> Vec<f64> {
    let n = xs.len();
    let mut m = vec![0.0; n];
    if n < 3 {
        return m;
    }
    // Thomas algorithm on the interior equations.
    let mut c = vec![0.0; n];
    let mut d = vec![0.0; n];
    for i in 1..n - 1 {
        let h0 = xs[i] - xs[i - 1];
        let h1 = xs[i + 1] - xs[i];
        let rhs = 6.0 * ((ys[i + 1] - ys[i]) / h1 - (ys[i] - ys[i - 1]) / h0);
        let diag = 2.0 * (h0 + h1) - h0 * c[i - 1];
        c[i] = h1 / diag;
        d[i] = (rhs - h0 * d[i - 1]) / diag;
    }
    for i in (1..n - 1).rev() {
        m[i] = d[i] - c[i] * m[i + 1];
    }
    m
}

/// Roots of `f - g` on their common window, each with `|slope|`.
fn roots(a: &Interpolant, b: &Interpolant, kind: Interpolation) -> Vec<(f64, f64)> {
    let lo = a.xs[0].max(b.xs[0]);
    let hi = a.xs[a.xs.len() - 1].min(b.xs[b.xs.len() - 1]);
    if !(hi > lo) {
        return Vec::new();
    }
    let mut knots: Vec<f64> = a.xs.iter().chain(&b.xs).copied().filter(|&x| x > lo && x < hi).collect();
    knots.push(lo);
    knots.push(hi);
    knots.sort_by(f64::total_cmp);
    knots.dedup();
    let sub = match kind {
        Interpolation::Linear => 1,
        Interpolation::Cubic => 32,
    };
    let mut grid = Vec::with_capacity(knots.len() * sub);
    for w in knots.windows(2) {
        for s in 0..sub {
            grid.push(w[0] + (w[1] - w[0]) * s as f64 / sub as f64);
        }
    }
    grid.push(hi);
    let g = |x: f64| a.eval(x) - b.eval(x);
    let mut out = Vec::new();
    for w in grid.windows(2) {
        let (x0, x1) = (w[0], w[1]);
        let (g0, g1) = (g(x0), g(x1));
        if g0 == 0.0 {
            out.push((x0, ((g1 - g0) / (x1 - x0)).abs()));
            continue;
        }
        if g0 * g1 >= 0.0 {
            continue;
        }
        let root = match kind {
            Interpolation::Linear => x0 - g0 * (x1 - x0) / (g1 - g0),
            Interpolation::Cubic => {
                let (mut l, mut r, mut gl) = (x0, x1, g0);
                for _ in 0..80 {
                    let mid = 0.5 * (l + r);
                    let gm = g(mid);
                    if gm * gl <= 0.0 {
                        r = mid;
                    } else {
                        l = mid;
                        gl = gm;
                    }
                }
                0.5 * (l + r)
            }
        };
        out.push((root, ((g1 - g0) / (x1 - x0)).abs()));
    }
    if g(hi) == 0.0 {
        out.push((hi, 0.0));
    }
    out
}

/// The crossing with the steepest relative slope: where the curves are
/// most clearly distinct on either side.
fn principal_root(a: &Interpolant, b: &Interpolant, kind: Interpolation) -> Option<f64> {
    roots(a, b, kind)
        .into_iter()
        .max_by(|p, q| p.1.total_cmp(&q.1))
        .map(|r| r.0)
}

fn nearest_root(a: &Interpolant, b: &Interpolant, kind: Interpolation, target: f64) -> Option<f64> {
    roots(a, b, kind)
        .into_iter()
        .min_by(|p, q| (p.0 - target).abs().total_cmp(&(q.0 - target).abs()))
        .map(|r| r.0)
}

fn resample(points: &[CurvePoint], rng: &mut ChaCha8Rng) -> Vec<CurvePoint> {
    points
        .iter()
        .map(|p| {
            let y = if p.error > 0.0 && p.error.is_finite() {
                Normal::new(p.y, p.error).unwrap().sample(rng)
            } else {
                p.y
            };
            CurvePoint { y, ..*p }
        })
        .collect()
}

/// Crossings of every pair of curves (smaller size first).
pub fn crossing_points(curves: &[Curve], kind: Interpolation, resamples: usize, seed: u64) -> Result<CrossingReport> {
    let mut curves: Vec<&Curve> = curves.iter().collect();
    curves.sort_by_key(|c| c.size);
    let distinct = {
        let mut s: Vec<usize> = curves.iter().map(|c| c.size).collect();
        s.dedup();
        s.len()
    };
    if distinct < 2 {
        return Err(Error::Invalid("crossings need curves for at least two sizes".into()));
    }
    for c in &curves {
        c.check()?;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut crossings = Vec::new();
    for i in 0..curves.len() {
        for j in i + 1..curves.len() {
            let (ci, cj) = (curves[i], curves[j]);
            if ci.size == cj.size {
                continue;
            }
            let fi = Interpolant::new(&ci.points, kind);
            let fj = Interpolant::new(&cj.points, kind);
            let x = principal_root(&fi, &fj, kind);
            let mut error = f64::NAN;
            let mut failures = 0;
            if let Some(x0) = x {
                let mut xs = Vec::with_capacity(resamples);
                for _ in 0..resamples {
                    let ri = Interpolant::new(&resample(&ci.points, &mut rng), kind);
                    let rj = Interpolant::new(&resample(&cj.points, &mut rng), kind);
                    match nearest_root(&ri, &rj, kind, x0) {
                        Some(r) => xs.push(r),
                        None => failures += 1,
                    }
                }
                error = if xs.len() > 1 { super::stats::variance(&xs).sqrt() } else { f64::INFINITY };
            }
            crossings.push(Crossing {
                sizes: (ci.size, cj.size),
                y: x.map(|x| fi.eval(x)),
                x,
                error,
                failures,
            });
        }
    }
    let drift = fit_drift(&crossings);
    Ok(CrossingReport { crossings, drift })
}

fn fit_drift(crossings: &[Crossing]) -> Option<Drift> {
    let pts: Vec<(f64, f64, f64)> = crossings
        .iter()
        .filter_map(|c| {
            let x = c.x?;
            let w = if c.error > 0.0 && c.error.is_finite() { 1.0 / (c.error * c.error) } else { 1.0 };
            Some((2.0 / (c.sizes.0 + c.sizes.1) as f64, x, w))
        })
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let sw: f64 = pts.iter().map(|p| p.2).sum();
    let sx: f64 = pts.iter().map(|p| p.2 * p.0).sum();
    let sy: f64 = pts.iter().map(|p| p.2 * p.1).sum();
    let sxx: f64 = pts.iter().map(|p| p.2 * p.0 * p.0).sum();
    let sxy: f64 = pts.iter().map(|p| p.2 * p.0 * p.1).sum();
    let det = sw * sxx - sx * sx;
    if det.abs() < 1e-300 {
        return None;
    }
    let slope = (sw * sxy - sx * sy) / det;
    let intercept = (sxx * sy - sx * sxy) / det;
    Some(Drift {
        intercept,
        intercept_error: (sxx / det).sqrt(),
        slope,
    })
}
