//! Finite-size scaling collapse.
//!
//! Points are mapped to `u = L^{1/nu} (x - x_c)`, `v = y L^{beta_P/nu}`. The
//! quality of a collapse is a leave-one-size-out measure in the spirit of
//! Houdayer and Hartmann: each point is compared with the inverse-variance
//! mean `Y_i` of cubic-spline interpolants of every other size whose data
//! bracket its `u`, weighted by both error bars,
//!
//! `S = (1/N) sum_i (v_i - Y_i)^2 / (dv_i^2 + dY_i^2)`,
//!
//! which behaves like a reduced chi-squared. `S` is minimized by multi-start
//! Nelder-Mead; errors come from the curvature of `N S` at the minimum,
//! inflated by `sqrt(S)` when `S > 1`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::crossing::natural_spline;
use super::optimize::nelder_mead;
use super::Curve;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Ansatz {
    /// Dimensionless observable: `beta_P` fixed to 0.
    Binder,
    Strength,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CollapseFit {
    pub ansatz: Ansatz,
    pub x_c: f64,
    pub nu: f64,
    pub beta_p: f64,
    pub x_c_error: f64,
    pub nu_error: f64,
    /// Zero and not fitted for the Binder ansatz.
    pub beta_p_error: f64,
    /// Covariance of the fitted parameters in the order `(x_c, nu[, beta_P])`.
    pub covariance: Vec<Vec<f64>>,
    pub reduced_chi2: f64,
    pub points_used: usize,
    pub window: (f64, f64),
    pub converged: bool,
}

struct Point {
    size: f64,
    x: f64,
    y: f64,
    e: f64,
}

struct Data {
    /// Points grouped per size, each group sorted by x.
    groups: Vec<Vec<Point>>,
    total: usize,
}

impl Data {
    /// Returns `(S, N)`.
    fn quality(&self, x_c: f64, nu: f64, beta_p: f64) -> (f64, usize) {
        if !(nu > 0.02) || !nu.is_finite() || !x_c.is_finite() || !beta_p.is_finite() {
            return (f64::INFINITY, 0);
        }
        let scaled: Vec<Vec<(f64, f64, f64)>> = self
            .groups
            .iter()
            .map(|g| {
                g.iter()
                    .map(|p| {
                        let s = p.size.powf(beta_p / nu);
                        (p.size.powf(1.0 / nu) * (p.x - x_c), p.y * s, p.e * s)
                    })
                    .collect()
            })
            .collect();
        let splines: Vec<Spline> = scaled.iter().map(|g| Spline::new(g)).collect();
        let mut sum = 0.0;
        let mut n = 0;
        for (gi, group) in scaled.iter().enumerate() {
            for &(u, v, dv) in group {
                let (mut wsum, mut wy) = (0.0, 0.0);
                for (gj, spline) in splines.iter().enumerate() {
                    if gj == gi {
                        continue;
                    }
                    if let Some((y, var)) = spline.eval(u) {
                        wsum += 1.0 / var;
                        wy += y / var;
                    }
                }
                if wsum > 0.0 {
                    let y = wy / wsum;
                    sum += (v - y).powi(2) / (dv * dv + 1.0 / wsum);
                    n += 1;
                }
            }
        }
        // Demand overlap for most points so the optimizer cannot escape to
        // parameters where the sizes stop overlapping.
        if n * 2 < self.total {
            return (1e6 * (1.0 + (self.total - n) as f64), n);
        }
        (sum / n as f64, n)
    }
}

/// Natural cubic spline through one size's scaled points. Values are only
/// returned inside the data range; the variance is that of linear
/// interpolation between the bracketing points.
struct Spline<'a> {
    pts: &'a [(f64, f64, f64)],
    m: Vec<f64>,
}

impl<'a> Spline<'a> {
    fn new(pts: &'a [(f64, f64, f64)]) -> Self {
        let xs: Vec<f64> = pts.iter().map(|p| p.0).collect();
        let ys: Vec<f64> = pts.iter().map(|p| p.1).collect();
        Self {
            pts,
            m: natural_spline(&xs, &ys),
        }
    }

    fn eval(&self, u: f64) -> Option<(f64, f64)> {
        let idx = self.pts.partition_point(|q| q.0 <= u);
        if idx == 0 || idx == self.pts.len() {
            return None;
        }
        let (p0, p1) = (self.pts[idx - 1], self.pts[idx]);
        let h = p1.0 - p0.0;
        let a = (p1.0 - u) / h;
        let b = (u - p0.0) / h;
        let y = a * p0.1
            + b * p1.1
            + ((a * a * a - a) * self.m[idx - 1] + (b * b * b - b) * self.m[idx]) * h * h / 6.0;
        let var = (a * p0.2).powi(2) + (b * p1.2).powi(2);
        Some((y, var))
    }
}

pub fn collapse_fit(curves: &[Curve], ansatz: Ansatz, window: Option<(f64, f64)>) -> Result<CollapseFit> {
    let mut sizes: Vec<usize> = curves.iter().map(|c| c.size).collect();
    sizes.sort_unstable();
    sizes.dedup();
    if sizes.len() < 3 {
        return Err(Error::Invalid(format!("collapse needs >= 3 sizes, got {}", sizes.len())));
    }
    for c in curves {
        c.check()?;
    }
    let (lo, hi) = window.unwrap_or((f64::NEG_INFINITY, f64::INFINITY));
    let mut groups: Vec<Vec<Point>> = sizes
        .iter()
        .map(|&l| {
            curves
                .iter()
                .filter(|c| c.size == l)
                .flat_map(|c| c.points.iter())
                .filter(|p| p.x >= lo && p.x <= hi)
                .map(|p| Point {
                    size: l as f64,
                    x: p.x,
                    y: p.y,
                    // Zero error bars would make single points dominate.
                    e: p.error.max(1e-12 * p.y.abs().max(1e-300)),
                })
                .collect()
        })
        .collect();
    for g in &mut groups {
        g.sort_by(|a, b| a.x.total_cmp(&b.x));
    }
    let total: usize = groups.iter().map(|g| g.len()).sum();
    if groups.iter().any(|g| g.len() < 2) {
        return Err(Error::Invalid("every size needs >= 2 points inside the window".into()));
    }
    let xmin = groups.iter().flatten().map(|p| p.x).fold(f64::INFINITY, f64::min);
    let xmax = groups.iter().flatten().map(|p| p.x).fold(f64::NEG_INFINITY, f64::max);
    let range = xmax - xmin;
    if !(range > 0.0) {
        return Err(Error::Invalid("control parameter does not vary".into()));
    }
    let data = Data { groups, total };
    let with_beta = ansatz == Ansatz::Strength;
    let objective = |p: &[f64]| -> f64 {
        let beta = if with_beta { p[2] } else { 0.0 };
        data.quality(xmin + p[0] * range, p[1], beta).0
    };

    // Coarse grid, then refine the best few starts. x_c is fitted in units
    // of the data range so the fit is equivariant under affine rescaling.
    let mut starts = Vec::new();
    let betas: &[f64] = if with_beta { &[0.1, 0.4, 0.8, 1.2] } else { &[0.0] };
    for i in 0..9 {
        let xc = 0.1 + 0.1 * i as f64;
        for &nu in &[0.4, 0.6, 0.8, 1.0, 1.3, 1.7, 2.2] {
            for &b in betas {
                let p = if with_beta { vec![xc, nu, b] } else { vec![xc, nu] };
                starts.push((objective(&p), p));
            }
        }
    }
    starts.sort_by(|a, b| a.0.total_cmp(&b.0));
    let step: Vec<f64> = if with_beta { vec![0.05, 0.1, 0.1] } else { vec![0.05, 0.1] };
    let mut best: Option<(f64, Vec<f64>, bool)> = None;
    for (_, start) in starts.into_iter().take(4) {
        let mut f = |p: &[f64]| objective(p);
        let m = nelder_mead(&mut f, &start, &step, 1e-10, 4000);
        if best.as_ref().is_none_or(|b| m.value < b.0) {
            best = Some((m.value, m.x, m.converged));
        }
    }
    let (s_min, p, converged) = best.expect("at least one start");
    let beta_p = if with_beta { p[2] } else { 0.0 };
    let x_c = xmin + p[0] * range;
    let (_, n_used) = data.quality(x_c, p[1], beta_p);

    // Curvature of chi^2 = N S in physical parameters.
    let phys = |q: &[f64]| -> f64 {
        let b = if with_beta { q[2] } else { 0.0 };
        n_used as f64 * data.quality(q[0], q[1], b).0
    };
    let mut center = vec![x_c, p[1]];
    if with_beta {
        center.push(beta_p);
    }
    let h: Vec<f64> = vec![0.01 * range, 0.02 * p[1].abs().max(0.05), 0.02];
    let cov = inverse_half_hessian(&phys, &center, &h[..center.len()]);
    let inflate = s_min.max(1.0);
    let covariance: Vec<Vec<f64>> = cov.iter().map(|r| r.iter().map(|v| v * inflate).collect()).collect();
    let err = |i: usize| covariance[i][i].abs().sqrt();
    Ok(CollapseFit {
        ansatz,
        x_c,
        nu: p[1],
        beta_p,
        x_c_error: err(0),
        nu_error: err(1),
        beta_p_error: if with_beta { err(2) } else { 0.0 },
        reduced_chi2: s_min,
        points_used: n_used,
        window: (lo.max(xmin), hi.min(xmax)),
        converged,
        covariance,
    })
}

/// `(H/2)^{-1}` of `f` at `c` by central differences; falls back to the
/// diagonal when the Hessian is not positive definite.
fn inverse_half_hessian(f: &impl Fn(&[f64]) -> f64, c: &[f64], h: &[f64]) -> Vec<Vec<f64>> {
    let n = c.len();
    let f0 = f(c);
    let at = |d: &[(usize, f64)]| {
        let mut q = c.to_vec();
        for &(i, s) in d {
            q[i] += s;
        }
        f(&q)
    };
    let mut half = DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        half[(i, i)] = (at(&[(i, h[i])]) - 2.0 * f0 + at(&[(i, -h[i])])) / (2.0 * h[i] * h[i]);
        for j in 0..i {
            let v = (at(&[(i, h[i]), (j, h[j])]) - at(&[(i, h[i]), (j, -h[j])]) - at(&[(i, -h[i]), (j, h[j])])
                + at(&[(i, -h[i]), (j, -h[j])]))
                / (8.0 * h[i] * h[j]);
            half[(i, j)] = v;
            half[(j, i)] = v;
        }
    }
    let inv = match half.clone().cholesky() {
        Some(ch) => ch.inverse(),
        None => DMatrix::from_fn(n, n, |i, j| match (i == j, half[(i, i)] > 0.0) {
            (false, _) => 0.0,
            (true, true) => 1.0 / half[(i, i)],
            (true, false) => f64::INFINITY,
        }),
    };
    (0..n).map(|i| (0..n).map(|j| inv[(i, j)]).collect()).collect()
}
