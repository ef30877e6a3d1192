//! Exact diagonalization of the extended toric code on the full (unconstrained)
//! link Hilbert space, in the `tau^z` product basis. Bit `l` set means
//! `tau^z_l = -1`.
//!
//! Up to 12 links the spectrum is computed densely and thermal averages are
//! available; up to 18 links only the ground energy (Lanczos).

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use serde::{Deserialize, Serialize};

use z2perc::lattice::Lattice;
use z2perc::rng::chain_rng;
use z2perc::{Error, Result};

use crate::params::Couplings;

pub const MAX_LINKS: usize = 18;
pub const MAX_DENSE_LINKS: usize = 12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Thermal {
    pub beta: f64,
    pub energy: f64,
    /// Link average and per-link values of `<tau^x>`.
    pub tau_x: f64,
    pub tau_x_links: Vec<f64>,
    pub tau_z: f64,
    pub star: f64,
    pub plaquette: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EdResult {
    pub size: usize,
    pub couplings: Couplings,
    pub ground_energy: f64,
    /// `None` above [`MAX_DENSE_LINKS`] links.
    pub thermal: Option<Thermal>,
}

struct Model {
    n_links: usize,
    stars: Vec<u32>,
    plaqs: Vec<u32>,
    c: Couplings,
}

impl Model {
    fn new(size: usize, c: Couplings) -> Result<Self> {
        let lat = Lattice::new(2, size)?;
        if lat.link_count() > MAX_LINKS {
            return Err(Error::Invalid(format!(
                "exact diagonalization limited to {MAX_LINKS} links, L={size} has {}",
                lat.link_count()
            )));
        }
        let mask = |links: &mut dyn Iterator<Item = u32>| links.fold(0u32, |m, l| m ^ (1 << l));
        let stars = (0..lat.site_count())
            .map(|s| mask(&mut lat.star(s).iter().map(|e| e.link)))
            .collect();
        let plaqs = (0..lat.plaquette_count())
            .map(|p| mask(&mut lat.plaquette(p).iter().copied()))
            .collect();
        Ok(Self {
            n_links: lat.link_count(),
            stars,
            plaqs,
            c,
        })
    }

    fn dim(&self) -> usize {
        1 << self.n_links
    }

    fn parity(x: u32) -> f64 {
        if x.count_ones() % 2 == 0 {
            1.0
        } else {
            -1.0
        }
    }

    fn plaquette_sum(&self, i: u32) -> f64 {
        self.plaqs.iter().map(|&m| Self::parity(i & m)).sum()
    }

    fn z_sum(&self, i: u32) -> f64 {
        self.n_links as f64 - 2.0 * i.count_ones() as f64
    }

    fn diagonal(&self, i: u32) -> f64 {
        -self.c.j * self.plaquette_sum(i) - self.c.lambda * self.z_sum(i)
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        for (i, v) in y.iter_mut().enumerate() {
            *v = self.diagonal(i as u32) * x[i];
        }
        for (i, &xi) in x.iter().enumerate() {
            if xi == 0.0 {
                continue;
            }
            for &m in &self.stars {
                y[i ^ m as usize] -= self.c.mu * xi;
            }
            for l in 0..self.n_links {
                y[i ^ (1 << l)] -= self.c.h * xi;
            }
        }
    }

    fn dense(&self) -> DMatrix<f64> {
        let d = self.dim();
        let mut m = DMatrix::zeros(d, d);
        for i in 0..d {
            m[(i, i)] = self.diagonal(i as u32);
            for &s in &self.stars {
                m[(i ^ s as usize, i)] -= self.c.mu;
            }
            for l in 0..self.n_links {
                m[(i ^ (1 << l), i)] -= self.c.h;
            }
        }
        m
    }
}

/// Ground energy and, for `L = 2`, thermal averages at `beta`.
pub fn ed_solve(size: usize, couplings: Couplings, beta: f64) -> Result<EdResult> {
    if !(beta > 0.0) {
        return Err(Error::Invalid(format!("beta must be positive, got {beta}")));
    }
    let model = Model::new(size, couplings)?;
    if model.n_links > MAX_DENSE_LINKS {
        return Ok(EdResult {
            size,
            couplings,
            ground_energy: lanczos_ground(&model),
            thermal: None,
        });
    }
    let eig = SymmetricEigen::new(model.dense());
    let e0 = eig.eigenvalues.min();
    let weights: DVector<f64> = eig.eigenvalues.map(|e| (-beta * (e - e0)).exp());
    let z = weights.sum();
    let energy = eig.eigenvalues.dot(&weights) / z;
    // Thermal density matrix in the computational basis.
    let v = &eig.eigenvectors;
    let scaled = v * DMatrix::from_diagonal(&weights);
    let rho = scaled * v.transpose() / z;
    let d = model.dim();
    let tau_x_links: Vec<f64> = (0..model.n_links).map(|l| (0..d).map(|i| rho[(i, i ^ (1 << l))]).sum()).collect();
    let star = model
        .stars
        .iter()
        .map(|&m| (0..d).map(|i| rho[(i, i ^ m as usize)]).sum::<f64>())
        .sum::<f64>()
        / model.stars.len() as f64;
    let diag_avg = |f: &dyn Fn(u32) -> f64| (0..d).map(|i| rho[(i, i)] * f(i as u32)).sum::<f64>();
    let plaquette = diag_avg(&|i| model.plaquette_sum(i)) / model.plaqs.len() as f64;
    let tau_z = diag_avg(&|i| model.z_sum(i)) / model.n_links as f64;
    Ok(EdResult {
        size,
        couplings,
        ground_energy: e0,
        thermal: Some(Thermal {
            beta,
            energy,
            tau_x: tau_x_links.iter().sum::<f64>() / model.n_links as f64,
            tau_x_links,
            tau_z,
            star,
            plaquette,
        }),
    })
}

/// Plain Lanczos (no reorthogonalization); the lowest Ritz value is
/// stable against the spurious copies this produces.
fn lanczos_ground(model: &Model) -> f64 {
    let d = model.dim();
    let mut rng = chain_rng(0x1a2c, d as u64);
    let mut v: Vec<f64> = (0..d).map(|_| rng.random::<f64>() - 0.5).collect();
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.iter_mut().for_each(|x| *x /= norm);
    let mut prev = vec![0.0; d];
    let mut w = vec![0.0; d];
    let mut alpha = Vec::new();
    let mut beta: Vec<f64> = Vec::new();
    let mut last = f64::INFINITY;
    for k in 0..400 {
        model.apply(&v, &mut w);
        let a: f64 = w.iter().zip(&v).map(|(x, y)| x * y).sum();
        alpha.push(a);
        let b_prev = if k > 0 { beta[k - 1] } else { 0.0 };
        for i in 0..d {
            w[i] -= a * v[i] + b_prev * prev[i];
        }
        let b = w.iter().map(|x| x * x).sum::<f64>().sqrt();
        let ritz = tridiagonal_min(&alpha, &beta);
        if (ritz - last).abs() < 1e-11 * ritz.abs().max(1.0) || b < 1e-12 {
            return ritz;
        }
        last = ritz;
        beta.push(b);
        std::mem::swap(&mut prev, &mut v);
        for i in 0..d {
            v[i] = w[i] / b;
        }
    }
    last
}

fn tridiagonal_min(alpha: &[f64], beta: &[f64]) -> f64 {
    let n = alpha.len();
    let mut t = DMatrix::zeros(n, n);
    for i in 0..n {
        t[(i, i)] = alpha[i];
        if i + 1 < n {
            t[(i, i + 1)] = beta[i];
            t[(i + 1, i)] = beta[i];
        }
    }
    SymmetricEigen::new(t).eigenvalues.min()
}
