//! Estimators on worldlines and equal-time slices.

use rand::Rng;
use serde::{Deserialize, Serialize};

use z2perc::analysis::stats::jackknife_blocks;
use z2perc::analysis::{autocorrelation, jackknife};
use z2perc::lattice::Lattice;
use z2perc::percolation::Detector;
use z2perc::{Basis, Error, GaugeConfig, Result};

use crate::worldline::Worldline;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QmcRecord {
    /// Total energy estimator `<E_diag> - n_events / beta`.
    pub energy: f64,
    /// Link averages of `tau^x`, `tau^z`, stars and plaquettes. Diagonal
    /// quantities are imaginary-time averages; off-diagonal ones come from
    /// event counts and are `None` when their coupling vanishes, except where
    /// a symmetry pins them to zero.
    pub tau_x: Option<f64>,
    pub tau_z: Option<f64>,
    pub star: Option<f64>,
    pub plaquette: Option<f64>,
    pub n_link_events: usize,
    pub n_four_events: usize,
    /// Slice percolation (X basis).
    pub percolates: Option<bool>,
    pub strength: Option<f64>,
    pub largest_cluster: Option<usize>,
    pub total_strings: Option<usize>,
    /// Slice loop products on the FM contour (Z basis).
    pub loop_full: Option<f64>,
    pub loop_half: Option<f64>,
}

/// Equal-time configuration at a uniformly random `tau`.
pub fn sample_slice<R: Rng + ?Sized>(wl: &Worldline, rng: &mut R) -> GaugeConfig {
    wl.slice(rng.random::<f64>() * wl.beta())
}

/// Axis-aligned square loop of side `max(1, L/4)` with a corner at the
/// origin, links in cyclic order (`+x`, `+y`, `-x`, `-y`). The open half is
/// the first half of the list.
pub fn fm_contour(lat: &Lattice) -> Vec<usize> {
    let s = (lat.size() / 4).max(1);
    let at = |x: usize, y: usize| lat.site_at(&[x % lat.size(), y % lat.size()]);
    let mut links = Vec::with_capacity(4 * s);
    for i in 0..s {
        links.push(lat.link(at(i, 0), 0));
    }
    for j in 0..s {
        links.push(lat.link(at(s, j), 1));
    }
    for i in (0..s).rev() {
        links.push(lat.link(at(i, s), 0));
    }
    for j in (0..s).rev() {
        links.push(lat.link(at(0, j), 1));
    }
    links
}

fn product(cfg: &GaugeConfig, links: &[usize]) -> f64 {
    let neg = links.iter().filter(|&&l| cfg.is_string(l)).count() % 2 == 1;
    if neg {
        -1.0
    } else {
        1.0
    }
}

/// `(full loop, open half)` products on one slice.
pub fn fm_products(cfg: &GaugeConfig) -> (f64, f64) {
    let c = fm_contour(cfg.lattice());
    (product(cfg, &c), product(cfg, &c[..c.len() / 2]))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FmEstimate {
    /// `<half> / <full>` (plain ratio).
    pub value: f64,
    pub error: f64,
    pub full: f64,
    pub full_error: f64,
    pub half: f64,
    pub half_error: f64,
    /// False when `<full>` is within two standard errors of zero.
    pub reliable: bool,
}

/// FM ratio over a stream of Z-basis slices, jackknife errors.
pub fn measure_fm<'a>(slices: impl IntoIterator<Item = &'a GaugeConfig>) -> Result<FmEstimate> {
    let mut full = Vec::new();
    let mut half = Vec::new();
    for cfg in slices {
        if cfg.basis() != Basis::Z {
            return Err(Error::Invalid("FM needs Z-basis slices".into()));
        }
        let (f, h) = fm_products(cfg);
        full.push(f);
        half.push(h);
    }
    fm_from_products(&full, &half)
}

/// As [`measure_fm`] from precomputed per-slice products.
pub fn fm_from_products(full: &[f64], half: &[f64]) -> Result<FmEstimate> {
    let n = full.len();
    if n == 0 || half.len() != n {
        return Err(Error::Invalid("FM needs a non-empty stream".into()));
    }
    let tau = |xs: &[f64]| autocorrelation(xs).map(|a| a.tau_int).unwrap_or(0.5);
    let blocks = jackknife_blocks(n, tau(full).max(tau(half)));
    let cols: [&[f64]; 2] = [half, full];
    let ratio = jackknife(&cols, blocks, |m| m[0] / m[1]);
    let f = jackknife(&cols, blocks, |m| m[1]);
    let h = jackknife(&cols, blocks, |m| m[0]);
    Ok(FmEstimate {
        value: ratio.value,
        error: ratio.error,
        full: f.value,
        full_error: f.error,
        half: h.value,
        half_error: h.error,
        reliable: f.value.abs() > 2.0 * f.error && f.error.is_finite(),
    })
}

impl Worldline {
    /// Imaginary-time average of `tau_l` summed over links.
    fn field_average(&self) -> f64 {
        (0..self.geo.n_links())
            .map(|l| self.integrate_product(&[l as u32], 0.0, self.beta))
            .sum::<f64>()
            / self.beta
    }

    fn diag_term_average(&self) -> f64 {
        self.geo.diag.iter().map(|t| self.integrate_product(t, 0.0, self.beta)).sum::<f64>() / self.beta
    }

    /// Worldline estimators (no slice observables).
    pub fn measure(&self) -> QmcRecord {
        let bc = self.bc();
        let beta = self.beta;
        let n_links = self.geo.n_links() as f64;
        let n_four = self.geo.four.len() as f64;
        let n_diag = self.geo.diag.len() as f64;
        let field = self.field_average();
        let diag = self.diag_term_average();
        let energy = -bc.diag1 * field - bc.diag4 * diag - (self.n_link_events + self.n_four_events) as f64 / beta;
        let off1 = |zero_by_symmetry: bool| {
            if bc.c1 > 0.0 {
                Some(self.n_link_events as f64 / (beta * bc.c1 * n_links))
            } else if zero_by_symmetry {
                Some(0.0)
            } else {
                None
            }
        };
        let off4 = (bc.c4 > 0.0).then(|| self.n_four_events as f64 / (beta * bc.c4 * n_four));
        // Without the single-link off-diagonal term a contractible loop of the
        // other Pauli operator commutes with H and anticommutes with it.
        let (tau_x, tau_z, star, plaquette) = match self.geo.basis {
            Basis::X => (Some(field / n_links), off1(true), Some(diag / n_diag), off4),
            Basis::Z => (off1(true), Some(field / n_links), off4, Some(diag / n_diag)),
        };
        QmcRecord {
            energy,
            tau_x,
            tau_z,
            star,
            plaquette,
            n_link_events: self.n_link_events,
            n_four_events: self.n_four_events,
            percolates: None,
            strength: None,
            largest_cluster: None,
            total_strings: None,
            loop_full: None,
            loop_half: None,
        }
    }

    /// Worldline estimators plus slice observables at `slice`.
    pub fn measure_with_slice(&self, slice: &GaugeConfig, det: &mut Detector) -> QmcRecord {
        let mut r = self.measure();
        match slice.basis() {
            Basis::X => {
                let rep = det.analyze(slice).expect("X-basis slice");
                r.percolates = Some(rep.percolates);
                r.strength = Some(rep.strength);
                r.largest_cluster = Some(rep.largest_cluster_links);
                r.total_strings = Some(rep.total_strings);
            }
            Basis::Z => {
                let (f, h) = fm_products(slice);
                r.loop_full = Some(f);
                r.loop_half = Some(h);
            }
        }
        r
    }
}
