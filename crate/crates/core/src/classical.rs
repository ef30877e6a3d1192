//! Metropolis samplers for the classical canonical and grand-canonical models.
//!
//! Canonical: `H = -h sum tau` with a fixed number of hard-core particles,
//! sampled with particle hops (Metropolis-Hastings, asymmetric proposals) and
//! plaquette flips. Grand-canonical: matter is eliminated through Gauss's
//! law, leaving `H = -h sum tau - mu sum_j (1 - A_j)/2` over free link spins,
//! sampled with single-link and plaquette flips.

use std::sync::Arc;
use std::time::Instant;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gauge::{init_dimers, Basis, CanonicalState, GaugeConfig};
use crate::lattice::{Lattice, StarEntry};
use crate::percolation::{Detector, PercolationReport};
use crate::rng::{chain_rng, ChainRng};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Ensemble {
    Canonical { n: usize },
    GrandCanonical { mu: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunParamsClassical {
    pub ensemble: Ensemble,
    pub h: f64,
    pub t_over_h: f64,
    pub dim: usize,
    pub size: usize,
    pub thermalization: u64,
    pub stride: u64,
    pub n_samples: usize,
    pub seed: u64,
    pub stream: u64,
}

impl RunParamsClassical {
    /// Schedule defaults: canonical `200 L^D` / `2 L^D`, grand-canonical
    /// `500 L^D` / `5 L^D` (thermalization / updates between samples).
    pub fn new(ensemble: Ensemble, dim: usize, size: usize, t_over_h: f64, n_samples: usize) -> Self {
        let volume = (size as u64).pow(dim as u32);
        let (therm, stride) = match ensemble {
            Ensemble::Canonical { .. } => (200 * volume, 2 * volume),
            Ensemble::GrandCanonical { .. } => (500 * volume, 5 * volume),
        };
        Self {
            ensemble,
            h: 1.0,
            t_over_h,
            dim,
            size,
            thermalization: therm,
            stride,
            n_samples,
            seed: 0,
            stream: 0,
        }
    }

    pub fn temperature(&self) -> f64 {
        self.t_over_h * self.h
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.h > 0.0 && self.h.is_finite()) {
            return Err(Error::Invalid(format!("h must be positive, got {}", self.h)));
        }
        if !(self.t_over_h > 0.0 && self.t_over_h.is_finite()) {
            return Err(Error::Invalid(format!("T/h must be positive, got {}", self.t_over_h)));
        }
        if self.stride == 0 || self.n_samples == 0 {
            return Err(Error::Invalid("stride and n_samples must be positive".into()));
        }
        if let Ensemble::GrandCanonical { mu } = self.ensemble {
            if !mu.is_finite() {
                return Err(Error::Invalid("mu must be finite".into()));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counter {
    pub proposed: u64,
    pub accepted: u64,
}

impl Counter {
    #[inline]
    pub fn record(&mut self, accepted: bool) {
        self.proposed += 1;
        self.accepted += accepted as u64;
    }

    pub fn rate(&self) -> f64 {
        if self.proposed == 0 {
            0.0
        } else {
            self.accepted as f64 / self.proposed as f64
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Acceptance {
    pub plaquette: Counter,
    pub hop: Counter,
    pub link: Counter,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub percolates: bool,
    pub strength: f64,
    pub largest_cluster: usize,
    pub total_strings: usize,
    pub matter_density: f64,
    pub energy: f64,
    pub pair_distance: Option<f64>,
}

impl SampleRecord {
    pub fn new(report: &PercolationReport, matter_density: f64, energy: f64, pair_distance: Option<f64>) -> Self {
        Self {
            percolates: report.percolates,
            strength: report.strength,
            largest_cluster: report.largest_cluster_links,
            total_strings: report.total_strings,
            matter_density,
            energy,
            pair_distance,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObservableSeries {
    pub params: RunParamsClassical,
    pub records: Vec<SampleRecord>,
    pub acceptance: Acceptance,
    pub wall_seconds: f64,
}

impl ObservableSeries {
    pub fn column(&self, f: impl Fn(&SampleRecord) -> f64) -> Vec<f64> {
        self.records.iter().map(f).collect()
    }
}

/// Hastings factor and Boltzmann weight of hopping particle `p` along `step`.
/// The hop is applied and undone; `state` is unchanged on return.
pub fn hop_acceptance(state: &mut CanonicalState, p: usize, step: StarEntry, beta_h: f64) -> f64 {
    let from = state.particle_site(p);
    let tau = state.config().spin(step.link as usize) as f64;
    let nn_before = state.free_neighbors(from) as f64;
    let mov_before = state.movable_count() as f64;
    state.hop(p, step);
    let nn_after = state.free_neighbors(step.neighbor as usize) as f64;
    let mov_after = state.movable_count() as f64;
    state.hop(p, back_step(state.lattice(), step));
    let ratio = (-2.0 * beta_h * tau).exp() * (nn_before / nn_after) * (mov_before / mov_after);
    ratio.min(1.0)
}

fn back_step(lat: &Lattice, step: StarEntry) -> StarEntry {
    *lat.star(step.neighbor as usize)
        .iter()
        .find(|e| e.link == step.link && !e.forward == step.forward)
        .expect("every link appears in both endpoint stars")
}

/// Hop a uniformly chosen movable particle to a uniformly chosen empty
/// neighbour. Returns `None` when nothing can move.
pub fn move_update<R: Rng + ?Sized>(state: &mut CanonicalState, beta_h: f64, rng: &mut R) -> Option<bool> {
    let m = state.movable_count();
    if m == 0 {
        return None;
    }
    let p = state.movable_particle(rng.random_range(0..m));
    let site = state.particle_site(p);
    let free = state.free_neighbors(site);
    let pick = rng.random_range(0..free);
    let step = *state.lattice()
        .star(site)
        .iter()
        .filter(|e| !state.is_occupied(e.neighbor as usize))
        .nth(pick)
        .unwrap();
    let from = site;
    let tau = state.config().spin(step.link as usize) as f64;
    let nn_before = free as f64;
    let mov_before = m as f64;
    state.hop(p, step);
    let nn_after = state.free_neighbors(step.neighbor as usize) as f64;
    let mov_after = state.movable_count() as f64;
    let ratio = (-2.0 * beta_h * tau).exp() * (nn_before / nn_after) * (mov_before / mov_after);
    let accept = ratio >= 1.0 || rng.random::<f64>() < ratio;
    if !accept {
        state.hop(p, back_step(state.lattice(), step));
        debug_assert_eq!(state.particle_site(p), from);
    }
    Some(accept)
}

/// `beta * Delta E` for flipping plaquette `plaq`: `2 beta h sum tau`.
#[inline]
pub fn plaquette_cost(cfg: &GaugeConfig, plaq: usize, beta_h: f64) -> f64 {
    let sum: i32 = cfg.lattice().plaquette(plaq).iter().map(|&l| cfg.spin(l as usize)).sum();
    2.0 * beta_h * sum as f64
}

pub fn plaquette_update<R: Rng + ?Sized>(cfg: &mut GaugeConfig, beta_h: f64, rng: &mut R) -> bool {
    let plaq = rng.random_range(0..cfg.lattice().plaquette_count());
    let cost = plaquette_cost(cfg, plaq, beta_h);
    let accept = cost <= 0.0 || rng.random::<f64>() < (-cost).exp();
    if accept {
        let links = *cfg.lattice().plaquette(plaq);
        for l in links {
            cfg.flip(l as usize);
        }
    }
    accept
}

/// `beta * Delta E` of flipping `link` under the grand-canonical energy.
#[inline]
pub fn link_flip_cost(cfg: &GaugeConfig, link: usize, beta_h: f64, beta_mu: f64) -> f64 {
    let (a, b) = cfg.lattice().link_sites(link);
    let stars = (cfg.star_product(a) + cfg.star_product(b)) as f64;
    2.0 * beta_h * cfg.spin(link) as f64 - beta_mu * stars
}

pub fn gc_link_flip<R: Rng + ?Sized>(cfg: &mut GaugeConfig, beta_h: f64, beta_mu: f64, rng: &mut R) -> bool {
    let link = rng.random_range(0..cfg.link_count());
    let cost = link_flip_cost(cfg, link, beta_h, beta_mu);
    let accept = cost <= 0.0 || rng.random::<f64>() < (-cost).exp();
    if accept {
        cfg.flip(link);
    }
    accept
}

#[derive(Clone, Debug)]
pub enum ClassicalState {
    Canonical(CanonicalState),
    Grand(GaugeConfig),
}

impl ClassicalState {
    pub fn config(&self) -> &GaugeConfig {
        match self {
            ClassicalState::Canonical(s) => s.config(),
            ClassicalState::Grand(c) => c,
        }
    }
}

/// One chain: state, couplings and counters.
#[derive(Clone, Debug)]
pub struct ClassicalSampler {
    pub state: ClassicalState,
    pub beta_h: f64,
    pub beta_mu: f64,
    pub acceptance: Acceptance,
    hops_allowed: bool,
}

impl ClassicalSampler {
    pub fn new<R: Rng + ?Sized>(params: &RunParamsClassical, rng: &mut R) -> Result<Self> {
        params.validate()?;
        let lat = Arc::new(Lattice::new(params.dim, params.size)?);
        let beta = 1.0 / params.temperature();
        let (state, beta_mu, hops_allowed) = match params.ensemble {
            Ensemble::Canonical { n } => {
                let s = init_dimers(&lat, n, rng)?;
                let allowed = n > 0 && n < lat.site_count();
                (ClassicalState::Canonical(s), 0.0, allowed)
            }
            Ensemble::GrandCanonical { mu } => {
                (ClassicalState::Grand(GaugeConfig::vacuum(&lat, Basis::X)), beta * mu, false)
            }
        };
        Ok(Self {
            state,
            beta_h: beta * params.h,
            beta_mu,
            acceptance: Acceptance::default(),
            hops_allowed,
        })
    }

    /// One Monte Carlo update: a fair coin between a plaquette flip and a
    /// particle hop (canonical) or link flip (grand-canonical). At zero or
    /// maximal filling only plaquette flips are used.
    pub fn step<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        let plaquette = rng.random::<bool>();
        match &mut self.state {
            ClassicalState::Canonical(s) => {
                if plaquette || !self.hops_allowed {
                    let a = plaquette_update_state(s, self.beta_h, rng);
                    self.acceptance.plaquette.record(a);
                } else {
                    match move_update(s, self.beta_h, rng) {
                        Some(a) => self.acceptance.hop.record(a),
                        None => {
                            let a = plaquette_update_state(s, self.beta_h, rng);
                            self.acceptance.plaquette.record(a);
                        }
                    }
                }
            }
            ClassicalState::Grand(cfg) => {
                if plaquette {
                    let a = plaquette_update(cfg, self.beta_h, rng);
                    self.acceptance.plaquette.record(a);
                } else {
                    let a = gc_link_flip(cfg, self.beta_h, self.beta_mu, rng);
                    self.acceptance.link.record(a);
                }
            }
        }
    }

    pub fn run<R: Rng + ?Sized>(&mut self, steps: u64, rng: &mut R) {
        for _ in 0..steps {
            self.step(rng);
        }
    }

    pub fn measure(&self, det: &mut Detector, h: f64, mu: f64) -> SampleRecord {
        let cfg = self.state.config();
        let report = det.analyze(cfg).expect("classical snapshots are X basis");
        let (energy, pair) = match &self.state {
            ClassicalState::Canonical(s) => {
                let pair = (s.particle_count() == 2)
                    .then(|| cfg.lattice().min_image_distance(s.particle_site(0), s.particle_site(1)));
                (cfg.energy_canonical(h), pair)
            }
            ClassicalState::Grand(_) => (cfg.energy_grand(h, mu), None),
        };
        SampleRecord::new(&report, cfg.matter_density(), energy, pair)
    }
}

fn plaquette_update_state<R: Rng + ?Sized>(s: &mut CanonicalState, beta_h: f64, rng: &mut R) -> bool {
    let plaq = rng.random_range(0..s.lattice().plaquette_count());
    let cost = plaquette_cost(s.config(), plaq, beta_h);
    let accept = cost <= 0.0 || rng.random::<f64>() < (-cost).exp();
    if accept {
        s.flip_plaquette(plaq);
    }
    accept
}

pub fn run_classical(params: &RunParamsClassical) -> Result<ObservableSeries> {
    run_classical_with(params, |_| {})
}

/// As [`run_classical`], handing every sampled snapshot to `on_sample`.
pub fn run_classical_with(
    params: &RunParamsClassical,
    mut on_sample: impl FnMut(&GaugeConfig),
) -> Result<ObservableSeries> {
    let started = Instant::now();
    let mut rng: ChainRng = chain_rng(params.seed, params.stream);
    let mut sampler = ClassicalSampler::new(params, &mut rng)?;
    let mu = match params.ensemble {
        Ensemble::GrandCanonical { mu } => mu,
        Ensemble::Canonical { .. } => 0.0,
    };
    sampler.run(params.thermalization, &mut rng);
    let mut det = Detector::new();
    let mut records = Vec::with_capacity(params.n_samples);
    for _ in 0..params.n_samples {
        sampler.run(params.stride, &mut rng);
        let cfg = sampler.state.config();
        debug_assert!(match &sampler.state {
            ClassicalState::Canonical(s) => cfg.gauss_residual(&s.matter_sites()).is_empty(),
            ClassicalState::Grand(_) => true,
        });
        on_sample(cfg);
        records.push(sampler.measure(&mut det, params.h, mu));
    }
    Ok(ObservableSeries {
        params: params.clone(),
        records,
        acceptance: sampler.acceptance,
        wall_seconds: started.elapsed().as_secs_f64(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn sq(l: usize) -> Arc<Lattice> {
        Arc::new(Lattice::new(2, l).unwrap())
    }

    /// Direct evaluation of the hop acceptance from energies and counts.
    fn hop_oracle(state: &CanonicalState, p: usize, step: StarEntry, beta_h: f64, h: f64) -> f64 {
        let count = |s: &CanonicalState, site: usize| {
            s.lattice().star(site).iter().filter(|e| !s.is_occupied(e.neighbor as usize)).count() as f64
        };
        let movable = |s: &CanonicalState| {
            (0..s.particle_count()).filter(|&q| count(s, s.particle_site(q)) > 0.0).count() as f64
        };
        let before = state.config().energy_canonical(h);
        let nn0 = count(state, state.particle_site(p));
        let m0 = movable(state);
        let mut cfg = state.config().clone();
        cfg.flip(step.link as usize);
        let after_state = CanonicalState::from_config(cfg);
        let after = after_state.config().energy_canonical(h);
        let nn1 = count(&after_state, step.neighbor as usize);
        let m1 = movable(&after_state);
        ((-beta_h / h * (after - before)).exp() * nn0 / nn1 * m0 / m1).min(1.0)
    }

    #[test]
    fn dimer_stretch_acceptance() {
        let lat = sq(6);
        let a = lat.site_at(&[2, 2]);
        let b = lat.site_at(&[3, 2]);
        let cfg = GaugeConfig::from_strings(&lat, Basis::X, [lat.link(a, 0)]).unwrap();
        let mut state = CanonicalState::from_config(cfg);
        let p = (0..2).find(|&q| state.particle_site(q) == b).unwrap();
        let beta_h = 0.5f64.ln() / -2.0;
        let step = *lat.star(b).iter().find(|e| e.dim == 0 && e.forward).unwrap();
        let acc = hop_acceptance(&mut state, p, step, beta_h);
        // Stretching costs 2h; the hopping particle goes from 3 to 4 free sides.
        assert!((acc - 0.5 * 3.0 / 4.0).abs() < 1e-12);
        assert!((acc - hop_oracle(&state, p, step, beta_h, 1.0)).abs() < 1e-12);
        state.check_consistency().unwrap();
    }

    #[test]
    fn dimer_stretch_with_unit_ratios() {
        // A third and fourth particle next to the target site equalize the
        // free-neighbour count; acceptance is then e^{-2 beta h} = 0.5.
        let lat = sq(6);
        let a = lat.site_at(&[1, 2]);
        let b = lat.site_at(&[2, 2]);
        let c = lat.site_at(&[4, 2]);
        let cfg = GaugeConfig::from_strings(&lat, Basis::X, [lat.link(a, 0), lat.link(c, 0)]).unwrap();
        let mut state = CanonicalState::from_config(cfg);
        let p = (0..4).find(|&q| state.particle_site(q) == b).unwrap();
        let step = *lat.star(b).iter().find(|e| e.dim == 0 && e.forward).unwrap();
        let beta_h = 0.5f64.ln() / -2.0;
        let acc = hop_acceptance(&mut state, p, step, beta_h);
        assert!((acc - 0.5).abs() < 1e-12, "{acc}");
    }

    #[test]
    fn random_hops_match_oracle() {
        let lat = sq(4);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut state = init_dimers(&lat, 6, &mut rng).unwrap();
        for _ in 0..400 {
            let _ = move_update(&mut state, 0.7, &mut rng);
            plaquette_update_state(&mut state, 0.7, &mut rng);
            state.check_consistency().unwrap();
            for p in 0..state.particle_count() {
                let site = state.particle_site(p);
                let steps: Vec<StarEntry> = lat
                    .star(site)
                    .iter()
                    .filter(|e| !state.is_occupied(e.neighbor as usize))
                    .copied()
                    .collect();
                for step in steps {
                    let want = hop_oracle(&state, p, step, 0.7, 1.0);
                    let got = hop_acceptance(&mut state, p, step, 0.7);
                    assert!((want - got).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn plaquette_costs() {
        let lat = sq(4);
        let mut cfg = GaugeConfig::vacuum(&lat, Basis::X);
        assert_eq!(plaquette_cost(&cfg, 3, 0.25), 2.0);
        for &l in lat.plaquette(3) {
            cfg.flip(l as usize);
        }
        assert_eq!(plaquette_cost(&cfg, 3, 0.25), -2.0);
        let cubic = Arc::new(Lattice::new(3, 3).unwrap());
        assert_eq!(plaquette_cost(&GaugeConfig::vacuum(&cubic, Basis::X), 40, 1.0), 8.0);
    }

    #[test]
    fn link_flip_costs() {
        let lat = sq(4);
        let vac = GaugeConfig::vacuum(&lat, Basis::X);
        assert!(((-link_flip_cost(&vac, 5, 1.0, 0.0)).exp() - (-2.0f64).exp()).abs() < 1e-15);
        // Creating two charges at chemical potential mu lowers the cost by 2 mu.
        assert_eq!(link_flip_cost(&vac, 5, 1.0, 0.3), 2.0 - 0.6);
        for (link, mu) in [(0, 0.7), (9, -1.1)] {
            let mut rng = ChaCha8Rng::seed_from_u64(link as u64);
            let mut cfg = vac.clone();
            for l in 0..32 {
                if rng.random::<bool>() {
                    cfg.flip(l);
                }
            }
            let e0 = cfg.energy_grand(1.0, mu);
            let cost = link_flip_cost(&cfg, link, 0.5, 0.5 * mu);
            cfg.flip(link);
            assert!((0.5 * (cfg.energy_grand(1.0, mu) - e0) - cost).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_density_never_hops() {
        let mut params = RunParamsClassical::new(Ensemble::Canonical { n: 0 }, 2, 4, 2.0, 5);
        params.thermalization = 100;
        params.stride = 10;
        let s = run_classical(&params).unwrap();
        assert_eq!(s.acceptance.hop.proposed, 0);
        assert_eq!(s.acceptance.plaquette.proposed, 150);
        assert!(s.records.iter().all(|r| r.matter_density == 0.0));
    }

    #[test]
    fn particle_number_conserved() {
        let lat = sq(6);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let params = RunParamsClassical::new(Ensemble::Canonical { n: 10 }, 2, 6, 1.5, 1);
        let mut sampler = ClassicalSampler::new(&params, &mut rng).unwrap();
        for _ in 0..1000 {
            sampler.run(1000, &mut rng);
            let ClassicalState::Canonical(s) = &sampler.state else { unreachable!() };
            assert_eq!(s.particle_count(), 10);
            assert_eq!(s.config().matter_count(), 10);
            s.check_consistency().unwrap();
        }
        assert_eq!(lat.site_count(), 36);
        assert!(sampler.acceptance.hop.accepted > 0);
    }

    #[test]
    fn runs_are_deterministic() {
        let mut params = RunParamsClassical::new(Ensemble::GrandCanonical { mu: 0.3 }, 2, 6, 2.0, 20);
        params.seed = 99;
        let a = run_classical(&params).unwrap();
        let b = run_classical(&params).unwrap();
        assert_eq!(a.records, b.records);
        params.stream = 1;
        assert_ne!(run_classical(&params).unwrap().records, a.records);
    }

    #[test]
    fn pair_distance_reported_for_two_particles() {
        let mut params = RunParamsClassical::new(Ensemble::Canonical { n: 2 }, 2, 6, 1.0, 10);
        params.thermalization = 1000;
        let s = run_classical(&params).unwrap();
        assert!(s.records.iter().all(|r| r.pair_distance.unwrap() >= 1.0));
        assert!(s.records.iter().all(|r| r.matter_density == 2.0 / 36.0));
    }

    #[test]
    fn invalid_params() {
        let mut p = RunParamsClassical::new(Ensemble::Canonical { n: 3 }, 2, 4, 1.0, 1);
        assert!(run_classical(&p).is_err());
        p.ensemble = Ensemble::Canonical { n: 2 };
        p.t_over_h = 0.0;
        assert!(run_classical(&p).is_err());
    }
}
