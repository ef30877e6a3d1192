//! Continuous imaginary-time configurations of the extended toric code,
//! `H = -mu sum A_s - J sum B_p - h sum X_l - lambda sum Z_l`.
//!
//! In the chosen basis one four-body term and one single-link term are
//! diagonal; the other two flip spins and appear as events on `[0, beta)`:
//!
//! | basis | diagonal          | four-body events | link events |
//! |-------|-------------------|------------------|-------------|
//! | X     | `mu` stars, `h`   | `J` plaquettes   | `lambda`    |
//! | Z     | `J` plaquettes, `lambda` | `mu` stars | `h`        |
//!
//! Each link stores its spin at `tau = 0` and the sorted times at which it
//! flips (from either kind of event). A proposed update is described by the
//! region of imaginary time over which each touched link is flipped (an
//! [`Overlay`]); the action change only needs those regions.

use std::sync::Arc;

use z2perc::lattice::Lattice;
use z2perc::{Basis, GaugeConfig};

use crate::params::{Couplings, QmcParams};

/// Region of `[0, beta)` over which one link is flipped: the parity at
/// `tau = 0` plus the sorted times where the parity toggles.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Overlay {
    pub start: bool,
    pub toggles: Vec<f64>,
}

impl Overlay {
    pub fn full() -> Self {
        Self {
            start: true,
            toggles: Vec::new(),
        }
    }

    /// Cyclic interval `[a, b)`; wraps through `tau = 0` when `a > b`.
    pub fn interval(a: f64, b: f64) -> Self {
        if a < b {
            Self {
                start: false,
                toggles: vec![a, b],
            }
        } else {
            Self {
                start: true,
                toggles: vec![b, a],
            }
        }
    }

    /// Symmetric difference with `other`.
    pub fn xor(&mut self, other: &Overlay) {
        self.start ^= other.start;
        self.toggles.extend_from_slice(&other.toggles);
        self.toggles.sort_by(f64::total_cmp);
        let mut out: Vec<f64> = Vec::with_capacity(self.toggles.len());
        for &t in &self.toggles {
            if out.last() == Some(&t) {
                out.pop();
            } else {
                out.push(t);
            }
        }
        self.toggles = out;
    }

    pub fn is_empty(&self) -> bool {
        !self.start && self.toggles.is_empty()
    }

    /// Calls `f(a, b)` for every maximal flipped interval inside `[0, beta)`.
    pub fn for_each_region(&self, beta: f64, mut f: impl FnMut(f64, f64)) {
        let mut on = self.start;
        let mut prev = 0.0;
        for &t in &self.toggles {
            if on && t > prev {
                f(prev, t);
            }
            on = !on;
            prev = t;
        }
        if on && beta > prev {
            f(prev, beta);
        }
    }
}

/// Links flipped by a proposed update, each with its overlay.
#[derive(Clone, Debug, Default)]
pub struct ChangeSet {
    pub entries: Vec<(u32, Overlay)>,
}

impl ChangeSet {
    pub fn clear(&mut self) {
        self.entries.clear();
    }

    pub fn add(&mut self, link: u32, overlay: &Overlay) {
        match self.entries.iter_mut().find(|e| e.0 == link) {
            Some(e) => e.1.xor(overlay),
            None => self.entries.push((link, overlay.clone())),
        }
    }
}

/// Which terms are diagonal and which create events, as link lists.
#[derive(Clone, Debug)]
pub struct Geometry {
    pub lattice: Arc<Lattice>,
    pub basis: Basis,
    /// Four-body event objects: plaquettes (X basis) or stars (Z basis).
    pub four: Vec<[u32; 4]>,
    /// Diagonal four-body terms: stars (X basis) or plaquettes (Z basis).
    pub diag: Vec<[u32; 4]>,
    pub link_four: Vec<[u32; 2]>,
    pub link_diag: Vec<[u32; 2]>,
}

impl Geometry {
    pub fn new(lattice: Arc<Lattice>, basis: Basis) -> Self {
        let stars: Vec<[u32; 4]> = (0..lattice.site_count())
            .map(|s| {
                let st = lattice.star(s);
                [st[0].link, st[1].link, st[2].link, st[3].link]
            })
            .collect();
        let plaqs: Vec<[u32; 4]> = (0..lattice.plaquette_count()).map(|p| *lattice.plaquette(p)).collect();
        let (four, diag) = match basis {
            Basis::X => (plaqs, stars),
            Basis::Z => (stars, plaqs),
        };
        let incidence = |objs: &[[u32; 4]]| {
            let mut inc = vec![Vec::new(); lattice.link_count()];
            for (o, links) in objs.iter().enumerate() {
                for &l in links {
                    inc[l as usize].push(o as u32);
                }
            }
            inc.into_iter()
                .map(|v| {
                    assert_eq!(v.len(), 2, "square-lattice links touch two stars and two plaquettes");
                    [v[0], v[1]]
                })
                .collect::<Vec<_>>()
        };
        let link_four = incidence(&four);
        let link_diag = incidence(&diag);
        Self {
            lattice,
            basis,
            four,
            diag,
            link_four,
            link_diag,
        }
    }

    pub fn n_links(&self) -> usize {
        self.lattice.link_count()
    }
}

#[derive(Clone, Debug)]
pub struct Worldline {
    pub(crate) geo: Arc<Geometry>,
    pub(crate) beta: f64,
    pub(crate) coup: Couplings,
    /// Spin at `tau = 0`; `true` is `-1`.
    pub(crate) s0: Vec<bool>,
    /// Sorted flip times per link, all event kinds.
    pub(crate) flips: Vec<Vec<f64>>,
    /// Sorted single-link event times per link.
    pub(crate) link_events: Vec<Vec<f64>>,
    /// Sorted four-body event times per object.
    pub(crate) four_events: Vec<Vec<f64>>,
    pub(crate) n_link_events: usize,
    pub(crate) n_four_events: usize,
}

/// Coefficients of the diagonal and off-diagonal terms in one basis.
#[derive(Clone, Copy, Debug, PartialEq)]
pub(crate) struct BasisCouplings {
    pub diag4: f64,
    pub diag1: f64,
    pub c4: f64,
    pub c1: f64,
}

impl Worldline {
    /// All spins `+1`, no events.
    pub fn new(p: &QmcParams) -> z2perc::Result<Self> {
        p.validate()?;
        let lat = Arc::new(Lattice::new(2, p.size)?);
        let geo = Arc::new(Geometry::new(lat, p.basis));
        Ok(Self::with_geometry(geo, p.beta, p.couplings))
    }

    pub fn with_geometry(geo: Arc<Geometry>, beta: f64, coup: Couplings) -> Self {
        let n = geo.n_links();
        let nf = geo.four.len();
        Self {
            geo,
            beta,
            coup,
            s0: vec![false; n],
            flips: vec![Vec::new(); n],
            link_events: vec![Vec::new(); n],
            four_events: vec![Vec::new(); nf],
            n_link_events: 0,
            n_four_events: 0,
        }
    }

    /// Worldline from explicit events. `strings[l]` is the spin of link `l`
    /// at `tau = 0` (`true` = `-1`). Fails unless every link flips an even
    /// number of times at distinct times in `[0, beta)`.
    pub fn from_events(
        p: &QmcParams,
        strings: Vec<bool>,
        link_events: Vec<Vec<f64>>,
        four_events: Vec<Vec<f64>>,
    ) -> z2perc::Result<Self> {
        let mut wl = Self::new(p)?;
        if strings.len() != wl.geo.n_links() || link_events.len() != wl.geo.n_links() || four_events.len() != wl.geo.four.len() {
            return Err(z2perc::Error::Invalid("event lists do not match the lattice".into()));
        }
        wl.s0 = strings;
        wl.link_events = link_events;
        wl.four_events = four_events;
        for v in wl.link_events.iter_mut().chain(wl.four_events.iter_mut()) {
            v.sort_by(f64::total_cmp);
        }
        wl.n_link_events = wl.link_events.iter().map(Vec::len).sum();
        wl.n_four_events = wl.four_events.iter().map(Vec::len).sum();
        wl.flips = wl.link_events.clone();
        for (o, times) in wl.four_events.iter().enumerate() {
            for &l in &wl.geo.four[o] {
                wl.flips[l as usize].extend_from_slice(times);
            }
        }
        for f in &mut wl.flips {
            f.sort_by(f64::total_cmp);
        }
        wl.check_consistency().map_err(z2perc::Error::Invalid)?;
        Ok(wl)
    }

    pub fn geometry(&self) -> &Arc<Geometry> {
        &self.geo
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn basis(&self) -> Basis {
        self.geo.basis
    }

    pub fn n_link_events(&self) -> usize {
        self.n_link_events
    }

    pub fn n_four_events(&self) -> usize {
        self.n_four_events
    }

    pub fn link_event_times(&self, link: usize) -> &[f64] {
        &self.link_events[link]
    }

    pub fn four_event_times(&self, obj: usize) -> &[f64] {
        &self.four_events[obj]
    }

    pub fn initial_spins(&self) -> &[bool] {
        &self.s0
    }

    pub(crate) fn bc(&self) -> BasisCouplings {
        let c = self.coup;
        match self.geo.basis {
            Basis::X => BasisCouplings {
                diag4: c.mu,
                diag1: c.h,
                c4: c.j,
                c1: c.lambda,
            },
            Basis::Z => BasisCouplings {
                diag4: c.j,
                diag1: c.lambda,
                c4: c.mu,
                c1: c.h,
            },
        }
    }

    /// Spin of `link` just after time `t`; `true` is `-1`.
    #[inline]
    pub fn is_string_at(&self, link: usize, t: f64) -> bool {
        let n = self.flips[link].partition_point(|&x| x <= t);
        self.s0[link] ^ (n % 2 == 1)
    }

    /// Equal-time configuration at `t`.
    pub fn slice(&self, t: f64) -> GaugeConfig {
        let mut cfg = GaugeConfig::vacuum(&self.geo.lattice, self.geo.basis);
        for l in 0..self.geo.n_links() {
            if self.is_string_at(l, t) {
                cfg.set_string(l, true);
            }
        }
        cfg
    }

    /// `int_a^b prod_{l in links} tau_l(t) dt` for `0 <= a <= b <= beta`.
    pub fn integrate_product(&self, links: &[u32], a: f64, b: f64) -> f64 {
        debug_assert!(links.len() <= 4);
        let mut neg = false;
        let mut pos = [0usize; 4];
        let mut end = [0usize; 4];
        for (k, &l) in links.iter().enumerate() {
            let f = &self.flips[l as usize];
            let i = f.partition_point(|&x| x <= a);
            neg ^= self.s0[l as usize] ^ (i % 2 == 1);
            pos[k] = i;
            end[k] = f.partition_point(|&x| x < b);
        }
        let mut total = 0.0;
        let mut prev = a;
        loop {
            let mut best = f64::INFINITY;
            let mut which = usize::MAX;
            for k in 0..links.len() {
                if pos[k] < end[k] {
                    let t = self.flips[links[k] as usize][pos[k]];
                    if t < best {
                        best = t;
                        which = k;
                    }
                }
            }
            if which == usize::MAX {
                break;
            }
            total += if neg { prev - best } else { best - prev };
            prev = best;
            neg = !neg;
            pos[which] += 1;
        }
        total + if neg { prev - b } else { b - prev }
    }

    /// Change of `int E_diag dtau` if the changes were applied.
    pub fn delta_action(&self, changes: &ChangeSet) -> f64 {
        let bc = self.bc();
        let beta = self.beta;
        let mut ds = 0.0;
        if bc.diag1 != 0.0 {
            for (l, ov) in &changes.entries {
                let mut s = 0.0;
                ov.for_each_region(beta, |a, b| s += self.integrate_product(&[*l], a, b));
                ds += 2.0 * bc.diag1 * s;
            }
        }
        if bc.diag4 != 0.0 {
            let mut seen: [u32; 32] = [u32::MAX; 32];
            let mut n_seen = 0;
            let mut spill: Vec<u32> = Vec::new();
            for (l, _) in &changes.entries {
                for &term in &self.geo.link_diag[*l as usize] {
                    let known = seen[..n_seen].contains(&term) || spill.contains(&term);
                    if known {
                        continue;
                    }
                    if n_seen < seen.len() {
                        seen[n_seen] = term;
                        n_seen += 1;
                    } else {
                        spill.push(term);
                    }
                    let links = &self.geo.diag[term as usize];
                    let mut ov = Overlay::default();
                    for (cl, cov) in &changes.entries {
                        if links.contains(cl) {
                            ov.xor(cov);
                        }
                    }
                    if ov.is_empty() {
                        continue;
                    }
                    let mut s = 0.0;
                    ov.for_each_region(beta, |a, b| s += self.integrate_product(links, a, b));
                    ds += 2.0 * bc.diag4 * s;
                }
            }
        }
        ds
    }

    /// Apply flip regions to the spin histories (not to the event lists).
    pub(crate) fn apply(&mut self, changes: &ChangeSet) {
        for (l, ov) in &changes.entries {
            let l = *l as usize;
            self.s0[l] ^= ov.start;
            for &t in &ov.toggles {
                toggle_time(&mut self.flips[l], t);
            }
            debug_assert!(self.flips[l].len() % 2 == 0, "link {l} lost periodicity");
        }
    }

    pub(crate) fn has_flip(&self, link: usize, t: f64) -> bool {
        self.flips[link].binary_search_by(|x| x.total_cmp(&t)).is_ok()
    }

    /// `int_0^beta E_diag dtau`.
    pub fn diagonal_action(&self) -> f64 {
        let bc = self.bc();
        let mut s = 0.0;
        if bc.diag1 != 0.0 {
            for l in 0..self.geo.n_links() {
                s -= bc.diag1 * self.integrate_product(&[l as u32], 0.0, self.beta);
            }
        }
        if bc.diag4 != 0.0 {
            for term in &self.geo.diag {
                s -= bc.diag4 * self.integrate_product(term, 0.0, self.beta);
            }
        }
        s
    }

    /// `log W = N_4 log c4 + N_1 log c1 - int E_diag`; `-inf` when an event
    /// has zero coupling.
    pub fn log_weight(&self) -> f64 {
        let bc = self.bc();
        let term = |n: usize, c: f64| if n == 0 { 0.0 } else { n as f64 * c.ln() };
        term(self.n_four_events, bc.c4) + term(self.n_link_events, bc.c1) - self.diagonal_action()
    }

    /// Every link flips an even number of times, and the flip lists are
    /// exactly the union of the event lists.
    pub fn check_consistency(&self) -> Result<(), String> {
        let geo = &self.geo;
        let mut expect: Vec<Vec<f64>> = self.link_events.clone();
        for (o, times) in self.four_events.iter().enumerate() {
            for &l in &geo.four[o] {
                expect[l as usize].extend_from_slice(times);
            }
        }
        for (l, e) in expect.iter_mut().enumerate() {
            e.sort_by(f64::total_cmp);
            if *e != self.flips[l] {
                return Err(format!("flip list of link {l} disagrees with its events"));
            }
            if e.len() % 2 != 0 {
                return Err(format!("link {l} flips an odd number of times"));
            }
            if e.windows(2).any(|w| w[0] >= w[1]) {
                return Err(format!("link {l} has tied or unsorted flip times"));
            }
        }
        let n1: usize = self.link_events.iter().map(|v| v.len()).sum();
        let n4: usize = self.four_events.iter().map(|v| v.len()).sum();
        if n1 != self.n_link_events || n4 != self.n_four_events {
            return Err("event counters are stale".into());
        }
        if self.flips.iter().flatten().any(|&t| !(0.0..self.beta).contains(&t)) {
            return Err("event time outside [0, beta)".into());
        }
        Ok(())
    }
}

pub(crate) fn toggle_time(v: &mut Vec<f64>, t: f64) {
    match v.binary_search_by(|x| x.total_cmp(&t)) {
        Ok(i) => {
            v.remove(i);
        }
        Err(i) => v.insert(i, t),
    }
}

pub(crate) fn insert_time(v: &mut Vec<f64>, t: f64) {
    let i = v.partition_point(|&x| x < t);
    v.insert(i, t);
}

pub(crate) fn remove_time(v: &mut Vec<f64>, t: f64) {
    let i = v.binary_search_by(|x| x.total_cmp(&t)).expect("event time present");
    v.remove(i);
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::QmcParams;

    fn wl(basis: Basis, l: usize, beta: f64) -> Worldline {
        let mut p = QmcParams::ground_state(l, 0.2, 0.2, basis);
        p.beta = beta;
        Worldline::new(&p).unwrap()
    }

    #[test]
    fn overlay_regions() {
        let mut o = Overlay::interval(0.8, 0.2);
        let mut regions = Vec::new();
        o.for_each_region(1.0, |a, b| regions.push((a, b)));
        assert_eq!(regions, vec![(0.0, 0.2), (0.8, 1.0)]);
        o.xor(&Overlay::interval(0.1, 0.3));
        regions.clear();
        o.for_each_region(1.0, |a, b| regions.push((a, b)));
        assert_eq!(regions, vec![(0.0, 0.1), (0.2, 0.3), (0.8, 1.0)]);
        let mut full = Overlay::full();
        full.xor(&Overlay::full());
        assert!(full.is_empty());
    }

    #[test]
    fn vacuum_weight() {
        let w = wl(Basis::X, 4, 3.0);
        // 16 stars at mu = 1 plus 32 links at h = 0.2.
        let want = -3.0 * (-16.0 - 32.0 * 0.2);
        assert!((w.log_weight() - want).abs() < 1e-12);
        w.check_consistency().unwrap();
    }

    #[test]
    fn product_integral_with_flips() {
        let mut w = wl(Basis::X, 2, 1.0);
        let mut cs = ChangeSet::default();
        cs.add(0, &Overlay::interval(0.25, 0.5));
        cs.add(1, &Overlay::interval(0.4, 0.9));
        w.apply(&cs);
        assert!((w.integrate_product(&[0], 0.0, 1.0) - 0.5).abs() < 1e-12);
        // Product negative on [0.25, 0.4) and [0.5, 0.9).
        assert!((w.integrate_product(&[0, 1], 0.0, 1.0) - (1.0 - 2.0 * 0.55)).abs() < 1e-12);
        assert!((w.integrate_product(&[0, 1], 0.3, 0.6) - (-0.1 + 0.1 - 0.1)).abs() < 1e-12);
        assert!(!w.is_string_at(0, 0.2) && w.is_string_at(0, 0.3) && !w.is_string_at(0, 0.6));
    }

    #[test]
    fn delta_action_matches_recomputation() {
        for basis in [Basis::X, Basis::Z] {
            let mut w = wl(basis, 3, 2.0);
            let mut cs = ChangeSet::default();
            cs.add(4, &Overlay::interval(0.3, 1.1));
            cs.add(7, &Overlay::interval(1.7, 0.2));
            cs.add(8, &Overlay::full());
            let s0 = w.diagonal_action();
            let ds = w.delta_action(&cs);
            w.apply(&cs);
            assert!((w.diagonal_action() - s0 - ds).abs() < 1e-10, "{basis:?}");
            let mut cs2 = ChangeSet::default();
            cs2.add(4, &Overlay::interval(0.5, 0.9));
            cs2.add(5, &Overlay::interval(0.5, 0.9));
            cs2.add(13, &Overlay::interval(1.9, 0.1));
            let s1 = w.diagonal_action();
            let ds2 = w.delta_action(&cs2);
            w.apply(&cs2);
            assert!((w.diagonal_action() - s1 - ds2).abs() < 1e-10);
        }
    }
}
