//! Electric-field snapshots in the `g = +1` gauge sector.
//!
//! Link spins are packed one bit per link; a set bit is a string
//! (`tau^x = -1`). Matter occupation is read off Gauss's law:
//! `n_j = 1` iff an odd number of strings meet at `j`.

use std::sync::Arc;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{Lattice, StarEntry};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Basis {
    /// Electric-field (`tau^x`) eigenbasis; the only basis percolation is defined on.
    X,
    Z,
}

impl Basis {
    pub fn code(self) -> u8 {
        match self {
            Basis::X => 0,
            Basis::Z => 1,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(Basis::X),
            1 => Some(Basis::Z),
            _ => None,
        }
    }
}

#[derive(Clone, Debug)]
pub struct GaugeConfig {
    lattice: Arc<Lattice>,
    bits: Vec<u64>,
    basis: Basis,
}

impl PartialEq for GaugeConfig {
    fn eq(&self, other: &Self) -> bool {
        self.basis == other.basis
            && self.bits == other.bits
            && self.lattice.dim() == other.lattice.dim()
            && self.lattice.size() == other.lattice.size()
    }
}

impl GaugeConfig {
    /// All spins `+1`.
    pub fn vacuum(lattice: &Arc<Lattice>, basis: Basis) -> Self {
        Self {
            lattice: Arc::clone(lattice),
            bits: vec![0; lattice.link_count().div_ceil(64)],
            basis,
        }
    }

    pub fn from_strings<I: IntoIterator<Item = usize>>(
        lattice: &Arc<Lattice>,
        basis: Basis,
        strings: I,
    ) -> Result<Self> {
        let mut cfg = Self::vacuum(lattice, basis);
        for l in strings {
            if l >= lattice.link_count() {
                return Err(Error::OutOfRange {
                    kind: "link",
                    index: l,
                    count: lattice.link_count(),
                });
            }
            cfg.set_string(l, true);
        }
        Ok(cfg)
    }

    /// Rebuild from packed words; bits beyond `link_count` must be clear.
    pub fn from_words(lattice: &Arc<Lattice>, basis: Basis, words: Vec<u64>) -> Result<Self> {
        let n = lattice.link_count();
        if words.len() != n.div_ceil(64) {
            return Err(Error::Invalid(format!(
                "expected {} words for {} links, got {}",
                n.div_ceil(64),
                n,
                words.len()
            )));
        }
        if n % 64 != 0 && words[n / 64] >> (n % 64) != 0 {
            return Err(Error::Invalid("padding bits set".into()));
        }
        Ok(Self {
            lattice: Arc::clone(lattice),
            bits: words,
            basis,
        })
    }

    #[inline]
    pub fn lattice(&self) -> &Arc<Lattice> {
        &self.lattice
    }

    #[inline]
    pub fn basis(&self) -> Basis {
        self.basis
    }

    pub fn with_basis(mut self, basis: Basis) -> Self {
        self.basis = basis;
        self
    }

    #[inline]
    pub fn words(&self) -> &[u64] {
        &self.bits
    }

    #[inline]
    pub fn link_count(&self) -> usize {
        self.lattice.link_count()
    }

    #[inline]
    pub fn is_string(&self, link: usize) -> bool {
        (self.bits[link >> 6] >> (link & 63)) & 1 == 1
    }

    /// `tau` value of the link: `+1` or `-1`.
    #[inline]
    pub fn spin(&self, link: usize) -> i32 {
        1 - 2 * (self.is_string(link) as i32)
    }

    #[inline]
    pub fn flip(&mut self, link: usize) {
        self.bits[link >> 6] ^= 1 << (link & 63);
    }

    #[inline]
    pub fn set_string(&mut self, link: usize, string: bool) {
        if string {
            self.bits[link >> 6] |= 1 << (link & 63);
        } else {
            self.bits[link >> 6] &= !(1 << (link & 63));
        }
    }

    pub fn string_count(&self) -> usize {
        self.bits.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn strings(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.link_count()).filter(move |&l| self.is_string(l))
    }

    /// Product of link spins over the star of `site`.
    #[inline]
    pub fn star_product(&self, site: usize) -> i32 {
        if self.star_odd(site) {
            -1
        } else {
            1
        }
    }

    /// Derived matter occupation `n_j`.
    #[inline]
    pub fn star_odd(&self, site: usize) -> bool {
        self.lattice
            .star(site)
            .iter()
            .fold(false, |acc, e| acc ^ self.is_string(e.link as usize))
    }

    pub fn matter_sites(&self) -> Vec<usize> {
        (0..self.lattice.site_count())
            .filter(|&s| self.star_odd(s))
            .collect()
    }

    pub fn matter_count(&self) -> usize {
        (0..self.lattice.site_count())
            .filter(|&s| self.star_odd(s))
            .count()
    }

    pub fn matter_density(&self) -> f64 {
        self.matter_count() as f64 / self.lattice.site_count() as f64
    }

    /// Sites where `(-1)^{n_j} prod tau = -1`, with `n_j` taken from `matter`.
    pub fn gauss_residual(&self, matter: &[usize]) -> Vec<usize> {
        let mut occupied = vec![false; self.lattice.site_count()];
        for &s in matter {
            if s < occupied.len() {
                occupied[s] = true;
            }
        }
        (0..self.lattice.site_count())
            .filter(|&s| self.star_odd(s) != occupied[s])
            .collect()
    }

    /// `-h * sum_l tau_l`.
    pub fn energy_canonical(&self, h: f64) -> f64 {
        let strings = self.string_count() as f64;
        -h * (self.link_count() as f64 - 2.0 * strings)
    }

    /// `-h * sum_l tau_l - mu * sum_j n_j` with `n_j` from Gauss's law.
    pub fn energy_grand(&self, h: f64, mu: f64) -> f64 {
        self.energy_canonical(h) - mu * self.matter_count() as f64
    }
}

/// Canonical-ensemble state: a snapshot plus explicit particle bookkeeping.
#[derive(Clone, Debug)]
pub struct CanonicalState {
    config: GaugeConfig,
    particles: Vec<u32>,
    occupant: Vec<u32>,
    movable: Vec<u32>,
    movable_slot: Vec<u32>,
}

const NONE: u32 = u32::MAX;

impl CanonicalState {
    /// Wrap a Gauss-consistent configuration; particles are the odd stars.
    pub fn from_config(config: GaugeConfig) -> Self {
        let sites = config.matter_sites();
        let lat = Arc::clone(config.lattice());
        let mut occupant = vec![NONE; lat.site_count()];
        let particles: Vec<u32> = sites.iter().map(|&s| s as u32).collect();
        for (i, &s) in sites.iter().enumerate() {
            occupant[s] = i as u32;
        }
        let mut state = Self {
            config,
            movable_slot: vec![NONE; particles.len()],
            particles,
            occupant,
            movable: Vec::new(),
        };
        for p in 0..state.particles.len() {
            state.refresh(p);
        }
        state
    }

    #[inline]
    pub fn config(&self) -> &GaugeConfig {
        &self.config
    }

    pub fn into_config(self) -> GaugeConfig {
        self.config
    }

    #[inline]
    pub fn lattice(&self) -> &Arc<Lattice> {
        self.config.lattice()
    }

    #[inline]
    pub fn particle_count(&self) -> usize {
        self.particles.len()
    }

    #[inline]
    pub fn particle_site(&self, p: usize) -> usize {
        self.particles[p] as usize
    }

    pub fn matter_sites(&self) -> Vec<usize> {
        let mut v: Vec<usize> = self.particles.iter().map(|&s| s as usize).collect();
        v.sort_unstable();
        v
    }

    #[inline]
    pub fn is_occupied(&self, site: usize) -> bool {
        self.occupant[site] != NONE
    }

    /// Number of empty nearest-neighbour directions of `site`.
    #[inline]
    pub fn free_neighbors(&self, site: usize) -> usize {
        self.lattice()
            .star(site)
            .iter()
            .filter(|e| !self.is_occupied(e.neighbor as usize))
            .count()
    }

    #[inline]
    pub fn movable_count(&self) -> usize {
        self.movable.len()
    }

    #[inline]
    pub fn movable_particle(&self, k: usize) -> usize {
        self.movable[k] as usize
    }

    pub fn is_movable(&self, p: usize) -> bool {
        self.movable_slot[p] != NONE
    }

    /// Plaquette flips do not touch matter, so the cache stays valid.
    #[inline]
    pub fn flip_plaquette(&mut self, plaq: usize) {
        let links = *self.config.lattice.plaquette(plaq);
        for l in links {
            self.config.flip(l as usize);
        }
    }

    fn refresh(&mut self, p: usize) {
        let movable = self.free_neighbors(self.particles[p] as usize) > 0;
        let slot = self.movable_slot[p];
        match (movable, slot != NONE) {
            (true, false) => {
                self.movable_slot[p] = self.movable.len() as u32;
                self.movable.push(p as u32);
            }
            (false, true) => {
                let last = *self.movable.last().unwrap();
                self.movable.swap_remove(slot as usize);
                if last != p as u32 {
                    self.movable_slot[last as usize] = slot;
                }
                self.movable_slot[p] = NONE;
            }
            _ => {}
        }
    }

    fn refresh_around(&mut self, site: usize) {
        let lat = Arc::clone(self.lattice());
        for e in lat.star(site) {
            let occ = self.occupant[e.neighbor as usize];
            if occ != NONE {
                self.refresh(occ as usize);
            }
        }
    }

    /// Move particle `p` along `step` (which must lead to an empty site),
    /// flipping the traversed link. Only the neighbourhood is re-checked.
    pub fn hop(&mut self, p: usize, step: StarEntry) {
        let from = self.particles[p] as usize;
        let to = step.neighbor as usize;
        debug_assert_eq!(self.occupant[to], NONE);
        self.config.flip(step.link as usize);
        self.occupant[from] = NONE;
        self.occupant[to] = p as u32;
        self.particles[p] = to as u32;
        self.refresh(p);
        self.refresh_around(from);
        self.refresh_around(to);
        #[cfg(feature = "strict-checks")]
        self.check_consistency().expect("canonical state drifted");
    }

    /// Full recomputation of every cached quantity.
    pub fn check_consistency(&self) -> std::result::Result<(), String> {
        let derived = self.config.matter_sites();
        if derived != self.matter_sites() {
            return Err("matter bookkeeping disagrees with Gauss's law".into());
        }
        for (p, &s) in self.particles.iter().enumerate() {
            if self.occupant[s as usize] != p as u32 {
                return Err(format!("occupancy of particle {p} is stale"));
            }
            let should = self.free_neighbors(s as usize) > 0;
            if should != self.is_movable(p) {
                return Err(format!("movability of particle {p} is stale"));
            }
        }
        let mut listed: Vec<u32> = self.movable.clone();
        listed.sort_unstable();
        listed.dedup();
        if listed.len() != self.movable.len() {
            return Err("duplicate movable entries".into());
        }
        Ok(())
    }
}

/// Place `n` particles as nearest-neighbour dimers joined by one string.
pub fn init_dimers<R: Rng + ?Sized>(
    lattice: &Arc<Lattice>,
    n: usize,
    rng: &mut R,
) -> Result<CanonicalState> {
    if n % 2 == 1 {
        return Err(Error::OddParticleNumber(n));
    }
    let sites = lattice.site_count();
    if n > 2 * (sites / 2) {
        return Err(Error::Capacity {
            requested: n,
            sites,
        });
    }
    let pairs = n / 2;
    let links = random_dimers(lattice, pairs, rng).unwrap_or_else(|| snake_dimers(lattice, pairs, rng));
    let cfg = GaugeConfig::from_strings(lattice, Basis::X, links)?;
    Ok(CanonicalState::from_config(cfg))
}

fn random_dimers<R: Rng + ?Sized>(lattice: &Lattice, pairs: usize, rng: &mut R) -> Option<Vec<usize>> {
    let mut order: Vec<usize> = (0..lattice.site_count()).collect();
    order.shuffle(rng);
    let mut used = vec![false; lattice.site_count()];
    let mut links = Vec::with_capacity(pairs);
    let mut dirs: Vec<StarEntry> = Vec::with_capacity(lattice.coordination());
    for s in order {
        if links.len() == pairs {
            break;
        }
        if used[s] {
            continue;
        }
        dirs.clear();
        dirs.extend(lattice.star(s).iter().filter(|e| !used[e.neighbor as usize]));
        if let Some(e) = dirs.choose(rng) {
            used[s] = true;
            used[e.neighbor as usize] = true;
            links.push(e.link as usize);
        }
    }
    (links.len() == pairs).then_some(links)
}

/// Pairs consecutive sites of a boustrophedon path, which covers all but at
/// most one site; used when greedy placement runs out of room.
fn snake_dimers<R: Rng + ?Sized>(lattice: &Lattice, pairs: usize, rng: &mut R) -> Vec<usize> {
    let l = lattice.size();
    let mut path = Vec::with_capacity(lattice.site_count());
    let layers = if lattice.dim() == 3 { l } else { 1 };
    for z in 0..layers {
        for yi in 0..l {
            let y = if z % 2 == 0 { yi } else { l - 1 - yi };
            for xi in 0..l {
                let x = if (z * l + yi) % 2 == 0 { xi } else { l - 1 - xi };
                path.push(lattice.site_at(&[x, y, z]));
            }
        }
    }
    let mut candidates: Vec<usize> = path
        .chunks_exact(2)
        .map(|w| {
            lattice
                .star(w[0])
                .iter()
                .find(|e| e.neighbor as usize == w[1])
                .expect("snake path steps between neighbours")
                .link as usize
        })
        .collect();
    candidates.shuffle(rng);
    candidates.truncate(pairs);
    candidates
}
