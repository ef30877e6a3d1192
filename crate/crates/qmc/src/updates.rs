//! Metropolis-Hastings updates on the event lists.
//!
//! Acceptance ratios carry the proposal densities explicitly:
//!
//! * pair insertion on object `o` at `t1`, partner at `t1 + delta` with
//!   `delta` uniform in `[0, w)`: `c^2 beta w e^{-dS} / m'`, where `m'` is the
//!   number of events of that kind on `o` after insertion. Removal picks an
//!   event uniformly and pairs it with its cyclic successor, rejecting if the
//!   gap is `>= w`; `w <= beta/2` makes the pairing unique.
//! * time shift: uniform in the gap between neighbouring flips of every
//!   touched link, so the proposal is symmetric.
//! * composite: a four-body event and one link event on each link of the
//!   same object, each inserted or removed independently. The four-body
//!   event is uniform in `[0, beta)` (or one of the `m` present), the anchor
//!   event on the first link likewise among `k_a`; the other three lie within
//!   `w/2` of the anchor (uniform, or one of the `n` present there). Each
//!   inserted piece contributes `c beta / m'` (`c w / n'` near the anchor),
//!   each removed one the inverse with the counts before removal.
//! * global: one four-body event on every object;
//!   `(c4 beta)^{N} e^{-dS} / prod m'`.
//! * line segment: two anchors uniform in `[0, beta)`, at least `v` apart
//!   with `v = min(w, beta/4)`. Every link of a winding line toggles one
//!   event within `v/2` of each anchor, contributing `c v / n'` per insertion
//!   and the inverse per removal.
//! * strip: one anchor uniform in `[0, beta)`; every object of a row and
//!   every link of the two winding lines bounding it toggles one event
//!   within `w/2` of the anchor, with the same per-piece factors. The
//!   changes stay inside the window: on each link the toggles, ordered from
//!   the anchor, flip the spin between consecutive pairs.

use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use z2perc::classical::Counter;
use z2perc::lattice::Lattice;
use z2perc::Basis;

use crate::params::{QmcParams, SegmentMode};
use crate::worldline::{insert_time, remove_time, ChangeSet, Overlay, Worldline};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct QmcAcceptance {
    pub link_pair: Counter,
    pub four_pair: Counter,
    pub loop_flip: Counter,
    pub winding: Counter,
    pub line_segment: Counter,
    pub strip: Counter,
    pub shift: Counter,
    pub segment: Counter,
    pub composite: Counter,
    pub global: Counter,
}

/// Objects count above which the global update is not attempted.
pub const GLOBAL_MAX_OBJECTS: usize = 16;

#[derive(Clone, Debug)]
pub struct QmcSampler {
    pub wl: Worldline,
    pub acceptance: QmcAcceptance,
    window: f64,
    segment_mode: SegmentMode,
    composite: usize,
    global: bool,
    loops: bool,
    cs: ChangeSet,
}

#[inline]
fn wrap(t: f64, beta: f64) -> f64 {
    let r = t.rem_euclid(beta);
    if r >= beta {
        0.0
    } else {
        r
    }
}

/// Signed offset `b - a` folded into `[-beta/2, beta/2)`.
#[inline]
fn cyclic_offset(a: f64, b: f64, beta: f64) -> f64 {
    let d = (b - a).rem_euclid(beta);
    if d >= beta / 2.0 {
        d - beta
    } else {
        d
    }
}

fn metropolis<R: Rng + ?Sized>(log_ratio: f64, rng: &mut R) -> bool {
    assert!(!log_ratio.is_nan(), "NaN acceptance ratio");
    if log_ratio >= 0.0 {
        return true;
    }
    rng.random::<f64>() < log_ratio.exp()
}

impl QmcSampler {
    pub fn new(p: &QmcParams) -> z2perc::Result<Self> {
        Ok(Self::from_worldline(Worldline::new(p)?, p))
    }

    pub fn from_worldline(wl: Worldline, p: &QmcParams) -> Self {
        Self {
            wl,
            acceptance: QmcAcceptance::default(),
            window: p.window(),
            segment_mode: p.segment_mode,
            composite: if p.composite_updates { p.composite_per_object } else { 0 },
            global: p.global_updates,
            loops: p.loop_updates,
            cs: ChangeSet::default(),
        }
    }

    pub fn window(&self) -> f64 {
        self.window
    }

    /// One sweep: `link_count` link-pair, `object_count` four-body-pair,
    /// `link_count + object_count` shift and `link_count` segment proposals,
    /// then `composite_per_object * object_count` composite proposals, one
    /// global proposal, `object_count` loop flips, two winding flips and
    /// `2 L` line-segment and `2 L` strip proposals, as enabled. Updates
    /// whose coupling vanishes are skipped.
    pub fn sweep<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        let n1 = self.wl.geo.n_links();
        let n4 = self.wl.geo.four.len();
        let bc = self.wl.bc();
        if bc.c1 > 0.0 {
            for _ in 0..n1 {
                self.update_pair_link(rng);
            }
        }
        if bc.c4 > 0.0 {
            for _ in 0..n4 {
                self.update_pair_fourbody(rng);
            }
        }
        if bc.c1 > 0.0 || bc.c4 > 0.0 {
            for _ in 0..n1 + n4 {
                self.update_timeshift(rng);
            }
        }
        for _ in 0..n1 {
            self.update_spin_segment(rng);
        }
        if bc.c1 > 0.0 && bc.c4 > 0.0 {
            for _ in 0..n4 * self.composite {
                self.update_composite(rng);
            }
        }
        if self.global && bc.c4 > 0.0 && n4 <= GLOBAL_MAX_OBJECTS {
            self.update_global(rng);
        }
        if self.loops {
            for _ in 0..n4 {
                self.update_object_loop(rng);
            }
            for dim in 0..2 {
                self.update_winding_loop(dim, rng);
            }
            if bc.c1 > 0.0 {
                for dim in 0..2 {
                    for _ in 0..self.wl.geo.lattice.size() {
                        self.update_line_segment(dim, rng);
                    }
                }
            }
            if bc.c1 > 0.0 && bc.c4 > 0.0 {
                for dim in 0..2 {
                    for _ in 0..self.wl.geo.lattice.size() {
                        self.update_strip(dim, rng);
                    }
                }
            }
        }
    }

    fn fresh_time<R: Rng + ?Sized>(&self, links: &[u32], rng: &mut R) -> f64 {
        loop {
            let t = rng.random::<f64>() * self.wl.beta;
            if links.iter().all(|&l| !self.wl.has_flip(l as usize, t)) {
                return t;
            }
        }
    }

    /// Insert or remove (fair coin) a pair of link events on a random link.
    /// `None` when removal finds nothing to remove.
    pub fn update_pair_link<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Option<bool> {
        let l = rng.random_range(0..self.wl.geo.n_links());
        let insert = rng.random_bool(0.5);
        let r = self.pair(Target::Link(l), insert, rng);
        if let Some(acc) = r {
            self.acceptance.link_pair.record(acc);
        }
        r
    }

    /// As [`Self::update_pair_link`] for four-body events on a random object.
    pub fn update_pair_fourbody<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Option<bool> {
        let o = rng.random_range(0..self.wl.geo.four.len());
        let insert = rng.random_bool(0.5);
        let r = self.pair(Target::Four(o), insert, rng);
        if let Some(acc) = r {
            self.acceptance.four_pair.record(acc);
        }
        r
    }

    fn target_links(&self, target: Target) -> ([u32; 4], usize) {
        match target {
            Target::Link(l) => ([l as u32, 0, 0, 0], 1),
            Target::Four(o) => (self.wl.geo.four[o], 4),
        }
    }

    fn events(&self, target: Target) -> &Vec<f64> {
        match target {
            Target::Link(l) => &self.wl.link_events[l],
            Target::Four(o) => &self.wl.four_events[o],
        }
    }

    fn events_mut(&mut self, target: Target) -> &mut Vec<f64> {
        match target {
            Target::Link(l) => &mut self.wl.link_events[l],
            Target::Four(o) => &mut self.wl.four_events[o],
        }
    }

    fn coupling(&self, target: Target) -> f64 {
        let bc = self.wl.bc();
        match target {
            Target::Link(_) => bc.c1,
            Target::Four(_) => bc.c4,
        }
    }

    fn bump(&mut self, target: Target, delta: isize) {
        match target {
            Target::Link(_) => self.wl.n_link_events = (self.wl.n_link_events as isize + delta) as usize,
            Target::Four(_) => self.wl.n_four_events = (self.wl.n_four_events as isize + delta) as usize,
        }
    }

    fn pair<R: Rng + ?Sized>(&mut self, target: Target, insert: bool, rng: &mut R) -> Option<bool> {
        let beta = self.wl.beta;
        let w = self.window;
        let c = self.coupling(target);
        let (links, nl) = self.target_links(target);
        let links = &links[..nl];
        if insert {
            if c == 0.0 {
                return Some(false);
            }
            let t1 = self.fresh_time(links, rng);
            let t2 = loop {
                let t2 = wrap(t1 + rng.random::<f64>() * w, beta);
                if t2 != t1 && links.iter().all(|&l| !self.wl.has_flip(l as usize, t2)) {
                    break t2;
                }
            };
            // The new pair must be adjacent among same-kind events on the target.
            let gap = (t2 - t1).rem_euclid(beta);
            if self.events(target).iter().any(|&e| {
                let d = (e - t1).rem_euclid(beta);
                d > 0.0 && d < gap
            }) {
                return Some(false);
            }
            let m_new = self.events(target).len() + 2;
            self.cs.clear();
            let ov = Overlay::interval(t1, t2);
            for &l in links {
                self.cs.add(l, &ov);
            }
            let ds = self.wl.delta_action(&self.cs);
            let log_ratio = 2.0 * c.ln() + (beta * w / m_new as f64).ln() - ds;
            if !metropolis(log_ratio, rng) {
                return Some(false);
            }
            let cs = std::mem::take(&mut self.cs);
            self.wl.apply(&cs);
            self.cs = cs;
            let ev = self.events_mut(target);
            insert_time(ev, t1);
            insert_time(ev, t2);
            self.bump(target, 2);
            Some(true)
        } else {
            let ev = self.events(target);
            let m = ev.len();
            if m < 2 {
                return None;
            }
            let i = rng.random_range(0..m);
            let e1 = ev[i];
            let e2 = ev[(i + 1) % m];
            let gap = (e2 - e1).rem_euclid(beta);
            if gap >= w {
                return Some(false);
            }
            self.cs.clear();
            let ov = Overlay::interval(e1, e2);
            for &l in links {
                self.cs.add(l, &ov);
            }
            let ds = self.wl.delta_action(&self.cs);
            let log_ratio = (m as f64 / (beta * w)).ln() - 2.0 * c.ln() - ds;
            if !metropolis(log_ratio, rng) {
                return Some(false);
            }
            let cs = std::mem::take(&mut self.cs);
            self.wl.apply(&cs);
            self.cs = cs;
            let ev = self.events_mut(target);
            remove_time(ev, e1);
            remove_time(ev, e2);
            self.bump(target, -2);
            Some(true)
        }
    }

    /// Move a random event within the gap left by the neighbouring flips on
    /// its links. The object is drawn uniformly from links and four-body
    /// objects together, then one of its events uniformly.
    pub fn update_timeshift<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Option<bool> {
        let n1 = self.wl.geo.n_links();
        let n4 = self.wl.geo.four.len();
        let r = rng.random_range(0..n1 + n4);
        let target = if r < n1 { Target::Link(r) } else { Target::Four(r - n1) };
        let ev = self.events(target);
        if ev.is_empty() {
            return None;
        }
        let t = ev[rng.random_range(0..ev.len())];
        let beta = self.wl.beta;
        let (links, nl) = self.target_links(target);
        let links = &links[..nl];
        let mut back = f64::INFINITY;
        let mut fwd = f64::INFINITY;
        for &l in links {
            let f = &self.wl.flips[l as usize];
            let k = f.len();
            let i = f.binary_search_by(|x| x.total_cmp(&t)).expect("event on its link");
            let prev = f[(i + k - 1) % k];
            let next = f[(i + 1) % k];
            back = back.min((t - prev).rem_euclid(beta));
            fwd = fwd.min((next - t).rem_euclid(beta));
        }
        let off = -back + rng.random::<f64>() * (back + fwd);
        let t_new = wrap(t + off, beta);
        if off == 0.0 || links.iter().any(|&l| self.wl.has_flip(l as usize, t_new)) {
            self.acceptance.shift.record(false);
            return Some(false);
        }
        let ov = if off > 0.0 {
            Overlay::interval(t, t_new)
        } else {
            Overlay::interval(t_new, t)
        };
        self.cs.clear();
        for &l in links {
            self.cs.add(l, &ov);
        }
        let ds = self.wl.delta_action(&self.cs);
        let acc = metropolis(-ds, rng);
        if acc {
            let cs = std::mem::take(&mut self.cs);
            self.wl.apply(&cs);
            self.cs = cs;
            let ev = self.events_mut(target);
            remove_time(ev, t);
            insert_time(ev, t_new);
        }
        self.acceptance.shift.record(acc);
        Some(acc)
    }

    /// Flip one link's spin over all of `[0, beta)`. In
    /// [`SegmentMode::EventFree`] links with flips are skipped (`None`).
    pub fn update_spin_segment<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Option<bool> {
        let l = rng.random_range(0..self.wl.geo.n_links());
        if self.segment_mode == SegmentMode::EventFree && !self.wl.flips[l].is_empty() {
            return None;
        }
        self.cs.clear();
        self.cs.add(l as u32, &Overlay::full());
        let ds = self.wl.delta_action(&self.cs);
        let acc = metropolis(-ds, rng);
        if acc {
            self.wl.s0[l] = !self.wl.s0[l];
        }
        self.acceptance.segment.record(acc);
        Some(acc)
    }

    fn flip_whole(&mut self, links: &[u32], rng: &mut (impl Rng + ?Sized)) -> bool {
        self.cs.clear();
        let full = Overlay::full();
        for &l in links {
            self.cs.add(l, &full);
        }
        let ds = self.wl.delta_action(&self.cs);
        let acc = metropolis(-ds, rng);
        if acc {
            for &l in links {
                self.wl.s0[l as usize] = !self.wl.s0[l as usize];
            }
        }
        acc
    }

    /// Flip the links of a random four-body object over all of `[0, beta)`,
    /// i.e. apply that object's operator at every time. Only the diagonal
    /// single-link term changes.
    pub fn update_object_loop<R: Rng + ?Sized>(&mut self, rng: &mut R) -> bool {
        let o = rng.random_range(0..self.wl.geo.four.len());
        let links = self.wl.geo.four[o];
        let acc = self.flip_whole(&links, rng);
        self.acceptance.loop_flip.record(acc);
        acc
    }

    /// Flip a non-contractible line over all of `[0, beta)`: in the X basis
    /// the `dim`-links of a straight row, in the Z basis the links crossed
    /// by a straight dual row. This changes the winding sector, which local
    /// event updates only reach through long-lived matter loops.
    pub fn update_winding_loop<R: Rng + ?Sized>(&mut self, dim: usize, rng: &mut R) -> bool {
        let links = winding_line(&self.wl.geo.lattice, self.wl.geo.basis, dim, rng.random_range(0..self.wl.geo.lattice.size()));
        let acc = self.flip_whole(&links, rng);
        self.acceptance.winding.record(acc);
        acc
    }

    /// Flip a random winding line between two anchor times by toggling one
    /// link event near each anchor on each of its links. Local pair moves
    /// only reach such states through a costly intermediate (a vison pair
    /// or matter pair stretched around the torus).
    pub fn update_line_segment<R: Rng + ?Sized>(&mut self, dim: usize, rng: &mut R) -> Option<bool> {
        let c1 = self.wl.bc().c1;
        if c1 == 0.0 {
            return None;
        }
        let beta = self.wl.beta;
        let v = self.window.min(beta / 4.0);
        let lat = &self.wl.geo.lattice;
        let links = winding_line(lat, self.wl.geo.basis, dim, rng.random_range(0..lat.size()));
        let anchors = [rng.random::<f64>() * beta, rng.random::<f64>() * beta];
        if cyclic_offset(anchors[0], anchors[1], beta).abs() < v {
            self.acceptance.line_segment.record(false);
            return Some(false);
        }
        let mut log_q = 0.0;
        // Per link and anchor: (time, inserted).
        let mut toggles = Vec::with_capacity(2 * links.len());
        for &l in &links {
            for &a in &anchors {
                let near: Vec<f64> = self.wl.link_events[l as usize]
                    .iter()
                    .copied()
                    .filter(|&e| cyclic_offset(a, e, beta).abs() < v / 2.0)
                    .collect();
                if rng.random_bool(0.5) {
                    log_q += (c1 * v / (near.len() + 1) as f64).ln();
                    let t = loop {
                        let t = wrap(a + (rng.random::<f64>() - 0.5) * v, beta);
                        if !self.wl.has_flip(l as usize, t) {
                            break t;
                        }
                    };
                    toggles.push((t, true));
                } else {
                    if near.is_empty() {
                        self.acceptance.line_segment.record(false);
                        return Some(false);
                    }
                    log_q -= (c1 * v / near.len() as f64).ln();
                    toggles.push((near[rng.random_range(0..near.len())], false));
                }
            }
        }
        self.cs.clear();
        for (k, &l) in links.iter().enumerate() {
            self.cs.add(l, &Overlay::interval(toggles[2 * k].0, toggles[2 * k + 1].0));
        }
        let ds = self.wl.delta_action(&self.cs);
        let acc = metropolis(log_q - ds, rng);
        if acc {
            let cs = std::mem::take(&mut self.cs);
            self.wl.apply(&cs);
            self.cs = cs;
            for (k, &l) in links.iter().enumerate() {
                for &(t, inserted) in &toggles[2 * k..2 * k + 2] {
                    let ev = &mut self.wl.link_events[l as usize];
                    if inserted {
                        insert_time(ev, t);
                        self.wl.n_link_events += 1;
                    } else {
                        remove_time(ev, t);
                        self.wl.n_link_events -= 1;
                    }
                }
            }
        }
        self.acceptance.line_segment.record(acc);
        Some(acc)
    }

    /// Move a winding line by one row within a short time window: toggle an
    /// event on every object of a row together with one link event on each
    /// link of the two lines the row's product flips.
    pub fn update_strip<R: Rng + ?Sized>(&mut self, dim: usize, rng: &mut R) -> Option<bool> {
        let bc = self.wl.bc();
        if bc.c1 == 0.0 || bc.c4 == 0.0 {
            return None;
        }
        let beta = self.wl.beta;
        let v = self.window;
        let geo = Arc::clone(&self.wl.geo);
        let (objects, links) = strip(&geo.lattice, geo.basis, dim, rng.random_range(0..geo.lattice.size()));
        let t = rng.random::<f64>() * beta;
        let near = |ev: &[f64]| -> Vec<f64> { ev.iter().copied().filter(|&e| cyclic_offset(t, e, beta).abs() < v / 2.0).collect() };
        let mut log_q = 0.0;
        let mut four_toggles = Vec::with_capacity(objects.len());
        let mut link_toggles = Vec::with_capacity(links.len());
        let mut per_link: Vec<(u32, f64)> = Vec::with_capacity(4 * objects.len() + links.len());
        for &o in &objects {
            let present = near(&self.wl.four_events[o]);
            let ol = &geo.four[o];
            let s = if rng.random_bool(0.5) {
                log_q += (bc.c4 * v / (present.len() + 1) as f64).ln();
                let s = loop {
                    let s = wrap(t + (rng.random::<f64>() - 0.5) * v, beta);
                    if ol.iter().all(|&l| !self.wl.has_flip(l as usize, s)) {
                        break s;
                    }
                };
                four_toggles.push((o, s, true));
                s
            } else {
                if present.is_empty() {
                    self.acceptance.strip.record(false);
                    return Some(false);
                }
                log_q -= (bc.c4 * v / present.len() as f64).ln();
                let s = present[rng.random_range(0..present.len())];
                four_toggles.push((o, s, false));
                s
            };
            per_link.extend(ol.iter().map(|&l| (l, s)));
        }
        for &l in &links {
            let present = near(&self.wl.link_events[l as usize]);
            let x = if rng.random_bool(0.5) {
                log_q += (bc.c1 * v / (present.len() + 1) as f64).ln();
                let x = loop {
                    let x = wrap(t + (rng.random::<f64>() - 0.5) * v, beta);
                    if !self.wl.has_flip(l as usize, x) && per_link.iter().all(|&(m, s)| m != l || s != x) {
                        break x;
                    }
                };
                link_toggles.push((l, x, true));
                x
            } else {
                if present.is_empty() {
                    self.acceptance.strip.record(false);
                    return Some(false);
                }
                log_q -= (bc.c1 * v / present.len() as f64).ln();
                let x = present[rng.random_range(0..present.len())];
                link_toggles.push((l, x, false));
                x
            };
            per_link.push((l, x));
        }
        // Pair the toggles on each link in order of their offset from the anchor.
        per_link.sort_by(|a, b| a.0.cmp(&b.0).then(cyclic_offset(t, a.1, beta).total_cmp(&cyclic_offset(t, b.1, beta))));
        self.cs.clear();
        for chunk in per_link.chunk_by(|a, b| a.0 == b.0) {
            debug_assert!(chunk.len() % 2 == 0, "odd toggle count on link {}", chunk[0].0);
            for pair in chunk.chunks_exact(2) {
                self.cs.add(pair[0].0, &Overlay::interval(pair[0].1, pair[1].1));
            }
        }
        let ds = self.wl.delta_action(&self.cs);
        let acc = metropolis(log_q - ds, rng);
        if acc {
            let cs = std::mem::take(&mut self.cs);
            self.wl.apply(&cs);
            self.cs = cs;
            let wl = &mut self.wl;
            for &(o, s, inserted) in &four_toggles {
                if inserted {
                    insert_time(&mut wl.four_events[o], s);
                    wl.n_four_events += 1;
                } else {
                    remove_time(&mut wl.four_events[o], s);
                    wl.n_four_events -= 1;
                }
            }
            for &(l, x, inserted) in &link_toggles {
                if inserted {
                    insert_time(&mut wl.link_events[l as usize], x);
                    wl.n_link_events += 1;
                } else {
                    remove_time(&mut wl.link_events[l as usize], x);
                    wl.n_link_events -= 1;
                }
            }
        }
        self.acceptance.strip.record(acc);
        Some(acc)
    }

    fn near_link_events(&self, link: u32, t: f64) -> impl Iterator<Item = f64> + '_ {
        let half = self.window / 2.0;
        let beta = self.wl.beta;
        self.wl.link_events[link as usize]
            .iter()
            .copied()
            .filter(move |&e| cyclic_offset(t, e, beta).abs() < half)
    }

    /// Toggle a four-body event together with one link event on each link
    /// of the same object. Every piece is inserted or removed independently,
    /// so a loop around one object can also be moved onto a neighbour.
    pub fn update_composite<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Option<bool> {
        let bc = self.wl.bc();
        if bc.c1 == 0.0 || bc.c4 == 0.0 {
            return None;
        }
        let beta = self.wl.beta;
        let w = self.window;
        let o = rng.random_range(0..self.wl.geo.four.len());
        let links = self.wl.geo.four[o];
        let mut inserted = [false; 5];
        let mut partner = [0.0f64; 4];
        let mut log_q = 0.0;
        let reject = |s: &mut Self| {
            s.acceptance.composite.record(false);
            Some(false)
        };

        let t = if rng.random_bool(0.5) {
            inserted[4] = true;
            log_q += (bc.c4 * beta / (self.wl.four_events[o].len() + 1) as f64).ln();
            self.fresh_time(&links, rng)
        } else {
            let ev = &self.wl.four_events[o];
            if ev.is_empty() {
                return reject(self);
            }
            log_q -= (bc.c4 * beta / ev.len() as f64).ln();
            ev[rng.random_range(0..ev.len())]
        };
        if rng.random_bool(0.5) {
            inserted[0] = true;
            log_q += (bc.c1 * beta / (self.wl.link_events[links[0] as usize].len() + 1) as f64).ln();
            partner[0] = loop {
                let ta = self.fresh_time(&links[..1], rng);
                if ta != t {
                    break ta;
                }
            };
        } else {
            let anchor = &self.wl.link_events[links[0] as usize];
            if anchor.is_empty() {
                return reject(self);
            }
            log_q -= (bc.c1 * beta / anchor.len() as f64).ln();
            partner[0] = anchor[rng.random_range(0..anchor.len())];
        }
        for k in 1..4 {
            let l = links[k];
            let near: Vec<f64> = self.near_link_events(l, partner[0]).collect();
            if rng.random_bool(0.5) {
                inserted[k] = true;
                log_q += (bc.c1 * w / (near.len() + 1) as f64).ln();
                partner[k] = loop {
                    let d = (rng.random::<f64>() - 0.5) * w;
                    let tk = wrap(partner[0] + d, beta);
                    if tk != t && !self.wl.has_flip(l as usize, tk) {
                        break tk;
                    }
                };
            } else {
                if near.is_empty() {
                    return reject(self);
                }
                log_q -= (bc.c1 * w / near.len() as f64).ln();
                partner[k] = near[rng.random_range(0..near.len())];
            }
        }
        self.cs.clear();
        for (k, &l) in links.iter().enumerate() {
            let ov = if cyclic_offset(t, partner[k], beta) > 0.0 {
                Overlay::interval(t, partner[k])
            } else {
                Overlay::interval(partner[k], t)
            };
            self.cs.add(l, &ov);
        }
        let ds = self.wl.delta_action(&self.cs);
        let acc = metropolis(log_q - ds, rng);
        if acc {
            let cs = std::mem::take(&mut self.cs);
            self.wl.apply(&cs);
            self.cs = cs;
            let wl = &mut self.wl;
            if inserted[4] {
                insert_time(&mut wl.four_events[o], t);
                wl.n_four_events += 1;
            } else {
                remove_time(&mut wl.four_events[o], t);
                wl.n_four_events -= 1;
            }
            for (k, &l) in links.iter().enumerate() {
                if inserted[k] {
                    insert_time(&mut wl.link_events[l as usize], partner[k]);
                    wl.n_link_events += 1;
                } else {
                    remove_time(&mut wl.link_events[l as usize], partner[k]);
                    wl.n_link_events -= 1;
                }
            }
        }
        self.acceptance.composite.record(acc);
        Some(acc)
    }

    /// Insert or remove one four-body event on every object at once. Each
    /// link sits on two objects and is flipped between their two times.
    pub fn update_global<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Option<bool> {
        let bc = self.wl.bc();
        let beta = self.wl.beta;
        let n4 = self.wl.geo.four.len();
        let insert = rng.random_bool(0.5);
        let mut times = vec![0.0f64; n4];
        let mut log_m = 0.0;
        if insert {
            if bc.c4 == 0.0 {
                self.acceptance.global.record(false);
                return Some(false);
            }
            'draw: loop {
                for o in 0..n4 {
                    times[o] = self.fresh_time(&self.wl.geo.four[o], rng);
                }
                for pair in &self.wl.geo.link_four {
                    if times[pair[0] as usize] == times[pair[1] as usize] {
                        continue 'draw;
                    }
                }
                break;
            }
            for o in 0..n4 {
                log_m += ((self.wl.four_events[o].len() + 1) as f64).ln();
            }
        } else {
            for o in 0..n4 {
                let ev = &self.wl.four_events[o];
                if ev.is_empty() {
                    return None;
                }
                log_m += (ev.len() as f64).ln();
                times[o] = ev[rng.random_range(0..ev.len())];
            }
        }
        self.cs.clear();
        for (l, pair) in self.wl.geo.link_four.iter().enumerate() {
            let a = times[pair[0] as usize];
            let b = times[pair[1] as usize];
            let ov = Overlay {
                start: false,
                toggles: vec![a.min(b), a.max(b)],
            };
            self.cs.add(l as u32, &ov);
        }
        let ds = self.wl.delta_action(&self.cs);
        let log_w = n4 as f64 * (bc.c4 * beta).ln() - log_m;
        let log_ratio = if insert { log_w - ds } else { -log_w - ds };
        let acc = metropolis(log_ratio, rng);
        if acc {
            let cs = std::mem::take(&mut self.cs);
            self.wl.apply(&cs);
            self.cs = cs;
            for (o, &t) in times.iter().enumerate() {
                if insert {
                    insert_time(&mut self.wl.four_events[o], t);
                } else {
                    remove_time(&mut self.wl.four_events[o], t);
                }
            }
            if insert {
                self.wl.n_four_events += n4;
            } else {
                self.wl.n_four_events -= n4;
            }
        }
        self.acceptance.global.record(acc);
        Some(acc)
    }
}

/// Links of the straight non-contractible line along `dim` at transverse
/// coordinate `c` whose flip commutes with the diagonal four-body terms.
pub fn winding_line(lat: &Lattice, basis: Basis, dim: usize, c: usize) -> Vec<u32> {
    let other = 1 - dim;
    (0..lat.size())
        .map(|x| {
            let mut coords = [0usize; 2];
            coords[dim] = x;
            coords[other] = c;
            let link_dim = match basis {
                Basis::X => dim,
                Basis::Z => other,
            };
            lat.link(lat.site_at(&coords), link_dim) as u32
        })
        .collect()
}

/// Four-body objects of the row at transverse coordinate `c` along `dim`,
/// and the links of the two winding lines whose product equals the row's.
/// Stars at row `c` (Z basis) bound lines `c - 1` and `c`; plaquettes at row
/// `c` (X basis) bound lines `c` and `c + 1`.
pub fn strip(lat: &Lattice, basis: Basis, dim: usize, c: usize) -> (Vec<usize>, Vec<u32>) {
    let other = 1 - dim;
    let l = lat.size();
    let objects = (0..l)
        .map(|x| {
            let mut coords = [0usize; 2];
            coords[dim] = x;
            coords[other] = c;
            // One plaquette per site in 2D, indexed like sites.
            lat.site_at(&coords)
        })
        .collect();
    let next = match basis {
        Basis::X => (c + 1) % l,
        Basis::Z => (c + l - 1) % l,
    };
    let mut links = winding_line(lat, basis, dim, c);
    links.extend(winding_line(lat, basis, dim, next));
    (objects, links)
}

#[derive(Clone, Copy, Debug)]
enum Target {
    Link(usize),
    Four(usize),
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use z2perc::GaugeConfig;
    use std::sync::Arc;

    fn sampler(basis: Basis, l: usize, h: f64, lambda: f64, beta: f64) -> QmcSampler {
        let mut p = QmcParams::ground_state(l, h, lambda, basis);
        p.beta = beta;
        QmcSampler::new(&p).unwrap()
    }

    #[test]
    fn sweeps_keep_consistency_and_weight_finite() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for basis in [Basis::X, Basis::Z] {
            let mut s = sampler(basis, 2, 0.3, 0.3, 2.0);
            let (mut seen4, mut seen1) = (0, 0);
            for _ in 0..200 {
                s.sweep(&mut rng);
                s.wl.check_consistency().unwrap();
                assert!(s.wl.log_weight().is_finite());
                seen4 = seen4.max(s.wl.n_four_events());
                seen1 = seen1.max(s.wl.n_link_events());
            }
            assert!(seen4 > 0 && seen1 > 0);
            let a = s.acceptance;
            for c in [a.link_pair, a.four_pair, a.shift, a.segment, a.composite, a.global] {
                assert!(c.proposed > 0);
            }
        }
    }

    #[test]
    fn zero_coupling_blocks_insertions() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let mut s = sampler(Basis::X, 3, 0.2, 0.0, 3.0);
        for _ in 0..50 {
            assert_eq!(s.update_pair_link(&mut rng).unwrap_or(false), false);
            s.update_pair_fourbody(&mut rng);
        }
        assert_eq!(s.wl.n_link_events(), 0);
        assert!(s.wl.n_four_events() > 0);
        let mut s = sampler(Basis::X, 3, 0.2, 0.2, 3.0);
        s.wl.coup.j = 0.0;
        for _ in 0..50 {
            assert_eq!(s.update_pair_fourbody(&mut rng).unwrap_or(false), false);
        }
        assert_eq!(s.wl.n_four_events(), 0);
    }

    #[test]
    fn removal_on_empty_link_is_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut s = sampler(Basis::Z, 2, 0.3, 0.3, 2.0);
        for _ in 0..20 {
            let before = s.wl.n_link_events();
            let r = s.pair(Target::Link(0), false, &mut rng);
            assert!(r.is_none() && before == 0);
        }
    }

    #[test]
    fn winding_lines_are_closed_and_wrap() {
        for l in [2, 3, 5] {
            let lat = Arc::new(Lattice::new(2, l).unwrap());
            for dim in 0..2 {
                for c in 0..l {
                    let line = winding_line(&lat, Basis::X, dim, c);
                    let cfg = GaugeConfig::from_strings(&lat, Basis::X, line.iter().map(|&x| x as usize)).unwrap();
                    assert_eq!(cfg.matter_count(), 0);
                    let rep = z2perc::percolation::analyze(&cfg).unwrap();
                    assert!(rep.wraps[dim] && !rep.wraps[1 - dim]);
                    // Z basis: every plaquette meets the line an even number of times.
                    let dual = winding_line(&lat, Basis::Z, dim, c);
                    for p in 0..lat.plaquette_count() {
                        let n = lat.plaquette(p).iter().filter(|x| dual.contains(x)).count();
                        assert_eq!(n % 2, 0);
                    }
                }
            }
        }
    }

    #[test]
    fn strip_objects_multiply_to_its_lines() {
        for l in [2, 3, 4] {
            let lat = Arc::new(Lattice::new(2, l).unwrap());
            for basis in [Basis::X, Basis::Z] {
                let geo = crate::worldline::Geometry::new(Arc::clone(&lat), basis);
                for dim in 0..2 {
                    for c in 0..l {
                        let (objects, links) = strip(&lat, basis, dim, c);
                        let mut odd = vec![false; lat.link_count()];
                        for o in objects {
                            for &x in &geo.four[o] {
                                odd[x as usize] ^= true;
                            }
                        }
                        let mut want = vec![false; lat.link_count()];
                        for x in links {
                            want[x as usize] ^= true;
                        }
                        assert_eq!(odd, want, "L={l} {basis:?} dim={dim} c={c}");
                    }
                }
            }
        }
    }

    #[test]
    fn segment_twice_restores() {
        let mut s = sampler(Basis::X, 2, 0.3, 0.3, 2.0);
        let w0 = s.wl.log_weight();
        s.cs.clear();
        s.cs.add(3, &Overlay::full());
        let ds = s.wl.delta_action(&s.cs);
        s.wl.s0[3] ^= true;
        assert!((s.wl.log_weight() - (w0 - ds)).abs() < 1e-12);
        s.wl.s0[3] ^= true;
        assert_eq!(s.wl.log_weight(), w0);
    }
}
