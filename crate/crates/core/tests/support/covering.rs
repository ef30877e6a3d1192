//! Wrapping oracle on the 3x-unrolled cover of the torus.
//!
//! Every string link is lifted to all 3^D copies on a periodic lattice of side
//! 3L and clusters are found with union-find. A base cluster wraps dimension
//! `k` iff the lift of one of its sites is connected to a translated copy
//! `x + a*L` with `a_k != 0`.

use z2perc::lattice::Lattice;
use z2perc::GaugeConfig;

struct Dsu(Vec<u32>);

impl Dsu {
    fn find(&mut self, mut x: u32) -> u32 {
        while self.0[x as usize] != x {
            let p = self.0[x as usize];
            self.0[x as usize] = self.0[p as usize];
            x = p;
        }
        x
    }

    fn union(&mut self, a: u32, b: u32) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            self.0[ra as usize] = rb;
        }
    }
}

pub fn covering_wraps(cfg: &GaugeConfig) -> Vec<bool> {
    let lat: &Lattice = cfg.lattice();
    let d = lat.dim();
    let l = lat.size();
    let m = 3 * l;
    let cover_sites = m.pow(d as u32);
    let index = |c: &[usize]| -> u32 {
        let mut i = 0;
        for k in (0..d).rev() {
            i = i * m + c[k];
        }
        i as u32
    };
    let mut dsu = Dsu((0..cover_sites as u32).collect());
    let copies = 3usize.pow(d as u32);
    for link in cfg.strings() {
        let site = link / d;
        let dir = link % d;
        let base = lat.coords(site);
        for a in 0..copies {
            let mut c = [0usize; 3];
            let mut rest = a;
            for k in 0..d {
                c[k] = base[k] + (rest % 3) * l;
                rest /= 3;
            }
            let from = index(&c[..d]);
            c[dir] = (c[dir] + 1) % m;
            let to = index(&c[..d]);
            dsu.union(from, to);
        }
    }
    let mut wraps = vec![false; d];
    for link in cfg.strings() {
        let base = lat.coords(link / d);
        let origin = index(&base[..d]);
        for a in 1..copies {
            let mut c = [0usize; 3];
            let mut rest = a;
            let mut shifted = [false; 3];
            for k in 0..d {
                let ak = rest % 3;
                rest /= 3;
                c[k] = base[k] + ak * l;
                shifted[k] = ak != 0;
            }
            if dsu.find(origin) == dsu.find(index(&c[..d])) {
                for k in 0..d {
                    wraps[k] |= shifted[k];
                }
            }
        }
    }
    wraps
}

/// Sizes of string clusters by flood fill over links sharing an endpoint.
pub fn flood_fill_census(cfg: &GaugeConfig) -> Vec<usize> {
    let lat = cfg.lattice();
    let strings: Vec<usize> = cfg.strings().collect();
    let mut seen = vec![false; strings.len()];
    let mut sizes = Vec::new();
    for i in 0..strings.len() {
        if seen[i] {
            continue;
        }
        seen[i] = true;
        let mut queue = vec![i];
        let mut size = 0;
        while let Some(j) = queue.pop() {
            size += 1;
            let (a, b) = lat.link_sites(strings[j]);
            for k in 0..strings.len() {
                if seen[k] {
                    continue;
                }
                let (c, e) = lat.link_sites(strings[k]);
                if a == c || a == e || b == c || b == e {
                    seen[k] = true;
                    queue.push(k);
                }
            }
        }
        sizes.push(size);
    }
    sizes.sort_unstable_by(|a, b| b.cmp(a));
    sizes
}
