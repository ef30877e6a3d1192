//! Periodic hypercubic lattices (square and cubic) with precomputed incidence.
//!
//! Sites are indexed with the first coordinate running fastest:
//! `site = x0 + L*x1 + L^2*x2`. Link `site*D + d` joins `site` to its forward
//! neighbour in direction `d`, so links are ordered site-major and
//! direction-minor. Plaquette `site*P + plane` spans the forward square at
//! `site` in `plane`, with planes ordered `(0,1), (0,2), (1,2)`.
//!
//! The winding cut in every dimension sits on the seam between coordinate
//! `L-1` and `0`.

use crate::error::{Error, Result};

/// One entry of a site's star: an incident link and where it leads.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct StarEntry {
    pub link: u32,
    pub neighbor: u32,
    pub dim: u8,
    pub forward: bool,
    /// Cut crossing of this step in its own dimension (+1, -1 or 0).
    pub wrap: i8,
}

impl StarEntry {
    #[inline]
    pub fn crossing(&self, dim: usize) -> i32 {
        if self.dim as usize == dim {
            self.wrap as i32
        } else {
            0
        }
    }
}

const PLANES_2D: [(usize, usize); 1] = [(0, 1)];
const PLANES_3D: [(usize, usize); 3] = [(0, 1), (0, 2), (1, 2)];

#[derive(Debug, Clone)]
pub struct Lattice {
    dim: usize,
    size: usize,
    n_sites: usize,
    fwd: Vec<u32>,
    bwd: Vec<u32>,
    stars: Vec<StarEntry>,
    plaquettes: Vec<[u32; 4]>,
    link_plaquettes: Vec<u32>,
}

impl Lattice {
    pub fn new(dim: usize, size: usize) -> Result<Self> {
        if !(2..=3).contains(&dim) {
            return Err(Error::Dimension(dim));
        }
        if size < 2 {
            return Err(Error::Size(size));
        }
        let n_sites = size.pow(dim as u32);
        let stride = |d: usize| size.pow(d as u32);

        let mut fwd = vec![0u32; n_sites * dim];
        let mut bwd = vec![0u32; n_sites * dim];
        for site in 0..n_sites {
            for d in 0..dim {
                let x = (site / stride(d)) % size;
                let base = site - x * stride(d);
                fwd[site * dim + d] = (base + ((x + 1) % size) * stride(d)) as u32;
                bwd[site * dim + d] = (base + ((x + size - 1) % size) * stride(d)) as u32;
            }
        }

        let mut stars = Vec::with_capacity(n_sites * 2 * dim);
        for site in 0..n_sites {
            for d in 0..dim {
                let x = (site / stride(d)) % size;
                stars.push(StarEntry {
                    link: (site * dim + d) as u32,
                    neighbor: fwd[site * dim + d],
                    dim: d as u8,
                    forward: true,
                    wrap: if x == size - 1 { 1 } else { 0 },
                });
                let back = bwd[site * dim + d];
                stars.push(StarEntry {
                    link: back * dim as u32 + d as u32,
                    neighbor: back,
                    dim: d as u8,
                    forward: false,
                    wrap: if x == 0 { -1 } else { 0 },
                });
            }
        }

        let planes: &[(usize, usize)] = if dim == 2 { &PLANES_2D } else { &PLANES_3D };
        let per_link = 2 * (dim - 1);
        let mut plaquettes = Vec::with_capacity(n_sites * planes.len());
        let mut link_plaquettes = vec![u32::MAX; n_sites * dim * per_link];
        let mut fill = vec![0usize; n_sites * dim];
        for site in 0..n_sites {
            for &(a, b) in planes {
                let sa = fwd[site * dim + a] as usize;
                let sb = fwd[site * dim + b] as usize;
                let links = [
                    (site * dim + a) as u32,
                    (sa * dim + b) as u32,
                    (sb * dim + a) as u32,
                    (site * dim + b) as u32,
                ];
                let id = plaquettes.len() as u32;
                for &l in &links {
                    let l = l as usize;
                    link_plaquettes[l * per_link + fill[l]] = id;
                    fill[l] += 1;
                }
                plaquettes.push(links);
            }
        }
        debug_assert!(fill.iter().all(|&f| f == per_link));

        Ok(Self {
            dim,
            size,
            n_sites,
            fwd,
            bwd,
            stars,
            plaquettes,
            link_plaquettes,
        })
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn size(&self) -> usize {
        self.size
    }

    #[inline]
    pub fn site_count(&self) -> usize {
        self.n_sites
    }

    #[inline]
    pub fn link_count(&self) -> usize {
        self.n_sites * self.dim
    }

    #[inline]
    pub fn plaquette_count(&self) -> usize {
        self.plaquettes.len()
    }

    /// Coordination number `z = 2D`.
    #[inline]
    pub fn coordination(&self) -> usize {
        2 * self.dim
    }

    pub fn coords(&self, site: usize) -> [usize; 3] {
        let mut c = [0; 3];
        let mut rest = site;
        for slot in c.iter_mut().take(self.dim) {
            *slot = rest % self.size;
            rest /= self.size;
        }
        c
    }

    pub fn site_at(&self, coords: &[usize]) -> usize {
        coords
            .iter()
            .take(self.dim)
            .rev()
            .fold(0, |acc, &x| acc * self.size + x % self.size)
    }

    #[inline]
    pub fn neighbor(&self, site: usize, dim: usize, forward: bool) -> usize {
        if forward {
            self.fwd[site * self.dim + dim] as usize
        } else {
            self.bwd[site * self.dim + dim] as usize
        }
    }

    #[inline]
    pub fn link(&self, site: usize, dim: usize) -> usize {
        site * self.dim + dim
    }

    #[inline]
    pub fn link_dim(&self, link: usize) -> usize {
        link % self.dim
    }

    /// `(tail, head)` of a link, where `head` is the forward neighbour of `tail`.
    #[inline]
    pub fn link_sites(&self, link: usize) -> (usize, usize) {
        let tail = link / self.dim;
        (tail, self.fwd[link] as usize)
    }

    /// Star of `site` without bounds checking; entries alternate forward and
    /// backward steps per dimension.
    #[inline]
    pub fn star(&self, site: usize) -> &[StarEntry] {
        let z = 2 * self.dim;
        &self.stars[site * z..(site + 1) * z]
    }

    pub fn star_links(&self, site: usize) -> Result<Vec<usize>> {
        self.check_site(site)?;
        Ok(self.star(site).iter().map(|e| e.link as usize).collect())
    }

    #[inline]
    pub fn plaquette(&self, plaq: usize) -> &[u32; 4] {
        &self.plaquettes[plaq]
    }

    pub fn plaquette_links(&self, plaq: usize) -> Result<[usize; 4]> {
        if plaq >= self.plaquette_count() {
            return Err(Error::OutOfRange {
                kind: "plaquette",
                index: plaq,
                count: self.plaquette_count(),
            });
        }
        Ok(self.plaquettes[plaq].map(|l| l as usize))
    }

    /// Base site and spanned plane of a plaquette.
    pub fn plaquette_plane(&self, plaq: usize) -> (usize, (usize, usize)) {
        let planes: &[(usize, usize)] = if self.dim == 2 {
            &PLANES_2D
        } else {
            &PLANES_3D
        };
        (plaq / planes.len(), planes[plaq % planes.len()])
    }

    /// Plaquettes containing `link` (there are `2(D-1)` of them).
    #[inline]
    pub fn link_plaquettes(&self, link: usize) -> &[u32] {
        let per = 2 * (self.dim - 1);
        &self.link_plaquettes[link * per..(link + 1) * per]
    }

    pub fn check_site(&self, site: usize) -> Result<()> {
        if site >= self.n_sites {
            return Err(Error::OutOfRange {
                kind: "site",
                index: site,
                count: self.n_sites,
            });
        }
        Ok(())
    }

    /// Net crossing of the winding cut in dimension `dim` when stepping from
    /// `from` to the neighbouring site `to`.
    ///
    /// At `L = 2` two distinct links join the same pair of sites; the forward
    /// step is assumed then. Use [`StarEntry::crossing`] when the link is known.
    pub fn cut_crossing(&self, from: usize, to: usize, dim: usize) -> Result<i32> {
        self.check_site(from)?;
        self.check_site(to)?;
        if dim >= self.dim {
            return Err(Error::OutOfRange {
                kind: "dimension",
                index: dim,
                count: self.dim,
            });
        }
        let star = self.star(from);
        star.iter()
            .filter(|e| e.forward)
            .chain(star.iter().filter(|e| !e.forward))
            .find(|e| e.neighbor as usize == to)
            .map(|e| e.crossing(dim))
            .ok_or(Error::NotAdjacent(from, to))
    }

    /// Minimum-image Euclidean distance between two sites.
    pub fn min_image_distance(&self, a: usize, b: usize) -> f64 {
        let (ca, cb) = (self.coords(a), self.coords(b));
        let l = self.size as i64;
        (0..self.dim)
            .map(|d| {
                let mut dx = (ca[d] as i64 - cb[d] as i64).rem_euclid(l);
                if dx > l / 2 {
                    dx = l - dx;
                }
                (dx * dx) as f64
            })
            .sum::<f64>()
            .sqrt()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counts() {
        let sq = Lattice::new(2, 4).unwrap();
        assert_eq!((sq.site_count(), sq.link_count(), sq.plaquette_count()), (16, 32, 16));
        let cu = Lattice::new(3, 4).unwrap();
        assert_eq!((cu.site_count(), cu.link_count(), cu.plaquette_count()), (64, 192, 192));
    }

    #[test]
    fn rejects_bad_shapes() {
        assert_eq!(Lattice::new(2, 1).unwrap_err(), Error::Size(1));
        assert_eq!(Lattice::new(4, 3).unwrap_err(), Error::Dimension(4));
        assert!(Lattice::new(1, 5).is_err());
    }

    #[test]
    fn stars_and_bounds() {
        for (d, z) in [(2, 4), (3, 6)] {
            let lat = Lattice::new(d, 3).unwrap();
            for s in 0..lat.site_count() {
                let links = lat.star_links(s).unwrap();
                assert_eq!(links.len(), z);
                let mut uniq = links.clone();
                uniq.sort();
                uniq.dedup();
                assert_eq!(uniq.len(), z);
                for l in links {
                    let (a, b) = lat.link_sites(l);
                    assert!(a == s || b == s);
                }
            }
            assert!(lat.star_links(lat.site_count()).is_err());
        }
    }

    #[test]
    fn double_counting() {
        for (d, l) in [(2, 2), (2, 5), (3, 3)] {
            let lat = Lattice::new(d, l).unwrap();
            let degree: usize = (0..lat.site_count()).map(|s| lat.star(s).len()).sum();
            assert_eq!(degree, 2 * lat.link_count());
            let mut hits = vec![0; lat.link_count()];
            for s in 0..lat.site_count() {
                for e in lat.star(s) {
                    hits[e.link as usize] += 1;
                }
            }
            assert!(hits.iter().all(|&h| h == 2));
        }
    }

    #[test]
    fn plaquette_incidence() {
        let lat = Lattice::new(2, 4).unwrap();
        assert_eq!(lat.plaquette_links(0).unwrap(), [0, 3, 8, 1]);
        assert!(lat.plaquette_links(16).is_err());
        let cu = Lattice::new(3, 4).unwrap();
        let xy = cu.plaquette_links(0).unwrap();
        assert!(xy.iter().all(|&l| cu.link_dim(l) != 2));
        for l in 0..cu.link_count() {
            assert_eq!(cu.link_plaquettes(l).len(), 4);
            for &p in cu.link_plaquettes(l) {
                assert!(cu.plaquette(p as usize).contains(&(l as u32)));
            }
        }
    }

    #[test]
    fn plaquettes_are_closed_loops() {
        for (d, l) in [(2, 3), (3, 3)] {
            let lat = Lattice::new(d, l).unwrap();
            for p in 0..lat.plaquette_count() {
                let links = lat.plaquette_links(p).unwrap();
                let mut deg = std::collections::HashMap::new();
                for &l in &links {
                    let (a, b) = lat.link_sites(l);
                    *deg.entry(a).or_insert(0) += 1;
                    *deg.entry(b).or_insert(0) += 1;
                }
                assert_eq!(deg.len(), 4);
                assert!(deg.values().all(|&v| v == 2));
            }
        }
    }

    #[test]
    fn cut_crossing_examples() {
        let lat = Lattice::new(2, 4).unwrap();
        let a = lat.site_at(&[3, 0]);
        let b = lat.site_at(&[0, 0]);
        assert_eq!(lat.cut_crossing(a, b, 0).unwrap(), 1);
        assert_eq!(lat.cut_crossing(b, a, 0).unwrap(), -1);
        assert_eq!(lat.cut_crossing(a, b, 1).unwrap(), 0);
        let c = lat.site_at(&[1, 0]);
        let d = lat.site_at(&[2, 0]);
        assert_eq!(lat.cut_crossing(c, d, 0).unwrap(), 0);
        assert_eq!(lat.cut_crossing(c, lat.site_at(&[3, 3]), 0), Err(Error::NotAdjacent(1, 15)));
    }

    #[test]
    fn plaquette_cycle_has_zero_winding() {
        for (d, l) in [(2, 3), (3, 4)] {
            let lat = Lattice::new(d, l).unwrap();
            for p in 0..lat.plaquette_count() {
                let (s, (a, b)) = lat.plaquette_plane(p);
                let sa = lat.neighbor(s, a, true);
                let sab = lat.neighbor(sa, b, true);
                let sb = lat.neighbor(s, b, true);
                let cycle = [s, sa, sab, sb, s];
                for k in 0..d {
                    let w: i32 = cycle
                        .windows(2)
                        .map(|w| lat.cut_crossing(w[0], w[1], k).unwrap())
                        .sum();
                    assert_eq!(w, 0);
                }
            }
        }
    }

    #[test]
    fn straight_path_winds_once() {
        let lat = Lattice::new(3, 5).unwrap();
        for k in 0..3 {
            let mut site = lat.site_at(&[1, 2, 3]);
            let mut total = [0; 3];
            for _ in 0..5 {
                let next = lat.neighbor(site, k, true);
                for (j, t) in total.iter_mut().enumerate() {
                    *t += lat.cut_crossing(site, next, j).unwrap();
                }
                site = next;
            }
            for (j, t) in total.iter().enumerate() {
                assert_eq!(*t, if j == k { 1 } else { 0 });
            }
        }
    }

    #[test]
    fn min_image() {
        let lat = Lattice::new(2, 6).unwrap();
        let a = lat.site_at(&[0, 0]);
        assert_eq!(lat.min_image_distance(a, lat.site_at(&[5, 0])), 1.0);
        assert_eq!(lat.min_image_distance(a, lat.site_at(&[3, 4])), (9.0f64 + 4.0).sqrt());
    }
}
