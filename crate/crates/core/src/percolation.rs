//! Wrapping detection and cluster statistics of electric strings on the torus.
//!
//! A string cluster wraps dimension `k` when some closed walk inside it has a
//! nonzero net number of crossings of the seam in `k`. The detector runs a
//! depth-first search per dimension, labels sites with the crossing count
//! accumulated along the search tree, and reports wrapping as soon as an
//! edge joins two sites whose labels disagree with the step between them.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gauge::{Basis, GaugeConfig};
use crate::lattice::Lattice;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PercolationReport {
    pub wraps: Vec<bool>,
    pub percolates: bool,
    /// Strings in the largest cluster, wrapping or not.
    pub largest_cluster_links: usize,
    pub total_strings: usize,
    /// `largest_cluster_links / link_count` when percolating, else 0.
    pub strength: f64,
}

/// Reusable scratch space; one per chain avoids per-sample allocation.
#[derive(Clone, Debug, Default)]
pub struct Detector {
    stamp: Vec<u32>,
    generation: u32,
    winding: Vec<i32>,
    stack: Vec<u32>,
    label: Vec<u32>,
    sizes: Vec<usize>,
    /// Stop a dimension's search at the first inconsistent edge.
    pub early_exit: bool,
}

impl Detector {
    pub fn new() -> Self {
        Self {
            early_exit: true,
            ..Self::default()
        }
    }

    fn reset(&mut self, sites: usize) {
        if self.stamp.len() != sites {
            self.stamp = vec![0; sites];
            self.winding = vec![0; sites];
            self.label = vec![0; sites];
            self.generation = 0;
        }
        self.generation = self.generation.wrapping_add(1);
        if self.generation == 0 {
            self.stamp.fill(0);
            self.generation = 1;
        }
    }

    /// Whether some string cluster wraps dimension `dim`.
    pub fn detect_wrapping(&mut self, cfg: &GaugeConfig, dim: usize) -> Result<bool> {
        check(cfg)?;
        let lat = cfg.lattice();
        if dim >= lat.dim() {
            return Err(Error::OutOfRange {
                kind: "dimension",
                index: dim,
                count: lat.dim(),
            });
        }
        Ok(self.wrap_pass(cfg, lat, dim))
    }

    fn wrap_pass(&mut self, cfg: &GaugeConfig, lat: &Lattice, dim: usize) -> bool {
        self.reset(lat.site_count());
        let gen = self.generation;
        let mut found = false;
        for start in 0..lat.site_count() {
            if self.stamp[start] == gen {
                continue;
            }
            if !lat.star(start).iter().any(|e| cfg.is_string(e.link as usize)) {
                continue;
            }
            self.stamp[start] = gen;
            self.winding[start] = 0;
            self.stack.clear();
            self.stack.push(start as u32);
            while let Some(v) = self.stack.pop() {
                let wv = self.winding[v as usize];
                for e in lat.star(v as usize) {
                    if !cfg.is_string(e.link as usize) {
                        continue;
                    }
                    let n = e.neighbor as usize;
                    let w_new = wv + e.crossing(dim);
                    if self.stamp[n] == gen {
                        if self.winding[n] != w_new {
                            if self.early_exit {
                                return true;
                            }
                            found = true;
                        }
                    } else {
                        self.stamp[n] = gen;
                        self.winding[n] = w_new;
                        self.stack.push(n as u32);
                    }
                }
            }
        }
        found
    }

    /// Sizes (in string links) of all string clusters, largest first.
    pub fn cluster_census(&mut self, cfg: &GaugeConfig) -> Result<Vec<usize>> {
        check(cfg)?;
        self.label_clusters(cfg);
        let mut sizes = self.sizes.clone();
        sizes.sort_unstable_by(|a, b| b.cmp(a));
        Ok(sizes)
    }

    fn label_clusters(&mut self, cfg: &GaugeConfig) {
        let lat = cfg.lattice();
        self.reset(lat.site_count());
        let gen = self.generation;
        self.sizes.clear();
        for start in 0..lat.site_count() {
            if self.stamp[start] == gen {
                continue;
            }
            if !lat.star(start).iter().any(|e| cfg.is_string(e.link as usize)) {
                continue;
            }
            let id = self.sizes.len() as u32;
            let mut twice_links = 0usize;
            self.stamp[start] = gen;
            self.label[start] = id;
            self.stack.clear();
            self.stack.push(start as u32);
            while let Some(v) = self.stack.pop() {
                for e in lat.star(v as usize) {
                    if !cfg.is_string(e.link as usize) {
                        continue;
                    }
                    twice_links += 1;
                    let n = e.neighbor as usize;
                    if self.stamp[n] != gen {
                        self.stamp[n] = gen;
                        self.label[n] = id;
                        self.stack.push(n as u32);
                    }
                }
            }
            // Each string is seen once from each endpoint.
            self.sizes.push(twice_links / 2);
        }
    }

    pub fn analyze(&mut self, cfg: &GaugeConfig) -> Result<PercolationReport> {
        check(cfg)?;
        let lat = cfg.lattice();
        let wraps: Vec<bool> = (0..lat.dim()).map(|k| self.wrap_pass(cfg, lat, k)).collect();
        let percolates = wraps.iter().any(|&w| w);
        self.label_clusters(cfg);
        let largest = self.sizes.iter().copied().max().unwrap_or(0);
        let total = cfg.string_count();
        let strength = if percolates {
            largest as f64 / lat.link_count() as f64
        } else {
            0.0
        };
        Ok(PercolationReport {
            wraps,
            percolates,
            largest_cluster_links: largest,
            total_strings: total,
            strength,
        })
    }
}

fn check(cfg: &GaugeConfig) -> Result<()> {
    if cfg.basis() != Basis::X {
        return Err(Error::Invalid(
            "percolation is defined on electric-field (X basis) snapshots only".into(),
        ));
    }
    Ok(())
}

pub fn detect_wrapping(cfg: &GaugeConfig, dim: usize) -> Result<bool> {
    Detector::new().detect_wrapping(cfg, dim)
}

pub fn analyze(cfg: &GaugeConfig) -> Result<PercolationReport> {
    Detector::new().analyze(cfg)
}

pub fn cluster_census(cfg: &GaugeConfig) -> Result<Vec<usize>> {
    Detector::new().cluster_census(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::Arc;

    fn sq(l: usize) -> Arc<Lattice> {
        Arc::new(Lattice::new(2, l).unwrap())
    }

    fn row(lat: &Lattice, y: usize, dim: usize) -> Vec<usize> {
        (0..lat.size())
            .map(|x| {
                let c = if dim == 0 { [x, y] } else { [y, x] };
                lat.link(lat.site_at(&c), dim)
            })
            .collect()
    }

    #[test]
    fn straight_loop_wraps_one_dimension() {
        let lat = sq(4);
        let cfg = GaugeConfig::from_strings(&lat, Basis::X, row(&lat, 1, 0)).unwrap();
        assert!(detect_wrapping(&cfg, 0).unwrap());
        assert!(!detect_wrapping(&cfg, 1).unwrap());
        let r = analyze(&cfg).unwrap();
        assert!(r.percolates);
        assert_eq!(r.strength, 0.125);
        assert_eq!(r.total_strings, 4);
    }

    #[test]
    fn plaquette_loop_is_contractible() {
        let lat = sq(4);
        let cfg = GaugeConfig::from_strings(&lat, Basis::X, lat.plaquette_links(5).unwrap()).unwrap();
        assert!(!detect_wrapping(&cfg, 0).unwrap());
        assert!(!detect_wrapping(&cfg, 1).unwrap());
        let r = analyze(&cfg).unwrap();
        assert_eq!((r.percolates, r.strength, r.largest_cluster_links), (false, 0.0, 4));
    }

    #[test]
    fn fully_packed_wraps_everywhere() {
        for (d, l) in [(2, 2), (2, 5), (3, 3)] {
            let lat = Arc::new(Lattice::new(d, l).unwrap());
            let cfg = GaugeConfig::from_strings(&lat, Basis::X, 0..lat.link_count()).unwrap();
            let r = analyze(&cfg).unwrap();
            assert!(r.wraps.iter().all(|&w| w));
            assert_eq!(r.strength, 1.0);
        }
    }

    #[test]
    fn vacuum_report() {
        let lat = sq(4);
        let r = analyze(&GaugeConfig::vacuum(&lat, Basis::X)).unwrap();
        assert_eq!(r.wraps, vec![false, false]);
        assert_eq!((r.total_strings, r.largest_cluster_links, r.strength), (0, 0, 0.0));
        assert!(cluster_census(&GaugeConfig::vacuum(&lat, Basis::X)).unwrap().is_empty());
    }

    #[test]
    fn winding_loop_plus_plaquette() {
        let lat = sq(4);
        let mut links = row(&lat, 0, 0);
        // Plaquette at (1,2) shares no site with row y = 0.
        let p = lat.site_at(&[1, 2]);
        links.extend(lat.plaquette_links(p).unwrap());
        let cfg = GaugeConfig::from_strings(&lat, Basis::X, links).unwrap();
        let r = analyze(&cfg).unwrap();
        assert_eq!(r.largest_cluster_links, 4);
        assert_eq!(r.total_strings, 8);
        assert_eq!(r.strength, 4.0 / 32.0);
        assert_eq!(cluster_census(&cfg).unwrap(), vec![4, 4]);
    }

    #[test]
    fn l2_double_links_wrap() {
        let lat = sq(2);
        // Both dim-0 links out of site 0 and site 1 join the same two sites.
        let links = [lat.link(0, 0), lat.link(1, 0)];
        let cfg = GaugeConfig::from_strings(&lat, Basis::X, links).unwrap();
        assert!(detect_wrapping(&cfg, 0).unwrap());
        assert!(!detect_wrapping(&cfg, 1).unwrap());
    }

    #[test]
    fn rejects_z_basis() {
        let lat = sq(3);
        assert!(analyze(&GaugeConfig::vacuum(&lat, Basis::Z)).is_err());
        assert!(detect_wrapping(&GaugeConfig::vacuum(&lat, Basis::X), 2).is_err());
    }

    #[test]
    fn detector_reuse_across_sizes() {
        let mut det = Detector::new();
        for l in [3, 5, 3] {
            let lat = sq(l);
            let cfg = GaugeConfig::from_strings(&lat, Basis::X, row(&lat, 0, 1)).unwrap();
            assert!(det.detect_wrapping(&cfg, 1).unwrap());
            assert!(!det.detect_wrapping(&cfg, 0).unwrap());
        }
    }
}
