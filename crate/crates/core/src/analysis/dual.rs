//! Map closed-loop electric configurations of the square lattice to spins on
//! the dual lattice, `s_p s_q = tau_l` across every link `l` shared by
//! plaquettes `p` and `q`. A loop that winds the torus an odd number of times
//! has no such preimage.

use std::collections::VecDeque;

use crate::error::{Error, Result};
use crate::gauge::GaugeConfig;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum DualMap {
    /// One spin per plaquette, with plaquette 0 fixed to `+1`.
    Spins(Vec<i8>),
    Unmappable,
}

pub fn dual_ising_map(cfg: &GaugeConfig) -> Result<DualMap> {
    let lat = cfg.lattice();
    if lat.dim() != 2 {
        return Err(Error::NeedsSquareLattice);
    }
    if cfg.matter_count() != 0 {
        return Err(Error::MatterPresent);
    }
    let n = lat.plaquette_count();
    let mut spin = vec![0i8; n];
    spin[0] = 1;
    let mut queue = VecDeque::from([0usize]);
    while let Some(p) = queue.pop_front() {
        for &l in lat.plaquette(p) {
            let tau = cfg.spin(l as usize) as i8;
            for &q in lat.link_plaquettes(l as usize) {
                let q = q as usize;
                if q == p {
                    continue;
                }
                let want = spin[p] * tau;
                if spin[q] == 0 {
                    spin[q] = want;
                    queue.push_back(q);
                } else if spin[q] != want {
                    return Ok(DualMap::Unmappable);
                }
            }
        }
    }
    Ok(DualMap::Spins(spin))
}

/// Inverse map: `tau_l = s_p s_q` for the two plaquettes sharing `l`.
pub fn links_from_dual(cfg_like: &GaugeConfig, spins: &[i8]) -> GaugeConfig {
    let lat = cfg_like.lattice();
    let mut out = GaugeConfig::vacuum(lat, cfg_like.basis());
    for l in 0..lat.link_count() {
        let pq = lat.link_plaquettes(l);
        if spins[pq[0] as usize] * spins[pq[1] as usize] < 0 {
            out.set_string(l, true);
        }
    }
    out
}

/// Bond energy `-h sum_<pq> s_p s_q` over dual bonds (one per link).
pub fn dual_bond_energy(cfg_like: &GaugeConfig, spins: &[i8], h: f64) -> f64 {
    let lat = cfg_like.lattice();
    -h * (0..lat.link_count())
        .map(|l| {
            let pq = lat.link_plaquettes(l);
            (spins[pq[0] as usize] * spins[pq[1] as usize]) as f64
        })
        .sum::<f64>()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gauge::Basis;
    use crate::lattice::Lattice;
    use std::sync::Arc;

    #[test]
    fn examples() {
        let lat = Arc::new(Lattice::new(2, 4).unwrap());
        let vac = GaugeConfig::vacuum(&lat, Basis::X);
        assert_eq!(dual_ising_map(&vac).unwrap(), DualMap::Spins(vec![1; 16]));
        let loop5 = GaugeConfig::from_strings(&lat, Basis::X, lat.plaquette_links(5).unwrap()).unwrap();
        let DualMap::Spins(s) = dual_ising_map(&loop5).unwrap() else { panic!() };
        let flipped: Vec<usize> = (0..16).filter(|&p| s[p] != s[0]).collect();
        assert_eq!(flipped, vec![5]);
        let row: Vec<usize> = (0..4).map(|x| lat.link(lat.site_at(&[x, 1]), 0)).collect();
        let winding = GaugeConfig::from_strings(&lat, Basis::X, row.clone()).unwrap();
        assert_eq!(dual_ising_map(&winding).unwrap(), DualMap::Unmappable);
        let mut two = row;
        two.extend((0..4).map(|x| lat.link(lat.site_at(&[x, 3]), 0)));
        let double = GaugeConfig::from_strings(&lat, Basis::X, two).unwrap();
        let DualMap::Spins(s) = dual_ising_map(&double).unwrap() else { panic!() };
        assert_eq!(links_from_dual(&double, &s), double);
    }

    #[test]
    fn rejects_matter_and_cubic() {
        let lat = Arc::new(Lattice::new(2, 3).unwrap());
        let one = GaugeConfig::from_strings(&lat, Basis::X, [0]).unwrap();
        assert_eq!(dual_ising_map(&one).unwrap_err(), Error::MatterPresent);
        let cubic = Arc::new(Lattice::new(3, 2).unwrap());
        assert!(dual_ising_map(&GaugeConfig::vacuum(&cubic, Basis::X)).is_err());
    }
}
