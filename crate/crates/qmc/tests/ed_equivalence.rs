//! QMC against exact diagonalization on the 2x2 torus.

use z2perc::analysis::mean_estimate;
use z2perc::Basis;
use z2qmc::{ed_solve, run_qmc, Couplings, QmcParams, QmcSeries};

fn run(basis: Basis, h: f64, lambda: f64, beta: f64, n: usize, seed: u64) -> QmcSeries {
    let mut p = QmcParams::ground_state(2, h, lambda, basis);
    p.beta = beta;
    p.thermalization = 2000;
    p.stride = 1;
    p.n_samples = n;
    p.seed = seed;
    run_qmc(&p).unwrap()
}

/// `|qmc - exact| <= 3 sigma`. A series with no variance cannot resolve
/// deviations below one part in its length, which is used as a floor.
fn check(s: &QmcSeries, name: &str, f: impl Fn(&z2qmc::QmcRecord) -> Option<f64>, exact: f64) {
    let xs: Vec<f64> = s.records.iter().map(|r| f(r).unwrap()).collect();
    let est = mean_estimate(&xs);
    let tol = 3.0 * est.error.max(1.0 / xs.len() as f64);
    let p = &s.params;
    assert!(
        (est.value - exact).abs() <= tol,
        "{name}: {} +- {} vs exact {exact} ({:?}, h={}, lambda={}, beta={})",
        est.value,
        est.error,
        p.basis,
        p.couplings.h,
        p.couplings.lambda,
        p.beta
    );
}

fn compare(h: f64, lambda: f64, beta: f64, n: usize, seed: u64) {
    let ed = ed_solve(2, Couplings::fields(h, lambda), beta).unwrap().thermal.unwrap();
    for basis in [Basis::X, Basis::Z] {
        let s = run(basis, h, lambda, beta, n, seed);
        check(&s, "energy", |r| Some(r.energy), ed.energy);
        check(&s, "tau_x", |r| r.tau_x, ed.tau_x);
        check(&s, "star", |r| r.star, ed.star);
        check(&s, "plaquette", |r| r.plaquette, ed.plaquette);
    }
}

#[test]
fn fields_point_beta4() {
    compare(0.3, 0.3, 4.0, 60_000, 1);
}

#[test]
fn small_field_corners() {
    compare(0.0, 0.3, 2.0, 30_000, 2);
    compare(0.3, 0.0, 2.0, 30_000, 3);
    compare(0.15, 0.15, 4.0, 40_000, 4);
}

#[test]
fn slices_reproduce_tau_x() {
    // X-basis slices at a random time: the string fraction gives tau^x.
    let (h, lambda, beta) = (0.3, 0.15, 2.0);
    let ed = ed_solve(2, Couplings::fields(h, lambda), beta).unwrap().thermal.unwrap();
    let mut p = QmcParams::ground_state(2, h, lambda, Basis::X);
    p.beta = beta;
    p.stride = 1;
    p.n_samples = 40_000;
    p.seed = 5;
    let mut xs = Vec::new();
    z2qmc::run_qmc_with(&p, |cfg| {
        let strings = cfg.strings().count() as f64;
        xs.push(1.0 - 2.0 * strings / cfg.link_count() as f64);
    })
    .unwrap();
    let est = mean_estimate(&xs);
    assert!((est.value - ed.tau_x).abs() < 3.0 * est.error, "{est:?} vs {}", ed.tau_x);
}
