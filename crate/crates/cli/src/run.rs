//! Grid runs: one chain per point on a worker pool, one file per chain, and
//! a summary merged at the end.
//!
//! Output directory layout:
//!
//! * `manifest.toml`: canonical manifest
//! * `summary.csv`: one row of estimates per point
//! * `acceptance.csv`: acceptance rates per point and update type
//! * `series/point_NNNN.csv`: one row per sample
//! * `snapshots/point_NNNN.z2snap`: with `--snapshots`
//! * `timing.csv`: wall time per point, the only file that is not
//!   reproducible

use std::path::{Path, PathBuf};
use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;

use z2perc::analysis::{binder, mean_estimate, Estimate};
use z2perc::classical::{run_classical_with, Counter, Ensemble, ObservableSeries};
use z2perc::{Basis, GaugeConfig};
use z2qmc::measure::fm_from_products;
use z2qmc::{ed_solve, run_qmc_with, Couplings, QmcParams, QmcSeries};

use crate::error::{CliError, Result};
use crate::manifest::{Manifest, Module, Point};
use crate::snapshot::{hex, SnapshotFile};

#[derive(Clone, Debug)]
pub struct RunOptions {
    pub out: PathBuf,
    pub workers: usize,
    pub snapshots: bool,
    /// Keep every `slice_every`-th sample in the snapshot stream.
    pub slice_every: usize,
}

pub fn point_name(i: usize) -> String {
    format!("point_{i:04}")
}

fn csv_writer(path: &Path) -> Result<csv::Writer<std::fs::File>> {
    csv::Writer::from_path(path).map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", path.display())))
}

fn opt(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

fn est(e: &Estimate) -> [String; 2] {
    [e.value.to_string(), e.error.to_string()]
}

fn opt_est(xs: &[Option<f64>]) -> [String; 2] {
    if xs.iter().any(Option::is_none) || xs.is_empty() {
        return [String::new(), String::new()];
    }
    let v: Vec<f64> = xs.iter().map(|x| x.unwrap()).collect();
    est(&mean_estimate(&v))
}

fn binder_cols(strength: &[f64]) -> [String; 2] {
    let b = binder(strength);
    [opt(b.value), if b.value.is_some() { b.error.to_string() } else { String::new() }]
}

#[derive(Serialize)]
struct Timing {
    point: usize,
    wall_seconds: f64,
}

enum Outcome {
    Classical(ObservableSeries),
    Qmc(QmcSeries),
    Ed(Vec<String>),
}

struct Done {
    summary: Vec<String>,
    acceptance: Vec<(String, Counter)>,
    wall: f64,
}

/// Run every point of `manifest` and write the output directory.
pub fn run_manifest(manifest: &Manifest, opts: &RunOptions) -> Result<()> {
    let points = manifest.points()?;
    let hash = hex(&manifest.hash());
    std::fs::create_dir_all(opts.out.join("series"))?;
    if opts.snapshots {
        std::fs::create_dir_all(opts.out.join("snapshots"))?;
    }
    std::fs::write(opts.out.join("manifest.toml"), manifest.canonical())?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.workers.max(1))
        .build()
        .map_err(|e| CliError::Runtime(e.to_string()))?;
    let raw_hash = manifest.hash();
    let results: Vec<Result<Done>> = pool.install(|| {
        points
            .par_iter()
            .enumerate()
            .map(|(i, p)| run_point(i, p, &hash, raw_hash, opts))
            .collect()
    });
    let mut done = Vec::with_capacity(results.len());
    for (i, r) in results.into_iter().enumerate() {
        done.push(r.map_err(|e| match e {
            CliError::Validation(m) => CliError::Validation(format!("point {i}: {m}")),
            other => CliError::Runtime(format!("point {i}: {other}")),
        })?);
    }

    let mut w = csv_writer(&opts.out.join("summary.csv"))?;
    w.write_record(summary_header(manifest.module))?;
    for d in &done {
        w.write_record(&d.summary)?;
    }
    w.flush()?;
    if manifest.module != Module::Ed {
        let mut w = csv_writer(&opts.out.join("acceptance.csv"))?;
        w.write_record(["manifest_hash", "point", "update", "proposed", "accepted", "rate"])?;
        for (i, d) in done.iter().enumerate() {
            for (name, c) in &d.acceptance {
                w.write_record([
                    hash.clone(),
                    i.to_string(),
                    name.clone(),
                    c.proposed.to_string(),
                    c.accepted.to_string(),
                    c.rate().to_string(),
                ])?;
            }
        }
        w.flush()?;
    }
    let mut w = csv_writer(&opts.out.join("timing.csv"))?;
    for (i, d) in done.iter().enumerate() {
        w.serialize(Timing {
            point: i,
            wall_seconds: d.wall,
        })?;
    }
    w.flush()?;
    Ok(())
}

fn run_point(i: usize, p: &Point, hash: &str, raw_hash: [u8; 32], opts: &RunOptions) -> Result<Done> {
    let started = std::time::Instant::now();
    let mut snaps: Option<SnapshotFile> = None;
    let mut k = 0usize;
    let mut keep = |cfg: &GaugeConfig| {
        if opts.snapshots {
            if k % opts.slice_every.max(1) == 0 {
                let f = snaps.get_or_insert_with(|| SnapshotFile::new(cfg.basis(), Arc::clone(cfg.lattice()), raw_hash));
                f.push(cfg).expect("one lattice per chain");
            }
            k += 1;
        }
    };
    let outcome = match p {
        Point::Classical(params) => Outcome::Classical(run_classical_with(params, &mut keep)?),
        Point::Qmc(params) => Outcome::Qmc(run_qmc_with(params, &mut keep)?),
        Point::Ed { size, couplings, beta } => Outcome::Ed(ed_row(hash, i, *size, *couplings, *beta)?),
    };
    if let Some(f) = &snaps {
        f.save(&opts.out.join("snapshots").join(format!("{}.z2snap", point_name(i))))?;
    }
    let series = opts.out.join("series").join(format!("{}.csv", point_name(i)));
    let done = match outcome {
        Outcome::Classical(s) => {
            write_classical_series(&series, hash, i, &s)?;
            classical_done(hash, i, &s)
        }
        Outcome::Qmc(s) => {
            write_qmc_series(&series, hash, i, &s)?;
            qmc_done(hash, i, &s)?
        }
        Outcome::Ed(row) => Done {
            summary: row,
            acceptance: Vec::new(),
            wall: 0.0,
        },
    };
    Ok(Done {
        wall: started.elapsed().as_secs_f64(),
        ..done
    })
}

fn ed_row(hash: &str, i: usize, size: usize, c: Couplings, beta: f64) -> Result<Vec<String>> {
    let r = ed_solve(size, c, beta)?;
    let t = r.thermal.as_ref();
    Ok(vec![
        hash.to_string(),
        i.to_string(),
        size.to_string(),
        c.mu.to_string(),
        c.j.to_string(),
        c.h.to_string(),
        c.lambda.to_string(),
        beta.to_string(),
        r.ground_energy.to_string(),
        opt(t.map(|t| t.energy)),
        opt(t.map(|t| t.tau_x)),
        opt(t.map(|t| t.tau_z)),
        opt(t.map(|t| t.star)),
        opt(t.map(|t| t.plaquette)),
    ])
}

/// The `summary.csv` table of an `ed` manifest, computed in-process.
pub fn ed_table(manifest: &Manifest) -> Result<String> {
    let hash = hex(&manifest.hash());
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(summary_header(Module::Ed))?;
    for (i, p) in manifest.points()?.iter().enumerate() {
        let Point::Ed { size, couplings, beta } = p else {
            return Err(CliError::Validation("not an ed manifest".into()));
        };
        w.write_record(ed_row(&hash, i, *size, *couplings, *beta)?)?;
    }
    Ok(String::from_utf8(w.into_inner().map_err(|e| CliError::Runtime(e.to_string()))?).expect("utf-8 csv"))
}

fn summary_header(module: Module) -> Vec<&'static str> {
    match module {
        Module::Classical => vec![
            "manifest_hash", "point", "dim", "L", "t_over_h", "ensemble", "particles", "mu", "samples", "pi", "pi_err",
            "strength", "strength_err", "binder", "binder_err", "density", "density_err", "energy", "energy_err",
        ],
        Module::Qmc => vec![
            "manifest_hash", "point", "basis", "L", "mu", "J", "h", "lambda", "beta", "samples", "energy", "energy_err",
            "tau_x", "tau_x_err", "tau_z", "tau_z_err", "star", "star_err", "plaquette", "plaquette_err", "pi", "pi_err",
            "strength", "strength_err", "binder", "binder_err", "fm", "fm_err", "fm_reliable",
        ],
        Module::Ed => vec![
            "manifest_hash", "point", "L", "mu", "J", "h", "lambda", "beta", "ground_energy", "energy", "tau_x", "tau_z",
            "star", "plaquette",
        ],
    }
}

fn ensemble_cols(e: Ensemble) -> [String; 3] {
    match e {
        Ensemble::Canonical { n } => ["canonical".into(), n.to_string(), String::new()],
        Ensemble::GrandCanonical { mu } => ["grand".into(), String::new(), mu.to_string()],
    }
}

fn write_classical_series(path: &Path, hash: &str, i: usize, s: &ObservableSeries) -> Result<()> {
    let p = &s.params;
    let mut w = csv_writer(path)?;
    w.write_record([
        "manifest_hash", "module", "point", "sample", "L", "t_over_h", "particles", "mu", "percolates", "strength",
        "largest_cluster", "total_strings", "density", "energy",
    ])?;
    let [_, particles, mu] = ensemble_cols(p.ensemble);
    for (k, r) in s.records.iter().enumerate() {
        w.write_record([
            hash.to_string(),
            "classical".into(),
            i.to_string(),
            k.to_string(),
            p.size.to_string(),
            p.t_over_h.to_string(),
            particles.clone(),
            mu.clone(),
            (r.percolates as u8).to_string(),
            r.strength.to_string(),
            r.largest_cluster.to_string(),
            r.total_strings.to_string(),
            r.matter_density.to_string(),
            r.energy.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn classical_done(hash: &str, i: usize, s: &ObservableSeries) -> Done {
    let p = &s.params;
    let pi = mean_estimate(&s.column(|r| r.percolates as u8 as f64));
    let strength = s.column(|r| r.strength);
    let mut row = vec![hash.to_string(), i.to_string(), p.dim.to_string(), p.size.to_string(), p.t_over_h.to_string()];
    row.extend(ensemble_cols(p.ensemble));
    row.push(s.records.len().to_string());
    row.extend(est(&pi));
    row.extend(est(&mean_estimate(&strength)));
    row.extend(binder_cols(&strength));
    row.extend(est(&mean_estimate(&s.column(|r| r.matter_density))));
    row.extend(est(&mean_estimate(&s.column(|r| r.energy))));
    let a = s.acceptance;
    Done {
        summary: row,
        acceptance: vec![("plaquette".into(), a.plaquette), ("hop".into(), a.hop), ("link".into(), a.link)],
        wall: 0.0,
    }
}

fn write_qmc_series(path: &Path, hash: &str, i: usize, s: &QmcSeries) -> Result<()> {
    let p: &QmcParams = &s.params;
    let mut w = csv_writer(path)?;
    w.write_record([
        "manifest_hash", "module", "point", "sample", "L", "h", "lambda", "beta", "basis", "energy", "tau_x", "tau_z",
        "star", "plaquette", "link_events", "four_events", "percolates", "strength", "largest_cluster", "total_strings",
        "loop_full", "loop_half",
    ])?;
    let basis = match p.basis {
        Basis::X => "x",
        Basis::Z => "z",
    };
    for (k, r) in s.records.iter().enumerate() {
        w.write_record([
            hash.to_string(),
            "qmc".into(),
            i.to_string(),
            k.to_string(),
            p.size.to_string(),
            p.couplings.h.to_string(),
            p.couplings.lambda.to_string(),
            p.beta.to_string(),
            basis.into(),
            r.energy.to_string(),
            opt(r.tau_x),
            opt(r.tau_z),
            opt(r.star),
            opt(r.plaquette),
            r.n_link_events.to_string(),
            r.n_four_events.to_string(),
            r.percolates.map(|b| (b as u8).to_string()).unwrap_or_default(),
            opt(r.strength),
            r.largest_cluster.map(|v| v.to_string()).unwrap_or_default(),
            r.total_strings.map(|v| v.to_string()).unwrap_or_default(),
            opt(r.loop_full),
            opt(r.loop_half),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn qmc_done(hash: &str, i: usize, s: &QmcSeries) -> Result<Done> {
    let p = &s.params;
    let c = p.couplings;
    let mut row = vec![
        hash.to_string(),
        i.to_string(),
        match p.basis {
            Basis::X => "x".into(),
            Basis::Z => "z".into(),
        },
        p.size.to_string(),
        c.mu.to_string(),
        c.j.to_string(),
        c.h.to_string(),
        c.lambda.to_string(),
        p.beta.to_string(),
        s.records.len().to_string(),
    ];
    row.extend(est(&mean_estimate(&s.column(|r| r.energy))));
    for f in [
        |r: &z2qmc::QmcRecord| r.tau_x,
        |r: &z2qmc::QmcRecord| r.tau_z,
        |r: &z2qmc::QmcRecord| r.star,
        |r: &z2qmc::QmcRecord| r.plaquette,
    ] {
        row.extend(opt_est(&s.records.iter().map(f).collect::<Vec<_>>()));
    }
    match p.basis {
        Basis::X => {
            let strength: Vec<f64> = s.records.iter().map(|r| r.strength.unwrap()).collect();
            row.extend(est(&mean_estimate(&s.column(|r| r.percolates.unwrap() as u8 as f64))));
            row.extend(est(&mean_estimate(&strength)));
            row.extend(binder_cols(&strength));
            row.extend([String::new(), String::new(), String::new()]);
        }
        Basis::Z => {
            row.extend(std::iter::repeat_n(String::new(), 6));
            let full = s.column(|r| r.loop_full.unwrap());
            let half = s.column(|r| r.loop_half.unwrap());
            let fm = fm_from_products(&full, &half)?;
            row.extend([fm.value.to_string(), fm.error.to_string(), fm.reliable.to_string()]);
        }
    }
    let a = s.acceptance;
    Ok(Done {
        summary: row,
        acceptance: vec![
            ("link_pair".into(), a.link_pair),
            ("four_pair".into(), a.four_pair),
            ("shift".into(), a.shift),
            ("segment".into(), a.segment),
            ("composite".into(), a.composite),
            ("global".into(), a.global),
            ("loop".into(), a.loop_flip),
            ("winding".into(), a.winding),
            ("line_segment".into(), a.line_segment),
            ("strip".into(), a.strip),
        ],
        wall: 0.0,
    })
}
