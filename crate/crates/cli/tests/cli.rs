use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use z2cli::SnapshotFile;
use z2perc::{Basis, GaugeConfig, Lattice};

fn z2perc(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_z2perc"))
        .args(args)
        .current_dir(dir)
        .env_remove("Z2PERC_OUT")
        .env_remove("Z2PERC_WORKERS")
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

const CLASSICAL: &str = r#"
id = "t"
module = "classical"
seed = 9

[classical]
dim = 2
sizes = [6, 8]
t_over_h = [2.0, 3.0]
ensemble = "canonical"
densities = [0.1]
n_samples = 40
thermalization_sweeps = 20
"#;

fn tree(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else if p.file_name().unwrap() != "timing.csv" {
                out.push((p.strip_prefix(dir).unwrap().to_path_buf(), std::fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

#[test]
fn classical_runs_are_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    std::fs::write(d.join("m.toml"), CLASSICAL).unwrap();
    let a = z2perc(&["classical", "--manifest", "m.toml", "--out", "a", "--workers", "2", "--snapshots"], d);
    assert_eq!(code(&a), 0, "{}", stderr(&a));
    let b = z2perc(&["classical", "--manifest", "m.toml", "--out", "b", "--workers", "1", "--snapshots"], d);
    assert_eq!(code(&b), 0);
    let ta = tree(&d.join("a"));
    assert!(ta.len() >= 4 + 4 + 3, "{:?}", ta.iter().map(|t| &t.0).collect::<Vec<_>>());
    assert_eq!(ta, tree(&d.join("b")));

    let c = z2perc(&["classical", "--manifest", "m.toml", "--out", "c", "--seed", "10"], d);
    assert_eq!(code(&c), 0);
    assert_ne!(
        std::fs::read(d.join("a/series/point_0001.csv")).unwrap(),
        std::fs::read(d.join("c/series/point_0001.csv")).unwrap()
    );

    // Every row carries the manifest hash.
    let summary = std::fs::read_to_string(d.join("a/summary.csv")).unwrap();
    let hash = summary.lines().nth(1).unwrap().split(',').next().unwrap().to_string();
    assert_eq!(hash.len(), 64);
    for f in ["summary.csv", "acceptance.csv", "series/point_0003.csv"] {
        let text = std::fs::read_to_string(d.join("a").join(f)).unwrap();
        assert!(text.lines().skip(1).all(|l| l.starts_with(&hash)), "{f}");
    }
}

#[test]
fn invalid_manifests_exit_3() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    std::fs::write(d.join("empty.toml"), CLASSICAL.replace("sizes = [6, 8]", "sizes = []")).unwrap();
    let o = z2perc(&["classical", "--manifest", "empty.toml", "--out", "x"], d);
    assert_eq!(code(&o), 3);
    assert!(stderr(&o).contains("empty"), "{}", stderr(&o));
    let o = z2perc(&["qmc", "--manifest", "empty.toml"], d);
    assert_eq!(code(&o), 3);
    std::fs::write(d.join("m.toml"), CLASSICAL).unwrap();
    let o = z2perc(&["qmc", "--manifest", "m.toml"], d);
    assert_eq!(code(&o), 3);
    let o = z2perc(&["classical", "--manifest", "missing.toml"], d);
    assert_eq!(code(&o), 3);
    let o = z2perc(&["classical"], d);
    assert_eq!(code(&o), 1);
    let o = z2perc(&["frobnicate"], d);
    assert_eq!(code(&o), 1);
}

#[test]
fn unwritable_output_is_a_runtime_failure() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    std::fs::write(d.join("m.toml"), CLASSICAL).unwrap();
    std::fs::write(d.join("file"), b"").unwrap();
    let o = z2perc(&["classical", "--manifest", "m.toml", "--out", "file/sub"], d);
    assert_eq!(code(&o), 2, "{}", stderr(&o));
}

#[test]
fn percolate_matches_inline_analysis() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    std::fs::write(d.join("m.toml"), CLASSICAL).unwrap();
    assert_eq!(code(&z2perc(&["classical", "--manifest", "m.toml", "--out", "o", "--snapshots"], d)), 0);
    let o = z2perc(&["percolate", "o/snapshots/point_0003.z2snap"], d);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let reports: Vec<Vec<String>> = stdout(&o).lines().skip(1).map(|l| l.split(',').map(str::to_string).collect()).collect();
    let series = std::fs::read_to_string(d.join("o/series/point_0003.csv")).unwrap();
    let rows: Vec<Vec<String>> = series.lines().skip(1).map(|l| l.split(',').map(str::to_string).collect()).collect();
    assert_eq!(reports.len(), rows.len());
    for (r, s) in reports.iter().zip(&rows) {
        // percolates, strength, largest cluster, total strings
        assert_eq!(r[2] == "true", s[8] == "1");
        assert_eq!(r[4].parse::<f64>().unwrap(), s[9].parse::<f64>().unwrap());
        assert_eq!((&r[5], &r[6]), (&s[10], &s[11]));
    }

    let jsonl = z2perc(&["percolate", "o/snapshots/point_0003.z2snap", "--format", "jsonl", "--out", "rep"], d);
    assert_eq!(code(&jsonl), 0);
    let text = std::fs::read_to_string(d.join("rep/percolation.jsonl")).unwrap();
    assert_eq!(text.lines().count(), rows.len());
    assert!(text.starts_with("{\"manifest_hash\""));

    // Every other sample with --slice-every 2.
    let o2 = z2perc(&["classical", "--manifest", "m.toml", "--out", "half", "--snapshots", "--slice-every", "2"], d);
    assert_eq!(code(&o2), 0);
    let f = SnapshotFile::load(&d.join("half/snapshots/point_0000.z2snap")).unwrap();
    assert_eq!(f.snapshots.len(), 20);
}

#[test]
fn percolate_rejects_bad_input() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    let lat = Arc::new(Lattice::new(2, 4).unwrap());
    let mut vac = SnapshotFile::new(Basis::X, Arc::clone(&lat), [1; 32]);
    for _ in 0..5 {
        vac.push(&GaugeConfig::vacuum(&lat, Basis::X)).unwrap();
    }
    vac.save(&d.join("vac.z2snap")).unwrap();
    let o = z2perc(&["percolate", "vac.z2snap"], d);
    assert_eq!(code(&o), 0);
    let lines: Vec<String> = stdout(&o).lines().skip(1).map(str::to_string).collect();
    assert_eq!(lines.len(), 5);
    assert!(lines.iter().all(|l| l.split(',').nth(4) == Some("0.0")), "{lines:?}");

    let bytes = vac.to_bytes();
    std::fs::write(d.join("cut.z2snap"), &bytes[..bytes.len() - 40]).unwrap();
    let o = z2perc(&["percolate", "cut.z2snap"], d);
    assert_eq!(code(&o), 3);
    assert!(stderr(&o).contains("checksum"), "{}", stderr(&o));

    let mut z = SnapshotFile::new(Basis::Z, Arc::clone(&lat), [1; 32]);
    z.push(&GaugeConfig::vacuum(&lat, Basis::Z)).unwrap();
    z.save(&d.join("z.z2snap")).unwrap();
    let o = z2perc(&["percolate", "z.z2snap"], d);
    assert_eq!(code(&o), 3);
    assert!(stderr(&o).contains("Z basis"), "{}", stderr(&o));
}

#[test]
fn ed_command() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    let o = z2perc(&["ed", "--size", "2", "--beta", "4"], d);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let row: Vec<String> = stdout(&o).lines().nth(1).unwrap().split(',').map(str::to_string).collect();
    assert!((row[8].parse::<f64>().unwrap() + 8.0).abs() < 1e-9);

    let o = z2perc(&["ed", "--size", "3", "--h", "0.1", "--out", "ed3"], d);
    assert_eq!(code(&o), 0);
    assert!(d.join("ed3/summary.csv").exists());
    let row: Vec<String> = stdout(&o).lines().nth(1).unwrap().split(',').map(str::to_string).collect();
    assert!(row[8].parse::<f64>().unwrap() < -18.0);
    assert_eq!(row[9], "");

    assert_eq!(code(&z2perc(&["ed", "--size", "4"], d)), 3);
}

#[test]
fn qmc_grid() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    let m = r#"
id = "q"
module = "qmc"
seed = 2
[qmc]
basis = "z"
sizes = [4]
h = [0.1]
lambda = [0.1, 0.6]
n_samples = 60
thermalization = 50
"#;
    std::fs::write(d.join("q.toml"), m).unwrap();
    let o = z2perc(&["qmc", "--manifest", "q.toml", "--out", "q", "--snapshots"], d);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let summary = std::fs::read_to_string(d.join("q/summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 3);
    let header: Vec<&str> = summary.lines().next().unwrap().split(',').collect();
    let row: Vec<&str> = summary.lines().nth(1).unwrap().split(',').collect();
    let col = |name: &str| row[header.iter().position(|h| *h == name).unwrap()];
    assert_eq!(col("beta"), "4");
    assert!(col("fm").parse::<f64>().is_ok());
    assert_eq!(col("pi"), "");
    let f = SnapshotFile::load(&d.join("q/snapshots/point_0001.z2snap")).unwrap();
    assert_eq!((f.basis, f.snapshots.len()), (Basis::Z, 60));
}

/// Series files whose strength means follow `L^{-b/nu} f(L^{1/nu}(x - x_c))`.
fn synthetic_series(dir: &Path, x_c: f64, nu: f64, beta_p: f64) -> Vec<String> {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut names = Vec::new();
    for l in [16usize, 24, 32, 48] {
        for i in 0..21 {
            let x = x_c - 0.3 + 0.03 * i as f64;
            let u = (l as f64).powf(1.0 / nu) * (x - x_c);
            let y0 = (l as f64).powf(-beta_p / nu) * (1.0 / (1.0 + (0.8 * u).exp()) + 0.05);
            let noise = Normal::new(0.0, 0.01 * y0 * 20.0).unwrap();
            let name = format!("s_{l}_{i}.csv");
            let mut text = String::from("manifest_hash,module,point,sample,L,t_over_h,strength\n");
            for k in 0..400 {
                text.push_str(&format!("h,classical,{i},{k},{l},{x},{}\n", y0 + noise.sample(&mut rng)));
            }
            std::fs::write(dir.join(&name), text).unwrap();
            names.push(name);
        }
    }
    names
}

#[test]
fn analyze_tasks() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    let names = synthetic_series(d, 2.269, 1.0, 0.58);
    let mut args = vec!["analyze", "--task", "collapse", "--ansatz", "strength"];
    args.extend(names.iter().map(String::as_str));
    let o = z2perc(&args, d);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let report: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    let r = &report["result"];
    let get = |k: &str| r[k].as_f64().unwrap();
    assert!((get("x_c") - 2.269).abs() < 3.0 * get("x_c_error").max(1e-3), "{r}");
    assert!((get("nu") - 1.0).abs() < 3.0 * get("nu_error").max(1e-2), "{r}");
    assert!((get("beta_p") - 0.58).abs() < 3.0 * get("beta_p_error").max(1e-2), "{r}");
    assert_eq!(report["control"], "t_over_h");
    assert_eq!(report["inputs"].as_array().unwrap().len(), names.len());
    assert_eq!(report["inputs"][0]["sha256"].as_str().unwrap().len(), 64);

    let o = z2perc(&["analyze", "--task", "autocorr", &names[0]], d);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let report: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert!(report["result"][0]["tau_int"].as_f64().unwrap() < 2.0);

    // One size only.
    let o = z2perc(&["analyze", "--task", "cross", &names[0], &names[1]], d);
    assert_eq!(code(&o), 3, "{}", stderr(&o));

    // Mixed classical and quantum inputs.
    std::fs::write(d.join("q.csv"), "manifest_hash,module,point,sample,L,h,strength\nh,qmc,0,0,16,0.1,0.5\n").unwrap();
    let o = z2perc(&["analyze", "--task", "binder", &names[0], "q.csv"], d);
    assert_eq!(code(&o), 3);
    assert!(stderr(&o).contains("mix"));
}
