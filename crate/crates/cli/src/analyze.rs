//! Post-processing of series files written by grid runs.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use z2perc::analysis::{
    autocorrelation, binder, collapse_fit, crossing_points, mean_estimate, Ansatz, CollapseFit, CrossingReport, Curve,
    CurvePoint, Interpolation,
};

use crate::error::{CliError, Result};
use crate::snapshot::hex;

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Binder,
    Cross,
    Collapse,
    Autocorr,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum AnsatzName {
    Binder,
    Strength,
}

#[derive(Clone, Debug)]
pub struct AnalyzeOptions {
    pub task: Task,
    /// Column used for `autocorr` and the strength collapse.
    pub observable: String,
    /// Column that varies along each curve; guessed when `None`.
    pub control: Option<String>,
    pub ansatz: AnsatzName,
    pub window: Option<(f64, f64)>,
    pub seed: u64,
}

/// One series file reduced to what the tasks need.
#[derive(Clone, Debug)]
pub struct Series {
    pub path: PathBuf,
    pub sha256: String,
    pub manifest_hash: String,
    pub module: String,
    pub columns: BTreeMap<String, Vec<String>>,
}

impl Series {
    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| CliError::Validation(format!("cannot read {}: {e}", path.display())))?;
        let mut r = csv::Reader::from_reader(bytes.as_slice());
        let headers: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
        let mut columns: BTreeMap<String, Vec<String>> = headers.iter().map(|h| (h.clone(), Vec::new())).collect();
        for rec in r.records() {
            let rec = rec?;
            for (h, v) in headers.iter().zip(rec.iter()) {
                columns.get_mut(h).unwrap().push(v.to_string());
            }
        }
        let first = |name: &str| -> Result<String> {
            columns
                .get(name)
                .and_then(|c| c.first().cloned())
                .ok_or_else(|| CliError::Validation(format!("{}: not a series file (no `{name}`)", path.display())))
        };
        Ok(Self {
            path: path.to_path_buf(),
            sha256: hex(&Sha256::digest(&bytes)),
            manifest_hash: first("manifest_hash")?,
            module: first("module")?,
            columns: columns.clone(),
        })
    }

    pub fn column(&self, name: &str) -> Result<Vec<f64>> {
        let col = self
            .columns
            .get(name)
            .ok_or_else(|| CliError::Validation(format!("{}: no column `{name}`", self.path.display())))?;
        col.iter()
            .map(|v| {
                v.parse::<f64>()
                    .map_err(|_| CliError::Validation(format!("{}: `{name}` has non-numeric value {v:?}", self.path.display())))
            })
            .collect()
    }

    fn scalar(&self, name: &str) -> Result<f64> {
        let c = self.column(name)?;
        let v = *c
            .first()
            .ok_or_else(|| CliError::Validation(format!("{}: empty series", self.path.display())))?;
        if c.iter().any(|&x| x != v) {
            return Err(CliError::Validation(format!("{}: `{name}` is not constant", self.path.display())));
        }
        Ok(v)
    }

    pub fn size(&self) -> Result<usize> {
        Ok(self.scalar("L")? as usize)
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Input {
    pub path: String,
    pub sha256: String,
    pub manifest_hash: String,
}

#[derive(Clone, Debug, Serialize)]
pub struct BinderRow {
    pub path: String,
    pub size: usize,
    pub control: f64,
    pub binder: Option<f64>,
    pub error: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct AutocorrRow {
    pub path: String,
    pub observable: String,
    pub mean: f64,
    pub error: f64,
    pub tau_int: f64,
}

#[derive(Clone, Debug, Serialize)]
#[serde(untagged)]
pub enum Outcome {
    Binder(Vec<BinderRow>),
    Cross(CrossingReport),
    Collapse(CollapseFit),
    Autocorr(Vec<AutocorrRow>),
}

#[derive(Clone, Debug, Serialize)]
pub struct Report {
    pub task: Task,
    pub control: Option<String>,
    pub observable: String,
    pub result: Outcome,
    pub inputs: Vec<Input>,
}

fn guess_control(series: &[Series]) -> Result<String> {
    let candidates = ["t_over_h", "h", "lambda", "beta", "mu", "particles"];
    let mut varying = Vec::new();
    for c in candidates {
        let mut vals: Vec<f64> = Vec::new();
        for s in series {
            if let Ok(v) = s.scalar(c) {
                vals.push(v);
            }
        }
        if vals.len() == series.len() && vals.iter().any(|&v| v != vals[0]) {
            varying.push(c);
        }
    }
    match varying.as_slice() {
        [one] => Ok(one.to_string()),
        [] => Err(CliError::Validation("no control parameter varies across the inputs".into())),
        many => Err(CliError::Validation(format!("several parameters vary ({}); pass --control", many.join(", ")))),
    }
}

/// Per-size curves of `y(series)` against the control column.
fn curves(series: &[Series], control: &str, y: impl Fn(&Series) -> Result<Option<(f64, f64)>>) -> Result<Vec<Curve>> {
    let mut by_size: BTreeMap<usize, Vec<CurvePoint>> = BTreeMap::new();
    for s in series {
        if let Some((v, e)) = y(s)? {
            by_size.entry(s.size()?).or_default().push(CurvePoint {
                x: s.scalar(control)?,
                y: v,
                error: e,
            });
        }
    }
    let mut out = Vec::new();
    for (size, mut points) in by_size {
        points.sort_by(|a, b| a.x.total_cmp(&b.x));
        if points.windows(2).any(|w| w[0].x == w[1].x) {
            return Err(CliError::Validation(format!("two inputs share L={size} and the same {control}")));
        }
        out.push(Curve { size, points });
    }
    Ok(out)
}

fn binder_point(s: &Series) -> Result<Option<(f64, f64)>> {
    let b = binder(&s.column("strength")?);
    Ok(b.value.map(|v| (v, b.error)))
}

pub fn analyze(paths: &[PathBuf], opts: &AnalyzeOptions) -> Result<Report> {
    if paths.is_empty() {
        return Err(CliError::Usage("analyze needs at least one series file".into()));
    }
    let series = paths.iter().map(|p| Series::load(p)).collect::<Result<Vec<_>>>()?;
    if series.iter().any(|s| s.module != series[0].module) {
        return Err(CliError::Validation("inputs mix classical and quantum series".into()));
    }
    if series.iter().any(|s| s.columns.get("basis").map(|c| c.first()) != series[0].columns.get("basis").map(|c| c.first())) {
        return Err(CliError::Validation("inputs mix X- and Z-basis series".into()));
    }
    let control = match (opts.task, &opts.control) {
        (Task::Autocorr, c) => c.clone(),
        (_, Some(c)) => Some(c.clone()),
        (_, None) if series.len() > 1 => Some(guess_control(&series)?),
        (_, None) => None,
    };
    let result = match opts.task {
        Task::Autocorr => Outcome::Autocorr(
            series
                .iter()
                .map(|s| {
                    let xs = s.column(&opts.observable)?;
                    let a = autocorrelation(&xs)?;
                    let m = mean_estimate(&xs);
                    Ok(AutocorrRow {
                        path: s.path.display().to_string(),
                        observable: opts.observable.clone(),
                        mean: m.value,
                        error: m.error,
                        tau_int: a.tau_int,
                    })
                })
                .collect::<Result<Vec<_>>>()?,
        ),
        Task::Binder => Outcome::Binder(
            series
                .iter()
                .map(|s| {
                    let b = binder(&s.column("strength")?);
                    Ok(BinderRow {
                        path: s.path.display().to_string(),
                        size: s.size()?,
                        control: match &control {
                            Some(c) => s.scalar(c)?,
                            None => f64::NAN,
                        },
                        binder: b.value,
                        error: b.error,
                    })
                })
                .collect::<Result<Vec<_>>>()?,
        ),
        Task::Cross => {
            let c = control.as_deref().ok_or_else(|| CliError::Validation("crossings need several inputs".into()))?;
            Outcome::Cross(crossing_points(&curves(&series, c, binder_point)?, Interpolation::Linear, 200, opts.seed)?)
        }
        Task::Collapse => {
            let c = control.as_deref().ok_or_else(|| CliError::Validation("a collapse needs several inputs".into()))?;
            let (ansatz, cs) = match opts.ansatz {
                AnsatzName::Binder => (Ansatz::Binder, curves(&series, c, binder_point)?),
                AnsatzName::Strength => (
                    Ansatz::Strength,
                    curves(&series, c, |s| {
                        let m = mean_estimate(&s.column(&opts.observable)?);
                        Ok(Some((m.value, m.error)))
                    })?,
                ),
            };
            Outcome::Collapse(collapse_fit(&cs, ansatz, opts.window)?)
        }
    };
    Ok(Report {
        task: opts.task,
        control,
        observable: opts.observable.clone(),
        result,
        inputs: series
            .iter()
            .map(|s| Input {
                path: s.path.display().to_string(),
                sha256: s.sha256.clone(),
                manifest_hash: s.manifest_hash.clone(),
            })
            .collect(),
    })
}
