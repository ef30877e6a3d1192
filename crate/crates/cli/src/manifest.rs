//! Run manifests (TOML).
//!
//! ```toml
//! id = "classical-2d"
//! module = "classical"          # classical | qmc | ed
//! seed = 1
//!
//! [output]
//! dir = "out/classical-2d"      # optional; --out and Z2PERC_OUT win
//!
//! [classical]
//! dim = 2
//! sizes = [16, 24, 32]
//! t_over_h = [2.1, 2.2, 2.3]
//! ensemble = "canonical"        # canonical | grand
//! particles = [0]               # canonical: N, or
//! densities = []                # canonical: matter density (N rounded to even)
//! mu = []                       # grand: chemical potentials
//! n_samples = 2000
//! thermalization_sweeps = 200   # optional, sweeps of L^D updates
//! stride_sweeps = 2             # optional
//!
//! [qmc]
//! basis = "x"                   # x | z
//! sizes = [8]
//! h = [0.2]
//! lambda = [0.0, 0.1]
//! temperatures = []             # empty: T = 1/L
//! n_samples = 1000
//!
//! [ed]
//! sizes = [2]
//! h = [0.3]
//! lambda = [0.3]
//! beta = [4.0]
//! ```
//!
//! The canonical form is the manifest re-serialized with `code_version`
//! filled in; its SHA-256 tags every output.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use z2perc::classical::{Ensemble, RunParamsClassical};
use z2perc::Basis;
use z2qmc::{Couplings, QmcParams};

use crate::error::{CliError, Result};

pub const CODE_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Module {
    Classical,
    Qmc,
    Ed,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Output {
    pub dir: Option<String>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EnsembleKind {
    Canonical,
    Grand,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassicalGrid {
    pub dim: usize,
    pub sizes: Vec<usize>,
    pub t_over_h: Vec<f64>,
    pub ensemble: EnsembleKind,
    #[serde(default)]
    pub particles: Vec<usize>,
    #[serde(default)]
    pub densities: Vec<f64>,
    #[serde(default)]
    pub mu: Vec<f64>,
    #[serde(default = "one")]
    pub h: f64,
    pub n_samples: usize,
    pub thermalization_sweeps: Option<u64>,
    pub stride_sweeps: Option<u64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BasisName {
    X,
    Z,
}

impl From<BasisName> for Basis {
    fn from(b: BasisName) -> Self {
        match b {
            BasisName::X => Basis::X,
            BasisName::Z => Basis::Z,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QmcGrid {
    pub basis: BasisName,
    pub sizes: Vec<usize>,
    pub h: Vec<f64>,
    pub lambda: Vec<f64>,
    #[serde(default)]
    pub temperatures: Vec<f64>,
    #[serde(default = "one")]
    pub mu: f64,
    #[serde(default = "one")]
    pub j: f64,
    pub n_samples: usize,
    pub thermalization: Option<u64>,
    pub stride: Option<u64>,
    pub pair_window: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EdGrid {
    pub sizes: Vec<usize>,
    pub h: Vec<f64>,
    pub lambda: Vec<f64>,
    pub beta: Vec<f64>,
    #[serde(default = "one")]
    pub mu: f64,
    #[serde(default = "one")]
    pub j: f64,
}

fn one() -> f64 {
    1.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub id: String,
    pub module: Module,
    pub seed: u64,
    pub code_version: Option<String>,
    #[serde(default)]
    pub output: Output,
    pub classical: Option<ClassicalGrid>,
    pub qmc: Option<QmcGrid>,
    pub ed: Option<EdGrid>,
}

/// One point of a grid.
#[derive(Clone, Debug, PartialEq)]
pub enum Point {
    Classical(RunParamsClassical),
    Qmc(QmcParams),
    Ed { size: usize, couplings: Couplings, beta: f64 },
}

fn invalid(m: impl Into<String>) -> CliError {
    CliError::Validation(m.into())
}

fn nonempty<T>(name: &str, v: &[T]) -> Result<()> {
    if v.is_empty() {
        return Err(invalid(format!("grid axis `{name}` is empty")));
    }
    Ok(())
}

impl Manifest {
    pub fn parse(text: &str) -> Result<Self> {
        let m: Manifest = toml::from_str(text).map_err(|e| invalid(format!("manifest: {e}")))?;
        m.validate()?;
        Ok(m)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Validation(format!("cannot read manifest {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn validate(&self) -> Result<()> {
        let section = match self.module {
            Module::Classical => self.classical.is_some(),
            Module::Qmc => self.qmc.is_some(),
            Module::Ed => self.ed.is_some(),
        };
        if !section {
            return Err(invalid(format!("module {:?} needs its own section", self.module)));
        }
        // Parameter checks happen when the points are built.
        self.points().map(|_| ())
    }

    pub fn canonical(&self) -> String {
        let mut m = self.clone();
        m.code_version = Some(CODE_VERSION.to_string());
        toml::to_string(&m).expect("manifest serializes")
    }

    pub fn hash(&self) -> [u8; 32] {
        Sha256::digest(self.canonical().as_bytes()).into()
    }

    /// Grid points in output order, each with its own chain index.
    pub fn points(&self) -> Result<Vec<Point>> {
        let mut out = Vec::new();
        match self.module {
            Module::Classical => {
                let g = self.classical.as_ref().expect("validated");
                nonempty("sizes", &g.sizes)?;
                nonempty("t_over_h", &g.t_over_h)?;
                if !(2..=3).contains(&g.dim) {
                    return Err(invalid(format!("dim must be 2 or 3, got {}", g.dim)));
                }
                let mut fills: Vec<Box<dyn Fn(usize) -> Ensemble>> = Vec::new();
                match g.ensemble {
                    EnsembleKind::Canonical => {
                        if g.particles.is_empty() == g.densities.is_empty() {
                            return Err(invalid("canonical grid needs exactly one of `particles`, `densities`"));
                        }
                        for &n in &g.particles {
                            fills.push(Box::new(move |_| Ensemble::Canonical { n }));
                        }
                        for &d in &g.densities {
                            if !(0.0..=1.0).contains(&d) {
                                return Err(invalid(format!("density {d} outside [0, 1]")));
                            }
                            fills.push(Box::new(move |sites| Ensemble::Canonical {
                                n: 2 * ((d * sites as f64) / 2.0).round() as usize,
                            }));
                        }
                    }
                    EnsembleKind::Grand => {
                        nonempty("mu", &g.mu)?;
                        for &mu in &g.mu {
                            fills.push(Box::new(move |_| Ensemble::GrandCanonical { mu }));
                        }
                    }
                }
                for &l in &g.sizes {
                    for fill in &fills {
                        for &t in &g.t_over_h {
                            let sites = l.checked_pow(g.dim as u32).unwrap_or(usize::MAX);
                            let mut p = RunParamsClassical::new(fill(sites), g.dim, l, t, g.n_samples);
                            p.h = g.h;
                            let volume = sites as u64;
                            if let Some(s) = g.thermalization_sweeps {
                                p.thermalization = s * volume;
                            }
                            if let Some(s) = g.stride_sweeps {
                                p.stride = s * volume;
                            }
                            p.seed = self.seed;
                            p.stream = out.len() as u64;
                            p.validate()?;
                            out.push(Point::Classical(p));
                        }
                    }
                }
            }
            Module::Qmc => {
                let g = self.qmc.as_ref().expect("validated");
                nonempty("sizes", &g.sizes)?;
                nonempty("h", &g.h)?;
                nonempty("lambda", &g.lambda)?;
                for &l in &g.sizes {
                    for &h in &g.h {
                        for &lambda in &g.lambda {
                            let temps = if g.temperatures.is_empty() { vec![1.0 / l as f64] } else { g.temperatures.clone() };
                            for t in temps {
                                let mut p = QmcParams::ground_state(l, h, lambda, g.basis.into());
                                p.couplings = Couplings { mu: g.mu, j: g.j, h, lambda };
                                p.beta = 1.0 / t;
                                p.n_samples = g.n_samples;
                                if let Some(v) = g.thermalization {
                                    p.thermalization = v;
                                }
                                if let Some(v) = g.stride {
                                    p.stride = v;
                                }
                                if let Some(v) = g.pair_window {
                                    p.pair_window = v;
                                }
                                p.seed = self.seed;
                                p.stream = out.len() as u64;
                                p.validate()?;
                                out.push(Point::Qmc(p));
                            }
                        }
                    }
                }
            }
            Module::Ed => {
                let g = self.ed.as_ref().expect("validated");
                nonempty("sizes", &g.sizes)?;
                nonempty("h", &g.h)?;
                nonempty("lambda", &g.lambda)?;
                nonempty("beta", &g.beta)?;
                for &size in &g.sizes {
                    for &h in &g.h {
                        for &lambda in &g.lambda {
                            for &beta in &g.beta {
                                out.push(Point::Ed {
                                    size,
                                    couplings: Couplings { mu: g.mu, j: g.j, h, lambda },
                                    beta,
                                });
                            }
                        }
                    }
                }
            }
        }
        Ok(out)
    }

    /// Replace the master seed; points derive their chain seeds from it.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }
}
