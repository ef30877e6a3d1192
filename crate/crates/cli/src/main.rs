use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use z2cli::analyze::{analyze, AnalyzeOptions, AnsatzName, Task};
use z2cli::manifest::{EdGrid, Module};
use z2cli::percolate::{percolate, write_rows, Format};
use z2cli::run::{ed_table, run_manifest, RunOptions};
use z2cli::{CliError, Manifest, Result, SnapshotFile};

/// Z2 lattice gauge theory: classical and quantum Monte Carlo, exact
/// diagonalization and string percolation.
#[derive(Parser, Debug)]
#[command(name = "z2perc", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Classical Monte Carlo over a manifest grid.
    Classical(GridArgs),
    /// Continuous-time QMC over a manifest grid.
    Qmc(GridArgs),
    /// Percolation report for every snapshot in a file.
    Percolate {
        file: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "csv")]
        format: Format,
    },
    /// Binder cumulants, crossings, scaling collapse or autocorrelation of
    /// series files.
    Analyze {
        #[arg(long, value_enum)]
        task: Task,
        files: Vec<PathBuf>,
        #[arg(long, default_value = "strength")]
        observable: String,
        /// Parameter along each curve (default: the one that varies).
        #[arg(long)]
        control: Option<String>,
        #[arg(long, value_enum, default_value = "binder")]
        ansatz: AnsatzName,
        /// Fit window in the control parameter, `LO,HI`.
        #[arg(long, value_parser = parse_window)]
        window: Option<(f64, f64)>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Exact diagonalization (L <= 3), from flags or an `ed` manifest.
    Ed {
        #[arg(long)]
        manifest: Option<PathBuf>,
        #[arg(long, default_value_t = 2)]
        size: usize,
        #[arg(long, default_value_t = 0.0)]
        h: f64,
        #[arg(long, default_value_t = 0.0)]
        lambda: f64,
        #[arg(long, default_value_t = 1.0)]
        mu: f64,
        #[arg(long, default_value_t = 1.0)]
        j: f64,
        #[arg(long, default_value_t = 1.0)]
        beta: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args, Debug)]
struct GridArgs {
    #[arg(long)]
    manifest: PathBuf,
    /// Output directory; overrides Z2PERC_OUT and the manifest.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads; overrides Z2PERC_WORKERS.
    #[arg(long)]
    workers: Option<usize>,
    /// Master seed, replacing the manifest's.
    #[arg(long)]
    seed: Option<u64>,
    /// Write snapshot files.
    #[arg(long)]
    snapshots: bool,
    /// Keep every K-th sample in the snapshot files.
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(usize))]
    slice_every: usize,
}

fn parse_window(s: &str) -> std::result::Result<(f64, f64), String> {
    let (a, b) = s.split_once(',').ok_or("expected LO,HI")?;
    let a: f64 = a.trim().parse().map_err(|e| format!("{e}"))?;
    let b: f64 = b.trim().parse().map_err(|e| format!("{e}"))?;
    if a >= b {
        return Err("LO must be below HI".into());
    }
    Ok((a, b))
}

fn out_dir(flag: Option<PathBuf>, manifest: &Manifest) -> PathBuf {
    flag.or_else(|| std::env::var_os("Z2PERC_OUT").map(PathBuf::from))
        .or_else(|| manifest.output.dir.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("out").join(&manifest.id))
}

fn workers(flag: Option<usize>) -> Result<usize> {
    if let Some(n) = flag {
        return Ok(n);
    }
    match std::env::var("Z2PERC_WORKERS") {
        Ok(v) => v
            .parse()
            .map_err(|_| CliError::Usage(format!("Z2PERC_WORKERS must be a positive integer, got {v:?}"))),
        Err(_) => Ok(std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)),
    }
}

fn grid(args: GridArgs, module: Module) -> Result<()> {
    let mut m = Manifest::load(&args.manifest)?;
    if m.module != module {
        return Err(CliError::Validation(format!("manifest is for module {:?}, not {module:?}", m.module)));
    }
    if let Some(s) = args.seed {
        m = m.with_seed(s);
    }
    if args.slice_every == 0 {
        return Err(CliError::Usage("--slice-every must be at least 1".into()));
    }
    let opts = RunOptions {
        out: out_dir(args.out, &m),
        workers: workers(args.workers)?,
        snapshots: args.snapshots,
        slice_every: args.slice_every,
    };
    run_manifest(&m, &opts)?;
    eprintln!("wrote {}", opts.out.display());
    Ok(())
}

fn sink(out: Option<PathBuf>, name: &str) -> Result<Box<dyn Write>> {
    Ok(match out {
        Some(dir) => {
            std::fs::create_dir_all(&dir)?;
            Box::new(std::fs::File::create(dir.join(name))?)
        }
        None => Box::new(std::io::stdout().lock()),
    })
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Classical(a) => grid(a, Module::Classical),
        Command::Qmc(a) => grid(a, Module::Qmc),
        Command::Percolate { file, out, format } => {
            let f = SnapshotFile::load(&file)?;
            let rows = percolate(&f)?;
            let ext = match format {
                Format::Csv => "csv",
                Format::Jsonl => "jsonl",
            };
            let mut w = sink(out, &format!("percolation.{ext}"))?;
            write_rows(&rows, format, &mut w)
        }
        Command::Analyze {
            task,
            files,
            observable,
            control,
            ansatz,
            window,
            seed,
            out,
        } => {
            let report = analyze(
                &files,
                &AnalyzeOptions {
                    task,
                    observable,
                    control,
                    ansatz,
                    window,
                    seed,
                },
            )?;
            let mut w = sink(out, "analysis.jsonl")?;
            serde_json::to_writer(&mut w, &report)?;
            w.write_all(b"\n")?;
            Ok(())
        }
        Command::Ed {
            manifest,
            size,
            h,
            lambda,
            mu,
            j,
            beta,
            out,
        } => {
            let m = match manifest {
                Some(p) => Manifest::load(&p)?,
                None => Manifest {
                    id: "ed".into(),
                    module: Module::Ed,
                    seed: 0,
                    code_version: None,
                    output: Default::default(),
                    classical: None,
                    qmc: None,
                    ed: Some(EdGrid {
                        sizes: vec![size],
                        h: vec![h],
                        lambda: vec![lambda],
                        beta: vec![beta],
                        mu,
                        j,
                    }),
                },
            };
            if m.module != Module::Ed {
                return Err(CliError::Validation("manifest is not an ed manifest".into()));
            }
            m.validate()?;
            match out {
                Some(dir) => {
                    let opts = RunOptions {
                        out: dir.clone(),
                        workers: 1,
                        snapshots: false,
                        slice_every: 1,
                    };
                    run_manifest(&m, &opts)?;
                    print!("{}", std::fs::read_to_string(dir.join("summary.csv"))?);
                }
                None => print!("{}", ed_table(&m)?),
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
