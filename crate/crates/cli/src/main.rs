use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use thiserror::Error;

use sparse_polar::graph::{ramanujan_bound, spectral_gap};
use sparse_polar::harness::{
    run_sweep, run_trial, sample_signal, write_sweep, ExperimentConfig, HarnessError,
};
use sparse_polar::linalg::CVector;
use sparse_polar::measurement::{
    design_measurements, intensity_measure, IntensityData, MeasurementSystem, NoiseSpec,
};
use sparse_polar::ppp::run_ppp;
use sparse_polar::rng::trial_seed;
use sparse_polar::sparse_recovery::{check_errip, errip_scale, solve_bpdn, BpdnProblem, RipMode};

#[derive(Parser)]
#[command(
    version,
    about = "Sparse phase retrieval experiments from polarized intensity measurements"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a measurement system (graph and vertex vectors).
    Design(Common),
    /// Simulate intensities of a sampled (or given) signal.
    Measure {
        #[command(flatten)]
        common: Common,
        /// Measurement system JSON from `design`.
        #[arg(long)]
        system: PathBuf,
        /// Signal as a JSON list of [re, im] pairs; sampled from the seed if absent.
        #[arg(long)]
        signal: Option<PathBuf>,
    },
    /// Run phase recovery and l1 minimization on existing files.
    Recover {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        system: PathBuf,
        #[arg(long)]
        intensities: PathBuf,
        /// Noise bound handed to the l1 solver, before the erasure scaling.
        #[arg(long, default_value_t = 0.0)]
        e_bound: f64,
    },
    /// Run a single end-to-end trial.
    Trial {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 0)]
        index: usize,
    },
    /// Run every trial of the configuration, across the sweep axis if any.
    Sweep(Common),
    /// Estimate the (erasure-robust) restricted isometry constant of the
    /// scaled vertex measurement matrix.
    CheckRip {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        system: PathBuf,
        #[arg(long, default_value_t = 0.0)]
        erasure: f64,
        #[arg(long, value_enum, default_value_t = Mode::Sampled)]
        mode: Mode,
        #[arg(long, default_value_t = 1000)]
        samples: usize,
    },
    /// Report the spectral gap of a design and whether the pruning
    /// parameters are admissible for it.
    CheckGap {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        system: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Exhaustive,
    Sampled,
}

#[derive(Args, Clone)]
struct Common {
    /// JSON experiment configuration; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, default_value = ".")]
    out: PathBuf,
    #[arg(long)]
    m: Option<usize>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    n_vertices: Option<usize>,
    #[arg(long)]
    d: Option<usize>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    snr: Option<f64>,
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long)]
    r_sv: Option<f64>,
    #[arg(long)]
    r_lv: Option<f64>,
    #[arg(long)]
    permissive: bool,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Debug, Error)]
enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Run(String),
    #[error("{failed} of {total} trials failed, above the allowed ratio {allowed}")]
    TooManyFailures {
        failed: usize,
        total: usize,
        allowed: f64,
    },
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Run(_) => 1,
            CliError::TooManyFailures { .. } => 3,
        }
    }
}

impl From<HarnessError> for CliError {
    fn from(e: HarnessError) -> Self {
        match e {
            HarnessError::Config(msg) => CliError::Config(msg),
            other => CliError::Run(other.to_string()),
        }
    }
}

fn run_err<E: std::fmt::Display>(e: E) -> CliError {
    CliError::Run(e.to_string())
}

impl Common {
    fn config(&self) -> Result<ExperimentConfig, CliError> {
        let mut cfg = match &self.config {
            Some(path) => {
                let text = fs::read_to_string(path).map_err(|e| {
                    CliError::Config(format!("cannot read {}: {e}", path.display()))
                })?;
                serde_json::from_str(&text)
                    .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?
            }
            None => ExperimentConfig::default(),
        };
        macro_rules! set {
            ($field:ident => $target:expr) => {
                if let Some(v) = self.$field {
                    $target = v;
                }
            };
        }
        set!(m => cfg.m);
        set!(k => cfg.k);
        set!(n_vertices => cfg.n_vertices);
        set!(epsilon => cfg.epsilon);
        set!(tau => cfg.ppp.tau);
        set!(r_sv => cfg.ppp.r_sv);
        set!(r_lv => cfg.ppp.r_lv);
        set!(trials => cfg.trials);
        set!(seed => cfg.master_seed);
        if self.d.is_some() {
            cfg.d = self.d;
        }
        if let Some(snr) = self.snr {
            cfg.noise = NoiseSpec::Snr { snr };
        }
        if self.workers.is_some() {
            cfg.workers = self.workers;
        }
        cfg.ppp.permissive |= self.permissive;
        cfg.validate()?;
        Ok(cfg)
    }
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Run(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Run(format!("{}: {e}", path.display())))
}

fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(run_err)?;
    let path = dir.join(name);
    let text = serde_json::to_string_pretty(value).map_err(run_err)?;
    fs::write(&path, text + "\n").map_err(run_err)?;
    log::info!("wrote {}", path.display());
    Ok(())
}

#[derive(Serialize)]
struct GapReport {
    n_vertices: usize,
    degree: Option<usize>,
    lambda2: f64,
    connected: bool,
    ramanujan_bound: Option<f64>,
    removal_bound: f64,
    tau: f64,
    mu: f64,
    admissible: bool,
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Design(common) => {
            let cfg = common.config()?;
            let (sys, cert) = design_measurements(
                cfg.m,
                cfg.n_vertices,
                cfg.degree(),
                cfg.epsilon,
                cfg.master_seed,
            )
            .map_err(run_err)?;
            write_json(&common.out, "system.json", &sys)?;
            write_json(&common.out, "gap.json", &cert)?;
        }
        Command::Measure {
            common,
            system,
            signal,
        } => {
            let cfg = common.config()?;
            let sys: MeasurementSystem = read_json(&system)?;
            let x: CVector = match signal {
                Some(path) => read_json(&path)?,
                None => sample_signal(sys.ambient_dim(), cfg.k, trial_seed(cfg.master_seed, 0)),
            };
            let data = intensity_measure(&sys, &x, &cfg.noise, cfg.master_seed).map_err(run_err)?;
            write_json(&common.out, "signal.json", &x)?;
            write_json(&common.out, "intensities.json", &data)?;
        }
        Command::Recover {
            common,
            system,
            intensities,
            e_bound,
        } => {
            let cfg = common.config()?;
            let sys: MeasurementSystem = read_json(&system)?;
            let data: IntensityData = read_json(&intensities)?;
            let gap = spectral_gap(sys.graph()).map_err(run_err)?;
            let out = run_ppp(&sys, &data, &cfg.ppp.params(gap.lambda2)).map_err(run_err)?;
            let a = sys.vertex_adjoint_matrix(&out.vertices);
            let y = CVector::new(out.estimates.clone()).map_err(run_err)?;
            let scale = errip_scale(sys.graph().vertex_count(), sys.ambient_dim(), cfg.ppp.tau)
                .map_err(run_err)?;
            let problem = BpdnProblem::new(a, y, e_bound)
                .map_err(run_err)?
                .scaled(scale);
            let sol = solve_bpdn(&problem).map_err(run_err)?;
            write_json(&common.out, "ppp.json", &out)?;
            write_json(&common.out, "estimate.json", &sol.x)?;
        }
        Command::Trial { common, index } => {
            let cfg = common.config()?;
            if cfg.sweep.is_some() {
                return Err(CliError::Config(
                    "`trial` runs a single configuration; remove the sweep axis".into(),
                ));
            }
            let detail = run_trial(&cfg, index);
            write_json(&common.out, "trial.json", &detail)?;
            println!(
                "{}",
                serde_json::to_string(&detail.record).map_err(run_err)?
            );
        }
        Command::Sweep(common) => {
            let cfg = common.config()?;
            let result = run_sweep(&cfg)?;
            write_sweep(&common.out, "sweep", &cfg, &result)?;
            for a in &result.aggregates {
                println!("{}", serde_json::to_string(a).map_err(run_err)?);
            }
            if result.failure_ratio() > cfg.max_failure_ratio {
                return Err(CliError::TooManyFailures {
                    failed: result.failures(),
                    total: result.records.len(),
                    allowed: cfg.max_failure_ratio,
                });
            }
        }
        Command::CheckRip {
            common,
            system,
            erasure,
            mode,
            samples,
        } => {
            let cfg = common.config()?;
            let sys: MeasurementSystem = read_json(&system)?;
            let n = sys.graph().vertex_count();
            let ids: Vec<usize> = (0..n).collect();
            let scale = errip_scale(n, sys.ambient_dim(), erasure).map_err(run_err)?;
            let a = sys.vertex_adjoint_matrix(&ids).scale(scale);
            let mode = match mode {
                Mode::Exhaustive => RipMode::Exhaustive,
                Mode::Sampled => RipMode::Sampled,
            };
            let report =
                check_errip(&a, cfg.k, erasure, mode, samples, cfg.master_seed).map_err(run_err)?;
            println!("{}", serde_json::to_string(&report).map_err(run_err)?);
            write_json(&common.out, "rip.json", &report)?;
        }
        Command::CheckGap { common, system } => {
            let cfg = common.config()?;
            let (graph, degree) = match system {
                Some(path) => {
                    let sys: MeasurementSystem = read_json(&path)?;
                    (sys.graph().clone(), None)
                }
                None => {
                    let (sys, _) = design_measurements(
                        cfg.m,
                        cfg.n_vertices,
                        cfg.degree(),
                        cfg.epsilon,
                        cfg.master_seed,
                    )
                    .map_err(run_err)?;
                    (sys.graph().clone(), Some(cfg.degree()))
                }
            };
            let gap = spectral_gap(&graph).map_err(run_err)?;
            let params = cfg.ppp.params(gap.lambda2);
            let report = GapReport {
                n_vertices: graph.vertex_count(),
                degree,
                lambda2: gap.lambda2,
                connected: gap.connected,
                ramanujan_bound: degree.map(|d| ramanujan_bound(d, cfg.epsilon)),
                removal_bound: params.removal_bound(),
                tau: params.tau,
                mu: params.mu(),
                admissible: params.slack() > 0.0,
            };
            println!("{}", serde_json::to_string(&report).map_err(run_err)?);
            write_json(&common.out, "gap.json", &report)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
