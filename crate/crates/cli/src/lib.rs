//! Command-line front end for the `nfloc` experiments.

pub mod config;

use std::ffi::OsString;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde_json::json;
use sha2::{Digest, Sha256};

use nfloc::bounds::bounds;
use nfloc::error::Error as CoreError;
use nfloc::harness::{
    convergence_trace, format_float, run_sweep, write_sweep_csv, write_trace_csv, Experiment,
    ExperimentConfig, StageKind, StageTiming, SweepAxis,
};

use config::{parse_file, parse_str, ConfigError, FileConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INVALID: i32 = 1;
pub const EXIT_RUNTIME: i32 = 2;

#[derive(Debug, Parser)]
#[command(
    name = "nfloc",
    version,
    about = "Near-field RIS-aided position and velocity localization experiments"
)]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct GlobalArgs {
    /// TOML configuration file; standard defaults apply to absent keys
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Output CSV path (stdout when absent); run metadata goes to <PATH>.meta.jsonl
    #[arg(long, global = true, value_name = "PATH")]
    pub out: Option<PathBuf>,
    /// Master seed, overriding sweep.seed
    #[arg(long, global = true, value_name = "U64")]
    pub seed: Option<u64>,
    /// Trials per sweep point, overriding sweep.trials
    #[arg(long, global = true, value_name = "N")]
    pub trials: Option<usize>,
    /// Worker threads (all available cores when absent)
    #[arg(long, global = true, value_name = "N")]
    pub threads: Option<usize>,
    /// Configuration override, as key=value or section.key=value (repeatable)
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
}

#[derive(Debug, Clone, Subcommand)]
pub enum Command {
    /// RMSE and error bounds against the RIS-UE distance
    SweepDistance,
    /// RMSE and error bounds against the UE speed
    SweepVelocity,
    /// RMSE against the Rician factor of the multipath channel
    SweepMultipath,
    /// RMSE against a gain offset in dB
    SweepSnr,
    /// Per-iteration objective of the initialization and outer loops
    Convergence,
    /// Position and velocity error bounds at one UE state
    Bounds {
        /// RIS-UE distance in m (scenario.rho when absent)
        #[arg(long, value_name = "M")]
        rho: Option<f64>,
        /// UE speed in m/s (scenario.speed when absent)
        #[arg(long, value_name = "MPS")]
        v: Option<f64>,
    },
    /// One run of the full estimator at scenario.rho
    SingleTrial {
        /// Disable measurement noise
        #[arg(long)]
        no_noise: bool,
    },
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::SweepDistance => "sweep-distance",
            Command::SweepVelocity => "sweep-velocity",
            Command::SweepMultipath => "sweep-multipath",
            Command::SweepSnr => "sweep-snr",
            Command::Convergence => "convergence",
            Command::Bounds { .. } => "bounds",
            Command::SingleTrial { .. } => "single-trial",
        }
    }

    fn axis(&self) -> SweepAxis {
        match self {
            Command::SweepVelocity => SweepAxis::Speed,
            Command::SweepMultipath => SweepAxis::RicianK,
            Command::SweepSnr => SweepAxis::SnrOffset,
            _ => SweepAxis::Distance,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Invalid(_) => EXIT_INVALID,
            CliError::Runtime(_) => EXIT_RUNTIME,
        }
    }
}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        match e {
            CoreError::InvalidInput(msg) => CliError::Invalid(msg),
            other => CliError::Runtime(other.to_string()),
        }
    }
}

fn io_error(path: &Path, e: std::io::Error) -> CliError {
    CliError::Runtime(format!("{}: {e}", path.display()))
}

/// Loads the configuration file (or defaults) with overrides applied.
pub fn load_config(global: &GlobalArgs) -> Result<FileConfig, CliError> {
    let mut config = match &global.config {
        Some(path) => parse_file(path, &global.overrides)?,
        None => parse_str("", "defaults", &global.overrides)?,
    };
    if let Some(seed) = global.seed {
        config.sweep.seed = Some(seed);
    }
    if let Some(trials) = global.trials {
        config.sweep.trials = Some(trials);
    }
    Ok(config)
}

/// Hex SHA-256 of the resolved configuration.
pub fn config_hash(config: &ExperimentConfig) -> String {
    let text = serde_json::to_string(config).expect("configuration serializes");
    format!("{:x}", Sha256::digest(text.as_bytes()))
}

fn timing_json(t: &StageTiming) -> serde_json::Value {
    json!({
        "grid_s": t.grid.as_secs_f64(),
        "ref_vel_s": t.ref_vel.as_secs_f64(),
        "ref_pos_s": t.ref_pos.as_secs_f64(),
        "outer_s": t.outer.as_secs_f64(),
        "descent_s": t.descent.as_secs_f64(),
    })
}

struct Output {
    path: Option<PathBuf>,
    writer: Box<dyn Write>,
}

impl Output {
    fn open(path: Option<&Path>) -> Result<Self, CliError> {
        let writer: Box<dyn Write> = match path {
            Some(p) => Box::new(BufWriter::new(File::create(p).map_err(|e| io_error(p, e))?)),
            None => Box::new(std::io::stdout().lock()),
        };
        Ok(Self {
            path: path.map(Path::to_path_buf),
            writer,
        })
    }

    fn finish(mut self) -> Result<(), CliError> {
        self.writer.flush().map_err(|e| match &self.path {
            Some(p) => io_error(p, e),
            None => CliError::Runtime(format!("stdout: {e}")),
        })
    }
}

fn write_sidecar(out: Option<&Path>, records: &[serde_json::Value]) -> Result<(), CliError> {
    let Some(out) = out else {
        return Ok(());
    };
    let mut name = out.as_os_str().to_owned();
    name.push(".meta.jsonl");
    let path = PathBuf::from(name);
    let mut w = BufWriter::new(File::create(&path).map_err(|e| io_error(&path, e))?);
    for r in records {
        writeln!(w, "{r}").map_err(|e| io_error(&path, e))?;
    }
    w.flush().map_err(|e| io_error(&path, e))
}

fn run_record(
    command: &Command,
    config: &ExperimentConfig,
    threads: Option<usize>,
) -> serde_json::Value {
    json!({
        "record": "run",
        "command": command.name(),
        "version": env!("CARGO_PKG_VERSION"),
        "seed": config.seed,
        "config_sha256": config_hash(config),
        "threads": threads,
    })
}

/// Runs a parsed command.
pub fn dispatch(cli: &Cli) -> Result<(), CliError> {
    if cli.global.threads == Some(0) {
        return Err(CliError::Invalid("--threads must be at least 1".into()));
    }
    let file = load_config(&cli.global)?;
    let out_path = cli.global.out.as_deref();
    let threads = cli.global.threads;
    let start = Instant::now();
    match &cli.command {
        Command::SweepDistance
        | Command::SweepVelocity
        | Command::SweepMultipath
        | Command::SweepSnr => {
            let config = file.experiment(cli.command.axis())?;
            let result = run_sweep(&config, threads)?;
            let mut out = Output::open(out_path)?;
            write_sweep_csv(&result, &mut out.writer)?;
            out.finish()?;
            let mut records = vec![run_record(&cli.command, &config, threads)];
            for p in &result.points {
                let mut r = timing_json(&p.timing);
                r["record"] = json!("timing");
                r["sweep_value"] = json!(p.value);
                records.push(r);
            }
            records.push(json!({"record": "total", "elapsed_s": start.elapsed().as_secs_f64()}));
            write_sidecar(out_path, &records)
        }
        Command::Convergence => {
            let mut config = file.experiment(SweepAxis::Distance)?;
            config.values = vec![config.scenario.rho];
            let trace = convergence_trace(&config)?;
            let mut out = Output::open(out_path)?;
            write_trace_csv(&trace, &mut out.writer)?;
            out.finish()?;
            write_sidecar(
                out_path,
                &[
                    run_record(&cli.command, &config, threads),
                    json!({
                        "record": "total",
                        "grid_iterations": trace.grid_iterations,
                        "outer_iterations": trace.outer_iterations,
                        "elapsed_s": start.elapsed().as_secs_f64(),
                    }),
                ],
            )
        }
        Command::Bounds { rho, v } => {
            let mut file = file;
            if let Some(rho) = rho {
                file.scenario.rho = *rho;
            }
            if let Some(v) = v {
                file.scenario.speed = *v;
            }
            let config = file.experiment(SweepAxis::Distance)?;
            let mut params = config.scenario.clone();
            params.rician_k = None;
            let report = bounds(&params.build()?)?;
            let mut out = Output::open(out_path)?;
            let mut w = csv::Writer::from_writer(&mut out.writer);
            let csv_err = |e: csv::Error| CliError::Runtime(format!("CSV write failed: {e}"));
            w.write_record(["rho_m", "speed_mps", "peb_m", "veb_mps", "condition_number"])
                .map_err(csv_err)?;
            w.write_record([
                format_float(params.rho),
                format_float(params.speed),
                format_float(report.peb),
                format_float(report.veb),
                format_float(report.condition_number),
            ])
            .map_err(csv_err)?;
            w.flush()
                .map_err(|e| CliError::Runtime(format!("CSV write failed: {e}")))?;
            drop(w);
            out.finish()?;
            write_sidecar(
                out_path,
                &[
                    run_record(&cli.command, &config, threads),
                    json!({"record": "total", "elapsed_s": start.elapsed().as_secs_f64()}),
                ],
            )
        }
        Command::SingleTrial { no_noise } => {
            let mut config = file.experiment(SweepAxis::Distance)?;
            config.values = vec![config.scenario.rho];
            config.trials = 1;
            config.stages = vec![StageKind::Full];
            if *no_noise {
                config.scenario.noise = false;
            }
            let experiment = Experiment::new(config.clone())?;
            let trial = experiment.run_trial(0, 0)?;
            let o = trial
                .outcome(StageKind::Full)
                .expect("full stage was requested");
            if let Some(e) = &o.error {
                return Err(CliError::Runtime(format!("estimator failed: {e}")));
            }
            let pe = o.position_error.unwrap_or(f64::NAN);
            let ve = o.velocity_error.unwrap_or(f64::NAN);
            println!("position error: {pe:.6e} m");
            println!("velocity error: {ve:.6e} m/s");
            if let Some(path) = out_path {
                let mut out = Output::open(Some(path))?;
                let mut w = csv::Writer::from_writer(&mut out.writer);
                let csv_err = |e: csv::Error| CliError::Runtime(format!("CSV write failed: {e}"));
                w.write_record([
                    "rho_m",
                    "position_error_m",
                    "velocity_error_mps",
                    "grid_iterations",
                    "outer_iterations",
                    "descent_iterations",
                    "seed",
                ])
                .map_err(csv_err)?;
                w.write_record([
                    format_float(config.scenario.rho),
                    format_float(pe),
                    format_float(ve),
                    o.grid_iterations.to_string(),
                    o.outer_iterations.to_string(),
                    o.descent_iterations.to_string(),
                    config.seed.to_string(),
                ])
                .map_err(csv_err)?;
                w.flush()
                    .map_err(|e| CliError::Runtime(format!("CSV write failed: {e}")))?;
                drop(w);
                out.finish()?;
            }
            let mut timing = timing_json(&trial.timing);
            timing["record"] = json!("timing");
            write_sidecar(
                out_path,
                &[
                    run_record(&cli.command, &config, threads),
                    timing,
                    json!({"record": "total", "elapsed_s": start.elapsed().as_secs_f64()}),
                ],
            )
        }
    }
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() {
                EXIT_INVALID
            } else {
                EXIT_OK
            };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(&cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
