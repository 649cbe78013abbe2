//! Command-line front end.

use std::io::Write;
use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};

use crate::analysis::{AnalysisError, TrialRecord};
use crate::calibrate::calibrate;
use crate::config::{ConfigError, Mode, OutputFormat, RunConfig, SCHEMA_VERSION};
use crate::experiment::{run_experiment, run_network_mode, run_oracle_check, RunError};
use crate::report::{write_outputs, CalibrateReport, Report};

pub const EXIT_OK: u8 = 0;
pub const EXIT_VALIDATION: u8 = 1;
pub const EXIT_CHECK: u8 = 2;
pub const EXIT_IO: u8 = 3;

/// Largest |predicted - target| / sigma a calibration may leave.
pub const MAX_CALIBRATION_PULL: f64 = 2.0;

/// Shots used when no config file is given.
pub const DEFAULT_SHOTS: u64 = 100_000;

#[derive(Debug, Parser)]
#[command(name = "tbfusion", version, about = "Time-bin fusion experiment simulator")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Monte Carlo of the two-cycle spin-photon fusion experiment.
    Experiment(CommonArgs),
    /// Sample a fusion network and report its correlation graph.
    Network(CommonArgs),
    /// Compare the closed-form fusion channel against the Fock oracle.
    OracleCheck(CommonArgs),
    /// Fit noise knobs to target error rates.
    Calibrate(CommonArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FormatArg {
    Json,
    Csv,
}

#[derive(Debug, clap::Args)]
pub struct CommonArgs {
    /// TOML run configuration; ideal devices if omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Overrides experiment.shots.
    #[arg(long)]
    pub shots: Option<u64>,
    /// Output directory; the report goes to stdout if neither this nor output.dir is set.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub format: Option<FormatArg>,
}

impl Command {
    fn parts(&self) -> (Mode, &CommonArgs) {
        match self {
            Command::Experiment(a) => (Mode::Experiment, a),
            Command::Network(a) => (Mode::Network, a),
            Command::OracleCheck(a) => (Mode::OracleCheck, a),
            Command::Calibrate(a) => (Mode::Calibrate, a),
        }
    }
}

/// Exit code for an error.
pub fn exit_code(e: &RunError) -> u8 {
    match e {
        RunError::Config(ConfigError::Io { .. }) | RunError::Io { .. } => EXIT_IO,
        RunError::Analysis(AnalysisError::Io(_)) => EXIT_IO,
        RunError::CheckFailed(_) => EXIT_CHECK,
        _ => EXIT_VALIDATION,
    }
}

/// Config after applying the subcommand and flag overrides.
pub fn resolve_config(mode: Mode, args: &CommonArgs) -> Result<RunConfig, RunError> {
    let mut cfg = match &args.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::ideal(DEFAULT_SHOTS, 0),
    };
    cfg.mode = mode;
    if let Some(s) = args.seed {
        cfg.experiment.seed = s;
    }
    if let Some(n) = args.shots {
        cfg.experiment.shots = n;
    }
    if let Some(d) = &args.out {
        cfg.output.dir = Some(d.clone());
    }
    if let Some(f) = args.format {
        cfg.output.format = match f {
            FormatArg::Json => OutputFormat::Json,
            FormatArg::Csv => OutputFormat::Csv,
        };
    }
    cfg.validate()?;
    Ok(cfg)
}

pub struct Execution {
    pub report: Report,
    pub records: Option<Vec<TrialRecord>>,
    /// Set when a check failed; the report is still complete.
    pub failure: Option<String>,
}

/// Runs one mode.
pub fn execute(cfg: &RunConfig) -> Result<Execution, RunError> {
    let (report, records, failure) = match cfg.mode {
        Mode::Experiment => {
            let run = run_experiment(cfg)?;
            let records = cfg.output.records.then_some(run.records);
            (Report::Experiment(Box::new(run.report)), records, None)
        }
        Mode::Network => (Report::Network(run_network_mode(cfg)?), None, None),
        Mode::OracleCheck => {
            let r = run_oracle_check(cfg)?;
            let failure = (!r.passed).then(|| {
                format!(
                    "oracle deviation {:.3e} exceeds tolerance {:.3e}",
                    r.max_povm_deviation.max(r.max_probability_deviation).max(r.max_trace_distance),
                    r.tolerance
                )
            });
            (Report::OracleCheck(r), None, failure)
        }
        Mode::Calibrate => {
            let cal_cfg = cfg.calibrate.clone().unwrap_or_default();
            let seed = cfg.experiment.seed;
            let c = calibrate(&cal_cfg, &cfg.emitter, &cfg.fusion, seed)?;
            let mut calibrated = cfg.clone();
            calibrated.mode = Mode::Experiment;
            calibrated.emitter = c.emitter.clone();
            calibrated.fusion = c.fusion.clone();
            calibrated.output = Default::default();
            let failure = (c.max_pull > MAX_CALIBRATION_PULL)
                .then(|| format!("calibration residual: largest pull {:.2} sigma", c.max_pull));
            let report = CalibrateReport {
                schema_version: SCHEMA_VERSION,
                mode: Mode::Calibrate,
                seed,
                calibration: c,
                calibrated,
            };
            (Report::Calibrate(Box::new(report)), None, failure)
        }
    };
    Ok(Execution {
        report,
        records,
        failure,
    })
}

fn run_inner(cli: &Cli) -> Result<(), RunError> {
    let (mode, args) = cli.command.parts();
    let cfg = resolve_config(mode, args)?;
    let Execution {
        report,
        records,
        failure,
    } = execute(&cfg)?;
    match &cfg.output.dir {
        Some(dir) => {
            for p in write_outputs(dir, &report, records.as_deref(), cfg.output.format)? {
                eprintln!("wrote {}", p.display());
            }
        }
        None => {
            let text = report.render(cfg.output.format)?;
            std::io::stdout().write_all(text.as_bytes()).map_err(|source| RunError::Io {
                path: PathBuf::from("<stdout>"),
                source,
            })?;
        }
    }
    match failure {
        Some(msg) => Err(RunError::CheckFailed(msg)),
        None => Ok(()),
    }
}

/// Entry point: runs `cli` and returns the process exit code.
pub fn run(cli: &Cli) -> u8 {
    match run_inner(cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
