mod commands;
mod config;

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};
use serde::Serialize;

use commands::Table;
use config::ExperimentConfig;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] pclocal::Error),
    #[error("{0}")]
    Invalid(String),
    #[error("{0}: {1}")]
    Io(PathBuf, std::io::Error),
    #[error("writing CSV: {0}")]
    Csv(#[from] csv::Error),
}

impl CliError {
    fn missing(flag: &str) -> Self {
        CliError::Invalid(format!("{flag} is required for this command"))
    }

    fn exit_code(&self) -> u8 {
        match self {
            CliError::Core(e) if e.is_inconclusive() => 3,
            CliError::Core(_) | CliError::Invalid(_) => 2,
            CliError::Io(..) | CliError::Csv(_) => 1,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "pclocal", version, about = "Percolation locality experiments on transitive graphs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Family summary, ball level sizes and, for quotients, the local radius.
    GraphInfo(Args),
    /// Per-level vertex and edge counts of the ball around the root.
    Ball(Args),
    /// Exit distribution of simple random walk on the sphere of radius --radius.
    Harmonic(Args),
    /// Exit-measure and connection-probability ratios for radii 1..=--radius.
    Assumption(Args),
    /// Return probabilities and the spectral radius band.
    Spectral(Args),
    /// Return-probability identity between a quotient and its cover.
    QuotientCheck(Args),
    /// Monte Carlo connection probabilities to the outer sphere.
    Percolate(Args),
    /// Crossing estimate of the critical probability.
    PcEstimate(Args),
    /// Runs of the coupled exploration process.
    Explore(Args),
    /// Critical probability of quotients against the base graph.
    Locality(Args),
}

impl Command {
    fn parts(&self) -> (&'static str, &Args) {
        match self {
            Command::GraphInfo(a) => ("graph-info", a),
            Command::Ball(a) => ("ball", a),
            Command::Harmonic(a) => ("harmonic", a),
            Command::Assumption(a) => ("assumption", a),
            Command::Spectral(a) => ("spectral", a),
            Command::QuotientCheck(a) => ("quotient-check", a),
            Command::Percolate(a) => ("percolate", a),
            Command::PcEstimate(a) => ("pc-estimate", a),
            Command::Explore(a) => ("explore", a),
            Command::Locality(a) => ("locality", a),
        }
    }
}

#[derive(Debug, clap::Args)]
struct Args {
    #[command(flatten)]
    config: ExperimentConfig,
    /// TOML or JSON config (or a run manifest); its fields override flags.
    #[arg(long = "config")]
    config_file: Option<PathBuf>,
}

#[derive(Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    version: &'static str,
    command: &'static str,
    config: &'a ExperimentConfig,
    data: String,
    rows: usize,
    master_seed: Option<u64>,
    wall_time_s: f64,
    summary: &'a serde_json::Value,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<String>,
}

fn dispatch(cmd: &Command, cfg: &ExperimentConfig) -> Result<Table, CliError> {
    match cmd {
        Command::GraphInfo(_) => commands::graph_info(cfg),
        Command::Ball(_) => commands::ball(cfg),
        Command::Harmonic(_) => commands::harmonic(cfg),
        Command::Assumption(_) => commands::assumption(cfg),
        Command::Spectral(_) => commands::spectral(cfg),
        Command::QuotientCheck(_) => commands::quotient_check(cfg),
        Command::Percolate(_) => commands::percolate(cfg),
        Command::PcEstimate(_) => commands::pc_estimate_cmd(cfg),
        Command::Explore(_) => commands::explore(cfg),
        Command::Locality(_) => commands::locality(cfg),
    }
}

fn write_csv(table: &Table, out: impl Write) -> Result<(), CliError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(&table.header)?;
    for r in &table.rows {
        w.write_record(r)?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

fn manifest_path(out: &Path) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(".manifest.json");
    PathBuf::from(s)
}

fn run(cli: Cli) -> Result<(), CliError> {
    let (name, args) = cli.command.parts();
    let cfg = match &args.config_file {
        Some(path) => args.config.clone().overridden_by(config::load(path)?),
        None => args.config.clone(),
    };
    if let Some(n) = cfg.threads {
        if n == 0 {
            return Err(CliError::Invalid("--threads must be >= 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Invalid(e.to_string()))?;
    }
    let start = Instant::now();
    let mut table = dispatch(&cli.command, &cfg)?;
    let failure = table.failure.take();
    match &cfg.out {
        None => write_csv(&table, std::io::stdout().lock())?,
        Some(out) => {
            let file = std::fs::File::create(out).map_err(|e| CliError::Io(out.clone(), e))?;
            write_csv(&table, file)?;
            let manifest = Manifest {
                tool: "pclocal",
                version: env!("CARGO_PKG_VERSION"),
                command: name,
                config: &cfg,
                data: out.file_name().map(|f| f.to_string_lossy().into_owned()).unwrap_or_default(),
                rows: table.rows.len(),
                master_seed: cfg.master_seed,
                wall_time_s: start.elapsed().as_secs_f64(),
                summary: &table.summary,
                error: failure.as_ref().map(|e| e.to_string()),
            };
            let path = manifest_path(out);
            let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
            std::fs::write(&path, json + "\n").map_err(|e| CliError::Io(path.clone(), e))?;
            log::info!("wrote {} rows to {}", table.rows.len(), out.display());
        }
    }
    failure.map_or(Ok(()), Err)
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

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes() {
        let undecided = pclocal::Error::Undecided { radius: 4, steps: 10 };
        assert_eq!(CliError::Core(undecided).exit_code(), 3);
        let partial = pclocal::Error::PartialLocality {
            rows: Vec::new(),
            cause: Box::new(pclocal::Error::SolverDiverged {
                residual: 1.0,
                iterations: 5,
            }),
        };
        assert_eq!(CliError::Core(partial).exit_code(), 3);
        assert_eq!(CliError::Core(pclocal::Error::Precondition("x".into())).exit_code(), 2);
        assert_eq!(CliError::missing("--p").exit_code(), 2);
    }

    #[test]
    fn manifest_sits_next_to_data() {
        assert_eq!(manifest_path(Path::new("out/a.csv")), PathBuf::from("out/a.csv.manifest.json"));
    }
}
