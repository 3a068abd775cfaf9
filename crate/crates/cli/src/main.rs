use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use log::{error, info};

use coexsim::config::{parse_duration, ConfigError, ScenarioConfig};
use coexsim::sim::SimTime;
use coexsim::sweep::{run_sweep, run_to_dir, Matrix, RunError};

const EXIT_INTERNAL: u8 = 1;
const EXIT_CONFIG: u8 = 2;

/// Bluetooth/Wi-Fi coexistence attack simulator.
#[derive(Parser)]
#[command(name = "coexsim", version)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run one scenario.
    Run {
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Replaces the seed from the config.
        #[arg(long)]
        seed: Option<u64>,
        /// Simulated time, e.g. `2`, `2.5s`, `500ms`.
        #[arg(long, value_parser = parse_duration)]
        duration: Option<SimTime>,
    },
    /// Run a scenario once per cell of a parameter matrix.
    Sweep {
        config: PathBuf,
        #[arg(long)]
        matrix: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u16).range(1..))]
        jobs: u16,
    },
}

fn config_failure(path: &Path, e: &ConfigError) -> ExitCode {
    eprintln!("error: {}: {e}", path.display());
    ExitCode::from(EXIT_CONFIG)
}

fn read(path: &Path) -> Result<String, ConfigError> {
    std::fs::read_to_string(path).map_err(|e| ConfigError {
        field: String::new(),
        line: None,
        msg: format!("cannot read: {e}"),
    })
}

fn run(config: &Path, out: &Path, seed: Option<u64>, duration: Option<SimTime>) -> ExitCode {
    let mut cfg = match ScenarioConfig::load(config) {
        Ok(c) => c,
        Err(e) => return config_failure(config, &e),
    };
    cfg.apply_overrides(seed, duration);
    match run_to_dir(&cfg, out) {
        Ok(r) => {
            println!("{} {} {}", r.kind, r.verdict.as_str(), r.outcome);
            ExitCode::SUCCESS
        }
        Err(e @ (RunError::Config(_) | RunError::Rejected(_))) => {
            eprintln!("error: {}: {e}", config.display());
            ExitCode::from(EXIT_CONFIG)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_INTERNAL)
        }
    }
}

fn sweep(config: &Path, matrix: &Path, out: &Path, jobs: usize) -> ExitCode {
    let base = match read(config).and_then(|s| ScenarioConfig::parse_table(&s)) {
        Ok(t) => t,
        Err(e) => return config_failure(config, &e),
    };
    let m = match read(matrix).and_then(|s| Matrix::parse(&s)) {
        Ok(m) => m,
        Err(e) => return config_failure(matrix, &e),
    };
    let results = match run_sweep(&base, &m, out, jobs) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_INTERNAL);
        }
    };
    let failed = results.iter().filter(|r| r.result.is_err()).count();
    info!("{} cells, {failed} failed", results.len());
    for r in results.iter().filter(|r| r.result.is_err()) {
        if let Err(e) = &r.result {
            error!("{}: {e}", r.dir.display());
        }
    }
    println!("{} cells, {failed} failed", results.len());
    if failed > 0 {
        ExitCode::from(EXIT_INTERNAL)
    } else {
        ExitCode::SUCCESS
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("COEXSIM_LOG", "warn")).init();
    let cli = Cli::parse();
    match cli.cmd {
        Cmd::Run {
            config,
            out,
            seed,
            duration,
        } => run(&config, &out, seed, duration),
        Cmd::Sweep {
            config,
            matrix,
            out,
            jobs,
        } => sweep(&config, &matrix, &out, jobs as usize),
    }
}
