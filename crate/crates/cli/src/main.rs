//! `epp`: solves, simulations and comparisons for the stochastic
//! elasto-plastic oscillator.
//!
//! Exit codes: 0 success, 1 I/O, 2 usage, 3 invalid configuration,
//! 4 solver failure or failed check.

mod commands;
mod config;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::Value;
use thiserror::Error;

use commands::{CycleMethod, Estimator, SimulateOptions, SweepKind};
use config::{loose_value, RunConfig};
use report::Output;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid {key}: {reason}")]
    Invalid { key: String, reason: String },
    #[error(transparent)]
    Core(#[from] epp_core::Error),
    #[error("check failed: {0}")]
    Check(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Invalid { .. } => 3,
            CliError::Core(e) if e.is_solver_failure() => 4,
            CliError::Core(_) => 3,
            CliError::Check(_) => 4,
            CliError::Io(_) => 1,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "epp", version, about = "Invariant measure, correctors and Monte Carlo for the elasto-plastic oscillator")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

/// Flags shared by every subcommand. Precedence: `--config`, then `--set`,
/// then the named flags.
#[derive(Debug, Args)]
struct Common {
    /// Flat JSON object of configuration keys.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Override any configuration key.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true, default_value = "out", value_name = "DIR")]
    out_dir: PathBuf,
    /// Comma-separated functional names (one, y, z, y2, z2, abs_y, ...).
    #[arg(long = "f", global = true, value_name = "NAMES")]
    functionals: Option<String>,
    /// Comma-separated resolvent parameters.
    #[arg(long, global = true, value_name = "LIST")]
    lambdas: Option<String>,
    #[arg(long = "L", global = true)]
    half_width: Option<f64>,
    #[arg(long = "Ny", global = true)]
    ny: Option<usize>,
    #[arg(long = "Nz", global = true)]
    nz: Option<usize>,
    #[arg(long, global = true)]
    dt: Option<f64>,
    #[arg(long = "T", global = true)]
    horizon: Option<f64>,
    #[arg(long, global = true)]
    replicas: Option<usize>,
    #[arg(long, global = true)]
    cycles: Option<usize>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// ν(f) from the short-cycle traces.
    Measure,
    /// Short-cycle solve, monolithic and/or by domain decomposition.
    Cycle {
        #[arg(long, value_enum, default_value = "both")]
        method: CycleMethod,
    },
    /// u_λ directly and by formula over the λ sweep, plus the corrector.
    Resolvent,
    /// Hitting-probability fields π± and the partition check.
    Pi,
    /// Monte Carlo estimators.
    Simulate {
        #[arg(long, value_enum, default_value = "time-average")]
        estimator: Estimator,
        /// Start point `y,z` for the cycle and pi estimators.
        #[arg(long, value_name = "Y,Z", value_parser = parse_point, allow_hyphen_values = true)]
        start: Option<(f64, f64)>,
        /// Steps of the sampled trajectory.
        #[arg(long, default_value_t = 100_000)]
        steps: u64,
        /// Keep every n-th trajectory state.
        #[arg(long, default_value_t = 100)]
        every: u64,
    },
    /// PDE against Monte Carlo table.
    Compare,
    /// Contraction factor over a (ȳ, ȳ₁) grid.
    Certify {
        #[arg(long, value_delimiter = ',', value_name = "LIST")]
        ybar: Option<Vec<f64>>,
        #[arg(long, value_delimiter = ',', value_name = "LIST")]
        ybar1: Option<Vec<f64>>,
    },
    /// Refinement studies.
    Sweep {
        #[arg(long, value_enum, default_value = "grid")]
        kind: SweepKind,
    },
}

fn parse_point(s: &str) -> Result<(f64, f64), String> {
    let (a, b) = s.split_once(',').ok_or("expected `y,z`")?;
    let p = |t: &str| t.trim().parse::<f64>().map_err(|e| format!("{t:?}: {e}"));
    Ok((p(a)?, p(b)?))
}

impl Common {
    fn run_config(&self) -> Result<RunConfig, CliError> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::from_file(path)?,
            None => RunConfig::default(),
        };
        for kv in &self.set {
            let (k, v) = kv.split_once('=').ok_or_else(|| CliError::Invalid {
                key: kv.clone(),
                reason: "--set expects KEY=VALUE".into(),
            })?;
            cfg.set(k.trim(), &loose_value(v.trim()))?;
        }
        let flags: [(&str, Option<Value>); 10] = [
            ("seed", self.seed.map(Value::from)),
            ("f", self.functionals.clone().map(Value::from)),
            ("lambdas", self.lambdas.clone().map(Value::from)),
            ("L", self.half_width.map(Value::from)),
            ("Ny", self.ny.map(Value::from)),
            ("Nz", self.nz.map(Value::from)),
            ("dt", self.dt.map(Value::from)),
            ("T", self.horizon.map(Value::from)),
            ("replicas", self.replicas.map(Value::from)),
            ("cycles", self.cycles.map(Value::from)),
        ];
        for (k, v) in flags {
            if let Some(v) = v {
                cfg.set(k, &v)?;
            }
        }
        Ok(cfg)
    }
}

fn run(cli: Cli) -> Result<Vec<String>, CliError> {
    let cfg = cli.common.run_config()?;
    let default_f: &[&str] = match cli.command {
        Command::Measure | Command::Cycle { .. } | Command::Pi | Command::Certify { .. } => &["one"],
        Command::Resolvent => &["y_plus_y2"],
        Command::Simulate { .. } | Command::Compare => &["y2", "z2", "abs_y"],
        Command::Sweep { .. } => &["y2"],
    };
    // Everything is validated before the first solve.
    let resolved = cfg.resolve(default_f)?;
    let sigma = resolved.params.velocity_scale();
    let mut out = Output::new(&cli.common.out_dir)?;
    match cli.command {
        Command::Measure => commands::measure(&resolved, &mut out),
        Command::Cycle { method } => commands::cycle(&resolved, method, &mut out),
        Command::Resolvent => commands::resolvent(&resolved, &mut out),
        Command::Pi => commands::pi(&resolved, &mut out),
        Command::Simulate {
            estimator,
            start,
            steps,
            every,
        } => commands::simulate(
            &resolved,
            &SimulateOptions {
                estimator,
                start,
                steps,
                every,
            },
            &mut out,
        ),
        Command::Compare => commands::compare(&resolved, &mut out),
        Command::Certify { ybar, ybar1 } => {
            let ybar = ybar.unwrap_or_else(|| [0.5, 1.0, 1.5].map(|s| s * sigma).to_vec());
            let ybar1 = ybar1.unwrap_or_else(|| [2.0, 3.0, 4.0].map(|s| s * sigma).to_vec());
            commands::certify(&resolved, &ybar, &ybar1, &mut out)
        }
        Command::Sweep { kind } => commands::sweep(&resolved, kind, &mut out),
    }
}

fn main() -> ExitCode {
    // Parse errors print usage and exit with 2; --help and --version exit 0.
    let cli = Cli::parse();
    match run(cli) {
        Ok(lines) => {
            for l in lines {
                println!("{l}");
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("epp: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
