//! `largegame`: solve congestion networks and large games, and check
//! equilibrium refinements from the command line.
//!
//! Exit codes: 0 success, 1 usage or input error, 2 a check failed,
//! 3 (`rpe` only) the ε-trajectory did not converge.

mod commands;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Result};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::{json, Value};

use output::{emit, Format};

#[derive(Parser)]
#[command(
    name = "largegame",
    version,
    about = "Equilibrium refinements for large games and congestion networks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Unperturbed equilibrium flow of a network.
    Wardrop(WardropArgs),
    /// ε → 0 limit of robust perfect equilibria, then the checker suite on it.
    Rpe(RpeArgs),
    /// Run checkers on a given profile.
    Check(CheckArgs),
    /// Sample a finite population from a profile.
    Simulate(SimulateArgs),
    /// Price of anarchy of a network.
    Poa(PoaArgs),
}

#[derive(Args, Serialize)]
pub struct Common {
    /// Numerical tolerance for the equilibrium tests.
    #[arg(long, default_value_t = 1e-6)]
    pub tol: f64,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Monte Carlo draws for payoff integrals without a closed form.
    #[arg(long, default_value_t = 200_000)]
    pub mc_samples: usize,
    /// Directory for the JSON report and CSV tables.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    pub format: Format,
}

#[derive(Args, Serialize)]
pub struct WardropArgs {
    /// Network JSON file.
    pub input: PathBuf,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct Schedule {
    pub n0: usize,
    pub n1: usize,
}

fn parse_schedule(s: &str) -> Result<Schedule, String> {
    let (a, b) = s
        .split_once("..")
        .ok_or_else(|| format!("expected n0..n1, got `{s}`"))?;
    let parse = |x: &str| x.trim().parse::<usize>().map_err(|e| format!("`{x}`: {e}"));
    let (n0, n1) = (parse(a)?, parse(b)?);
    if n0 == 0 || n1 < n0 {
        return Err(format!("need 1 <= n0 <= n1, got {n0}..{n1}"));
    }
    Ok(Schedule { n0, n1 })
}

#[derive(Args, Serialize)]
pub struct RpeArgs {
    /// Network or game JSON file.
    pub input: PathBuf,
    /// Indices of the trembles ε_n = 1/(6n).
    #[arg(long, value_parser = parse_schedule, default_value = "1..200")]
    pub schedule: Schedule,
    /// Resolution of the dominance grid.
    #[arg(long, default_value_t = 50)]
    pub grid: usize,
    /// Trajectory convergence tolerance.
    #[arg(long, default_value_t = 1e-3)]
    pub cauchy_tol: f64,
    /// Profile to test the limit conditions against (games only; default: every named profile).
    #[arg(long)]
    pub target: Option<String>,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Args, Serialize)]
pub struct CheckArgs {
    /// Network or game JSON file.
    pub input: PathBuf,
    /// A named profile, a profile JSON file, or comma-separated weights used by every type.
    #[arg(long)]
    pub profile: String,
    #[arg(long)]
    pub nash: bool,
    #[arg(long)]
    pub admissible: bool,
    #[arg(long)]
    pub eps_rpe: bool,
    #[arg(long)]
    pub certificate: bool,
    /// All checks; also the default when none is selected.
    #[arg(long)]
    pub all: bool,
    /// Resolution of the dominance grid.
    #[arg(long, default_value_t = 50)]
    pub grid: usize,
    /// Test ε-robust perfection at this ε only instead of 1/10, 1/20, 1/40, 1/80.
    #[arg(long)]
    pub epsilon: Option<f64>,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Args, Serialize)]
pub struct SimulateArgs {
    /// Network or game JSON file.
    pub input: PathBuf,
    /// Profile to sample; the robust perfect limit from `rpe` when absent.
    #[arg(long)]
    pub profile: Option<String>,
    /// Population size.
    #[arg(long)]
    pub n: usize,
    /// Trials per population size in the convergence table; 0 skips it.
    #[arg(long, default_value_t = 20)]
    pub trials: usize,
    /// Also check the realization ex post at this ε.
    #[arg(long)]
    pub epsilon: Option<f64>,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Args, Serialize)]
pub struct PoaArgs {
    /// Network JSON file.
    pub input: PathBuf,
    #[command(flatten)]
    pub common: Common,
}

fn validate(common: &Common) -> Result<()> {
    if !(common.tol > 0.0 && common.tol.is_finite()) {
        bail!("--tol must be positive");
    }
    if common.mc_samples == 0 {
        bail!("--mc-samples must be at least 1");
    }
    Ok(())
}

fn config<T: Serialize>(command: &str, args: &T) -> Result<Value> {
    let mut v = serde_json::to_value(args)?;
    if let Value::Object(map) = &mut v {
        map.insert("command".into(), json!(command));
    }
    Ok(v)
}

fn run(cli: Cli) -> Result<u8> {
    let (out, cfg, common) = match &cli.command {
        Command::Wardrop(a) => {
            validate(&a.common)?;
            (commands::wardrop(a)?, config("wardrop", a)?, &a.common)
        }
        Command::Rpe(a) => {
            validate(&a.common)?;
            (commands::rpe(a)?, config("rpe", a)?, &a.common)
        }
        Command::Check(a) => {
            validate(&a.common)?;
            (commands::check(a)?, config("check", a)?, &a.common)
        }
        Command::Simulate(a) => {
            validate(&a.common)?;
            (commands::simulate(a)?, config("simulate", a)?, &a.common)
        }
        Command::Poa(a) => {
            validate(&a.common)?;
            (commands::poa(a)?, config("poa", a)?, &a.common)
        }
    };
    emit(&out, &cfg, common.format, common.out.as_deref())?;
    Ok(out.exit_code)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Usage errors exit 1; exit 2 is reserved for failing checks.
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedules() {
        let s = parse_schedule("3..40").unwrap();
        assert_eq!((s.n0, s.n1), (3, 40));
        assert!(parse_schedule("0..5").is_err());
        assert!(parse_schedule("9..2").is_err());
        assert!(parse_schedule("12").is_err());
    }
}
