//! `nashfair`: solve, check, lottery, decompose, fuzz and fixtures.

mod commands;
mod render;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use nashfair::bobw::CeeiMode;
use nashfair::fuzz::{Family, Property};
use nashfair::rational::parse_rational;
use nashfair::{Rational, DEFAULT_CAP};

/// Exact fair division under feasibility constraints.
#[derive(Parser, Debug)]
#[command(name = "nashfair", version)]
struct Cli {
    /// Also write a structured JSON report to this path.
    #[arg(long, global = true, value_name = "PATH")]
    json_out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Maximum Nash welfare allocations of a problem file.
    Solve(SolveArgs),
    /// Verify a fairness or efficiency property of an allocation.
    Check(CheckArgs),
    /// Equilibrium lottery for goods with copies.
    Lottery(LotteryArgs),
    /// Decompose a fractional matrix into a lottery over integral assignments.
    Decompose(DecomposeArgs),
    /// Random search for property violations among MNW allocations.
    Fuzz(FuzzArgs),
    /// Write the canonical fixture files.
    Fixtures(FixturesArgs),
}

#[derive(Args, Debug)]
pub struct SolveArgs {
    pub instance: PathBuf,
    /// Restrict to complete allocations.
    #[arg(long)]
    pub complete: bool,
    /// Report every maximizer instead of one.
    #[arg(long)]
    pub all_optima: bool,
    /// Bound on enumerated search states.
    #[arg(long, default_value_t = DEFAULT_CAP)]
    pub cap: u64,
}

#[derive(Args, Debug)]
pub struct CheckArgs {
    pub instance: PathBuf,
    pub allocation: PathBuf,
    /// One of: ef, ef1, ef1wc, sd-ef1, po, po-plus, mef1, prop1, prop1-wc, ef11, ef11-wc.
    pub property: String,
    /// Approximation factor for ef1 and ef1wc.
    #[arg(long, value_parser = rational_arg)]
    pub alpha: Option<Rational>,
    /// Compare against complete feasible allocations only (po).
    #[arg(long)]
    pub complete: bool,
    #[arg(long, default_value_t = DEFAULT_CAP)]
    pub cap: u64,
}

#[derive(Args, Debug)]
pub struct LotteryArgs {
    pub instance: PathBuf,
    #[arg(long, default_value = "copies")]
    pub mode: CeeiMode,
    /// Largest accepted equilibrium residual.
    #[arg(long, default_value_t = 1e-6)]
    pub tau: f64,
    /// Tolerance of the ex-ante fairness and efficiency checks.
    #[arg(long, value_parser = rational_arg, default_value = "1/1000")]
    pub tau_prime: Rational,
    #[arg(long, default_value_t = DEFAULT_CAP)]
    pub cap: u64,
    /// Write the lottery here.
    #[arg(long, value_name = "PATH")]
    pub lottery_out: Option<PathBuf>,
    /// Write prices, allocation and residuals here.
    #[arg(long, value_name = "PATH")]
    pub certificate_out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct DecomposeArgs {
    pub instance: PathBuf,
    /// JSON file `{"x": [[...], ...]}`, one row per agent.
    pub matrix: PathBuf,
    #[arg(long, default_value = "copies")]
    pub mode: CeeiMode,
    #[arg(long, value_name = "PATH")]
    pub lottery_out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct FuzzArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 100)]
    pub trials: usize,
    /// Agent count range, `LO-HI` or a single number.
    #[arg(long, value_parser = range_arg, default_value = "2-3")]
    pub agents: (usize, usize),
    /// Good count range, `LO-HI` or a single number.
    #[arg(long, value_parser = range_arg, default_value = "1-6")]
    pub goods: (usize, usize),
    /// Constraint family; repeat for several.
    #[arg(long = "family", default_value = "partition")]
    pub families: Vec<Family>,
    /// Property to test; repeat for several.
    #[arg(long = "property", default_values = ["half-ef1", "po"])]
    pub properties: Vec<Property>,
    /// Sample strictly positive values.
    #[arg(long)]
    pub positive: bool,
    #[arg(long)]
    pub complete: bool,
    #[arg(long, default_value_t = DEFAULT_CAP)]
    pub cap: u64,
    /// Report findings unshrunk.
    #[arg(long)]
    pub no_shrink: bool,
    /// Directory for counterexample files.
    #[arg(long, value_name = "DIR")]
    pub out_dir: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct FixturesArgs {
    /// Fixture to write; all when omitted.
    pub name: Option<String>,
    #[arg(long, value_name = "DIR", default_value = ".")]
    pub out_dir: PathBuf,
}

fn rational_arg(s: &str) -> Result<Rational, String> {
    parse_rational(s).ok_or_else(|| format!("`{}` is not a rational", s))
}

fn range_arg(s: &str) -> Result<(usize, usize), String> {
    let parse = |t: &str| {
        t.trim()
            .parse::<usize>()
            .map_err(|e| format!("`{}`: {}", t, e))
    };
    let (lo, hi) = match s.split_once('-') {
        Some((a, b)) => (parse(a)?, parse(b)?),
        None => {
            let k = parse(s)?;
            (k, k)
        }
    };
    if lo > hi {
        return Err(format!("empty range `{}`", s));
    }
    Ok((lo, hi))
}

/// 0: success or property holds; 1: error; 2: finding or property fails.
const EXIT_ERROR: u8 = 1;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_ERROR } else { 0 });
        }
    };
    let outcome = match &cli.command {
        Command::Solve(a) => commands::solve(a),
        Command::Check(a) => commands::check(a),
        Command::Lottery(a) => commands::lottery(a),
        Command::Decompose(a) => commands::decompose(a),
        Command::Fuzz(a) => commands::fuzz(a),
        Command::Fixtures(a) => commands::fixtures(a),
    };
    let result = outcome.and_then(|o| {
        print!("{}", o.text);
        if let Some(path) = &cli.json_out {
            commands::write_json(path, &o.json)?;
        }
        Ok(o.code)
    });
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {}", e);
            ExitCode::from(EXIT_ERROR)
        }
    }
}
