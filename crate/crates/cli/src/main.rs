//! `irw`: runs the convergence and feature-selection experiments and writes
//! traces, reports and a replay manifest to an output directory.
//!
//! Exit codes: 0 success, 1 solver failure, 2 usage or input error.

mod commands;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

#[derive(Parser)]
#[command(name = "irw", version, about = "Iteratively re-weighted solvers for sparsity-inducing norms")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Robust multi-output regression with entrywise, row and spectral terms.
    Example(ExampleArgs),
    /// The proximal subproblem, or full proximal gradient with --outer.
    Proximal(ProximalArgs),
    /// Cross-validated feature selection against the Fisher-score baseline.
    Featsel(FeatselArgs),
}

#[derive(Args, Serialize)]
pub struct CommonArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output directory, created if missing.
    #[arg(long, default_value = "irw-out")]
    #[serde(skip)]
    pub out: PathBuf,
    /// Smoothing constant: a positive number or "auto" (scaled to the data).
    #[arg(long, default_value = "auto", value_parser = parse_delta)]
    pub delta: Delta,
    /// Include wall-clock seconds in trace files (makes them non-reproducible).
    #[arg(long)]
    pub timings: bool,
}

#[derive(Args, Serialize)]
pub struct DataArgs {
    /// CSV file, one sample per line.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Label column: header name or zero-based index, negative from the end.
    #[arg(long, default_value = "-1", allow_hyphen_values = true)]
    pub label_column: String,
    /// The first line is data, not a header.
    #[arg(long)]
    pub no_header: bool,
    /// Keep features on their original scale.
    #[arg(long)]
    pub no_standardize: bool,
}

#[derive(Args, Serialize)]
pub struct ExampleArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Gaussian data with dimensions d,n1,n2,c.
    #[arg(long, value_parser = parse_dims::<4>, required_unless_present = "data", conflicts_with = "data")]
    pub synthetic: Option<Dims>,
    #[arg(long, value_parser = parse_p_list, default_value = "0.1,0.5,0.8,1,1.2,1.5,2")]
    pub p_list: PList,
    #[arg(long, default_value_t = 1.0)]
    pub mu1: f64,
    #[arg(long, default_value_t = 1.0)]
    pub mu2: f64,
    #[arg(long, default_value_t = 100)]
    pub max_iters: usize,
    #[arg(long, default_value_t = 1e-8)]
    pub rel_tol: f64,
    /// Record the stationarity residual of every iterate.
    #[arg(long)]
    pub kkt: bool,
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Args, Serialize)]
pub struct ProximalArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Gaussian V with dimensions rows,cols (default 20,5 without --data).
    #[arg(long, value_parser = parse_dims::<2>, conflicts_with = "data")]
    pub synthetic: Option<Dims>,
    /// Coefficients of the entrywise, row and spectral terms.
    #[arg(long, value_parser = parse_gammas, default_value = "1,1,1")]
    pub gammas: Gammas,
    #[arg(long, value_parser = parse_p_list, default_value = "0.1,0.5,0.8,1,1.2,1.5,2")]
    pub p_list: PList,
    /// Iteration cap of each subproblem solve.
    #[arg(long, default_value_t = 100)]
    pub max_iters: usize,
    #[arg(long, default_value_t = 1e-8)]
    pub rel_tol: f64,
    /// Run proximal gradient on ||AX - Y||² instead of a single subproblem.
    #[arg(long)]
    pub outer: bool,
    #[arg(long, default_value_t = 100)]
    pub outer_iters: usize,
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ClassifierArg {
    NearestCentroid,
    ModelLinear,
}

#[derive(Args, Serialize)]
pub struct FeatselArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Planted instance with dimensions d,n,c,signal.
    #[arg(long, value_parser = parse_dims::<4>, required_unless_present = "data", conflicts_with = "data")]
    pub planted: Option<Dims>,
    #[arg(long, value_parser = parse_p_list, default_value = "0.1,0.3,0.5,1")]
    pub p_list: PList,
    #[arg(long, default_value_t = 1.0)]
    pub gamma: f64,
    /// Feature counts to evaluate (default 10,20,...,100 up to d).
    #[arg(long, value_delimiter = ',')]
    pub counts: Option<Vec<usize>>,
    #[arg(long, default_value_t = 5, value_parser = clap::value_parser!(u64).range(2..))]
    pub folds: u64,
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..))]
    pub repeats: u64,
    /// Iterations of every feature-selection fit.
    #[arg(long, default_value_t = 30)]
    pub iters: usize,
    #[arg(long, value_enum, default_value_t = ClassifierArg::NearestCentroid)]
    pub classifier: ClassifierArg,
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Clone, Copy, Debug, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Delta {
    Auto,
    Fixed(f64),
}

#[derive(Clone, Debug, Serialize)]
pub struct PList(pub Vec<f64>);

#[derive(Clone, Debug, Serialize)]
pub struct Gammas(pub [f64; 3]);

#[derive(Clone, Debug, Serialize)]
pub struct Dims(pub Vec<usize>);

fn parse_delta(s: &str) -> Result<Delta, String> {
    if s == "auto" {
        return Ok(Delta::Auto);
    }
    match s.parse::<f64>() {
        Ok(v) if v > 0.0 && v.is_finite() => Ok(Delta::Fixed(v)),
        _ => Err(format!("expected \"auto\" or a positive number, got {s:?}")),
    }
}

fn parse_numbers(s: &str) -> Result<Vec<f64>, String> {
    s.split(',')
        .map(|t| t.trim().parse::<f64>().map_err(|_| format!("{t:?} is not a number")))
        .collect()
}

fn parse_p_list(s: &str) -> Result<PList, String> {
    let ps = parse_numbers(s)?;
    if let Some(bad) = ps.iter().find(|p| !(**p > 0.0 && **p <= 2.0)) {
        return Err(format!("p must lie in (0, 2], got {bad}"));
    }
    for (i, p) in ps.iter().enumerate() {
        if ps[..i].contains(p) {
            return Err(format!("p={p} listed twice"));
        }
    }
    Ok(PList(ps))
}

fn parse_gammas(s: &str) -> Result<Gammas, String> {
    let g = parse_numbers(s)?;
    match g.as_slice() {
        [a, b, c] if g.iter().all(|v| *v >= 0.0 && v.is_finite()) => Ok(Gammas([*a, *b, *c])),
        _ => Err("expected three non-negative numbers".into()),
    }
}

fn parse_dims<const N: usize>(s: &str) -> Result<Dims, String> {
    let dims = s
        .split(',')
        .map(|t| t.trim().parse::<usize>().map_err(|_| format!("{t:?} is not a count")))
        .collect::<Result<Vec<_>, _>>()?;
    if dims.len() != N || dims.contains(&0) {
        return Err(format!("expected {N} positive comma-separated counts"));
    }
    Ok(Dims(dims))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Example(args) => commands::example(args),
        Command::Proximal(args) => commands::proximal(args),
        Command::Featsel(args) => commands::featsel(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            eprintln!("error: {:#}", failure.error());
            ExitCode::from(failure.code())
        }
    }
}
