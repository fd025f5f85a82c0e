use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use ubrl_core::{decimal, Criterion, Family, GridSpec};

#[derive(Debug, Parser)]
#[command(name = "ubrl", version, about = "Solve, train and explore coverage sets of utility-optimal policies")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Shipped environments.
    Env {
        #[command(subcommand)]
        action: EnvCommand,
    },
    /// Exact coverage set over a utility-parameter grid.
    Solve(SolveArgs),
    /// Learned coverage set (conditioned or multi-gamma Q-learning).
    Train(TrainArgs),
    /// Best stationary policy per CVaR level.
    Sweep(SweepArgs),
    /// Summarise a coverage set file or stored id.
    Show(ShowArgs),
    /// HTTP API (and optional static UI).
    Serve(ServeArgs),
}

#[derive(Debug, Subcommand)]
pub enum EnvCommand {
    /// List environments and their parameters.
    List,
    /// Write an environment's MDP as JSON.
    Make {
        name: String,
        /// Generator parameter override, `name=value`.
        #[arg(long = "param", value_name = "NAME=VALUE", value_parser = parse_kv)]
        params: Vec<(String, String)>,
        /// Output file (stdout if omitted).
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
#[group(required = true, multiple = false, id = "source")]
pub struct Source {
    /// Shipped environment name.
    #[arg(long)]
    pub env: Option<String>,
    /// MDP JSON file.
    #[arg(long)]
    pub mdp: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct Problem {
    #[command(flatten)]
    pub source: Source,
    /// Generator parameter override for `--env`, `name=value`.
    #[arg(long = "param", value_name = "NAME=VALUE", value_parser = parse_kv)]
    pub params: Vec<(String, String)>,
    /// Utility family whose parameter the grid varies.
    #[arg(long, value_parser = parse_family)]
    pub utility: Family,
    /// Grid as `lo:hi:count`.
    #[arg(long, value_parser = parse_grid_range)]
    pub grid: (f64, f64, usize),
    /// Fixed utility parameter, `name=value` (e.g. `penalty=4` for mining).
    #[arg(long = "fixed", value_name = "NAME=VALUE", value_parser = parse_kv)]
    pub fixed: Vec<(String, String)>,
}

impl Problem {
    pub fn grid_spec(&self) -> GridSpec {
        let (lo, hi, count) = self.grid;
        GridSpec { family: self.utility, lo, hi, count, base: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SolverArg {
    Exact,
    AugmentedVi,
    PerGammaVi,
}

#[derive(Debug, Args)]
pub struct SolveArgs {
    #[command(flatten)]
    pub problem: Problem,
    /// Defaults to per-gamma for discount, cvar for CVaR and esr otherwise.
    #[arg(long, value_parser = parse_criterion)]
    pub criterion: Option<Criterion>,
    /// Defaults to per-gamma-vi for discount, augmented-vi for non-linear
    /// ESR and exact otherwise.
    #[arg(long, value_enum)]
    pub solver: Option<SolverArg>,
    /// Accumulated-return bin width for augmented-vi; 0 keeps it exact.
    #[arg(long, default_value = "0", value_parser = parse_decimal)]
    pub bin_width: f64,
    #[arg(long, default_value = "coverage.json")]
    pub out: PathBuf,
    /// Also save the result in this store directory.
    #[arg(long)]
    pub store: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ScheduleArg {
    Constant,
    Harmonic,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub problem: Problem,
    #[arg(long)]
    pub seed: u64,
    /// Training config JSON (`episodes`, `step_size`, `epsilon`, ...);
    /// flags below override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub episodes: Option<u64>,
    #[arg(long, value_parser = parse_decimal)]
    pub step_size: Option<f64>,
    #[arg(long, value_parser = parse_decimal)]
    pub epsilon: Option<f64>,
    #[arg(long, value_parser = parse_decimal, allow_hyphen_values = true)]
    pub initial_q: Option<f64>,
    #[arg(long, value_enum)]
    pub schedule: Option<ScheduleArg>,
    #[arg(long, default_value = "coverage.json")]
    pub out: PathBuf,
    /// Training-log CSV (episode, grid point, return, utility).
    #[arg(long)]
    pub log: Option<PathBuf>,
    #[arg(long)]
    pub store: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SweepModeArg {
    Exact,
    DistTd,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub source: Source,
    #[arg(long = "param", value_name = "NAME=VALUE", value_parser = parse_kv)]
    pub params: Vec<(String, String)>,
    /// Alpha grid as `lo:hi:count`.
    #[arg(long, value_parser = parse_grid_range)]
    pub grid: (f64, f64, usize),
    #[arg(long, value_enum, default_value = "dist-td")]
    pub mode: SweepModeArg,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 101)]
    pub atoms: usize,
    #[arg(long, default_value_t = 200_000)]
    pub max_episodes: u64,
    #[arg(long, default_value = "coverage.json")]
    pub out: PathBuf,
    #[arg(long)]
    pub store: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ShowArgs {
    /// Coverage JSON file, or a stored id when `--store` is given.
    pub target: String,
    #[arg(long)]
    pub store: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, env = "UBRL_PORT", default_value_t = 8080)]
    pub port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    pub host: String,
    #[arg(long, default_value = "ubrl-store")]
    pub store: PathBuf,
    /// Directory of static files served under `/`.
    #[arg(long)]
    pub static_dir: Option<PathBuf>,
}

fn parse_kv(s: &str) -> Result<(String, String), String> {
    match s.split_once('=') {
        Some((k, v)) if !k.is_empty() && !v.is_empty() => Ok((k.to_string(), v.to_string())),
        _ => Err(format!("expected NAME=VALUE, got `{s}`")),
    }
}

fn parse_decimal(s: &str) -> Result<f64, String> {
    decimal::parse(s).map_err(|e| e.to_string())
}

fn parse_family(s: &str) -> Result<Family, String> {
    s.parse().map_err(|e: ubrl_core::Error| e.to_string())
}

fn parse_criterion(s: &str) -> Result<Criterion, String> {
    s.parse().map_err(|e: ubrl_core::Error| e.to_string())
}

fn parse_grid_range(s: &str) -> Result<(f64, f64, usize), String> {
    let parts: Vec<&str> = s.split(':').collect();
    let [lo, hi, count] = parts[..] else {
        return Err(format!("expected lo:hi:count, got `{s}`"));
    };
    let count: usize = count.parse().map_err(|_| format!("count `{count}` is not a positive integer"))?;
    Ok((parse_decimal(lo)?, parse_decimal(hi)?, count))
}
