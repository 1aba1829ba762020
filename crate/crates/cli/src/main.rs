//! `parashape`: reproducible experiments on Brownian exit statistics from
//! parabola-shaped regions.

mod commands;
mod config;
mod error;
mod records;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::config::FileConfig;
use crate::error::{CliError, CliResult};

#[derive(Debug, Parser)]
#[command(name = "parashape", version, about = "Exit-position and exit-time tails in parabola-shaped regions")]
struct Cli {
    /// Configuration file with flat dotted keys (TOML syntax).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads for path and grid parallelism.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Output file (stdout when omitted).
    #[arg(long, short, global = true)]
    output: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Default, Args)]
pub struct RegionArgs {
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Aperture `A` of the boundary `|Y| = A x^alpha`.
    #[arg(long = "A", alias = "a-coef")]
    pub a_coef: Option<f64>,
    #[arg(long)]
    pub dim: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MethodArg {
    Crude,
    Wos,
    Splitting,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
#[value(rename_all = "snake_case")]
pub enum StatisticArg {
    AbsExit,
    ExitFirst,
    MaxRadius,
    MaxFirst,
    ExitTime,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub region: RegionArgs,
    /// Falls back to the config file, then to PARASHAPE_SEED, then 0.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_enum)]
    pub method: Option<MethodArg>,
    #[arg(long, value_enum)]
    pub statistic: Option<StatisticArg>,
    /// Comma-separated increasing thresholds.
    #[arg(long, value_delimiter = ',')]
    pub thresholds: Option<Vec<f64>>,
    /// Paths (crude) or walks (wos).
    #[arg(long)]
    pub paths: Option<usize>,
    /// Paths per splitting stage.
    #[arg(long)]
    pub n_per_level: Option<usize>,
    /// Comma-separated start point (default: (1, 0, ..., 0)).
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub start: Option<Vec<f64>>,
    #[arg(long)]
    pub dt_max: Option<f64>,
    #[arg(long)]
    pub kappa: Option<f64>,
    /// Walk-on-spheres stopping shell.
    #[arg(long)]
    pub eps_shell: Option<f64>,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    /// JSONL file of simulation records.
    pub input: PathBuf,
    /// Exponent `q` in `log p = a - b t^q` (default: the theoretical exponent for the statistic).
    #[arg(long)]
    pub q: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum EpsKindArg {
    Zero,
    Constant,
    Decaying,
    Oscillating,
}

#[derive(Debug, Args)]
pub struct PdeArgs {
    #[arg(long)]
    pub dim: Option<usize>,
    /// Comma-separated cut positions `s`.
    #[arg(long, value_delimiter = ',')]
    pub s_values: Option<Vec<f64>>,
    /// Grid intervals across the half-strip.
    #[arg(long)]
    pub nv: Option<usize>,
    /// Length of each rectangle `[s - length, s]`.
    #[arg(long)]
    pub length: Option<f64>,
    #[arg(long, value_enum)]
    pub eps_kind: Option<EpsKindArg>,
    /// Constant value or amplitude of the perturbation.
    #[arg(long, allow_hyphen_values = true)]
    pub eps_value: Option<f64>,
    #[arg(long)]
    pub eps_rate: Option<f64>,
    #[arg(long)]
    pub eps_frequency: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub eps_origin: Option<f64>,
    /// Also write the decay fit as a JSON record to this file.
    #[arg(long)]
    pub fit_output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CarlemanArgs {
    #[command(flatten)]
    pub region: RegionArgs,
    /// Overrides the cross-section eigenvalue derived from the dimension.
    #[arg(long)]
    pub lambda1: Option<f64>,
    /// Multiplies `K` (values other than 1 give a negative control).
    #[arg(long)]
    pub k_scale: Option<f64>,
    /// Comma-separated grid (default: 20 points from x0).
    #[arg(long, value_delimiter = ',')]
    pub grid: Option<Vec<f64>>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// JSONL files of fit records.
    #[arg(required = true)]
    pub inputs: Vec<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Theoretical exponents and rates.
    Predict(RegionArgs),
    /// Tail estimates, one JSONL record per threshold.
    Simulate(SimulateArgs),
    /// Rate fit of a simulated tail table.
    Fit(FitArgs),
    /// Strip PDE decay sweep.
    Pde(PdeArgs),
    /// Carleman inequality report.
    Carleman(CarlemanArgs),
    /// Fitted rates next to theoretical ones.
    Report(ReportArgs),
}

fn run(cli: Cli) -> CliResult<()> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::config("--threads must be positive"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::config(format!("cannot configure threads: {e}")))?;
    }
    let file = match &cli.config {
        Some(path) => FileConfig::load(path)?,
        None => FileConfig::default(),
    };
    let output = match &cli.output {
        Some(path) => Some(path.clone()),
        None => file.string("output.path")?.map(PathBuf::from),
    };
    let text = match &cli.command {
        Command::Predict(args) => commands::predict(args, &file)?,
        Command::Simulate(args) => commands::simulate(args, &file)?,
        Command::Fit(args) => commands::fit(args, &file)?,
        Command::Pde(args) => commands::pde(args, &file)?,
        Command::Carleman(args) => commands::carleman(args, &file)?,
        Command::Report(args) => commands::report(args)?,
    };
    records::emit(output.as_deref(), &text)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("parashape: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
