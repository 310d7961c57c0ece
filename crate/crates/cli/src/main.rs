mod commands;
mod demo;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser, Debug)]
#[command(name = "leontief-lab", version, about = "Production-network multipliers, growth predictions and simulations")]
pub struct Cli {
    /// Worker threads for parallel sections (default: all cores).
    #[arg(long, global = true, env = "LEONTIEF_LAB_THREADS")]
    threads: Option<usize>,

    /// Write data here instead of standard output.
    #[arg(short, long, global = true)]
    output: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct TableArgs {
    /// Input-output table (long CSV: source,target,value,year).
    pub table: PathBuf,
    /// Handling of negative entries.
    #[arg(long, value_enum, default_value_t = Policy::Clamp)]
    pub policy: Policy,
    /// Fail unless row and column gross outputs agree.
    #[arg(long)]
    pub strict_balance: bool,
    /// What counts as a payment to households.
    #[arg(long, value_enum, default_value_t = Household::ValueAdded)]
    pub household: Household,
    /// Labor fraction of VALUE_ADDED rows under `--household labor`.
    #[arg(long, default_value_t = 0.5)]
    pub labor_fraction: f64,
    /// Read the dense matrix layout instead of the long layout.
    #[arg(long)]
    pub matrix: bool,
    /// Year to keep when the file holds several.
    #[arg(long)]
    pub year: Option<i32>,
}

#[derive(ValueEnum, Debug, Clone, Copy)]
pub enum Policy {
    Reject,
    Clamp,
    Net,
}

#[derive(ValueEnum, Debug, Clone, Copy)]
pub enum Household {
    ValueAdded,
    Labor,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Solve,
    Series,
    Walk,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum PredictKind {
    Returns,
    Growth,
    Covariance,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum EconomyKind {
    Chain,
    Flat,
    File,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum NumeraireArg {
    Wage,
    Gdp,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum DemoCase {
    All,
    Chain,
    Flat,
    Fig1,
    Aggregation,
    Trade,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Input coefficients A, labor shares, GDP shares and output shares.
    Coeffs {
        #[command(flatten)]
        table: TableArgs,
    },
    /// Output multipliers L and the GDP-weighted average.
    Multipliers {
        #[command(flatten)]
        table: TableArgs,
        #[arg(long, value_enum, default_value_t = Method::Solve)]
        method: Method,
        /// Random walks per industry for `--method walk`.
        #[arg(long, default_value_t = 100_000)]
        walks: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Truncation tolerance for `--method series`.
        #[arg(long, default_value_t = 1e-12)]
        tol: f64,
        /// Also report per-country averages.
        #[arg(long)]
        by_country: bool,
        /// Write `label,L,gross_output` rows for scatter plots to this file.
        #[arg(long)]
        emit_plot_data: Option<PathBuf>,
    },
    /// Model predictions from a table and improvement rates.
    Predict {
        #[arg(value_enum)]
        kind: PredictKind,
        #[command(flatten)]
        table: TableArgs,
        /// Improvement rates (CSV: country,industry,period,gamma).
        #[arg(long)]
        gamma: PathBuf,
        /// Use the full covariance of the rates instead of variances only.
        #[arg(long)]
        full: bool,
    },
    /// Per-industry variance of improvement rates next to the predicted
    /// variance of real returns.
    Covariance {
        #[command(flatten)]
        table: TableArgs,
        #[arg(long)]
        gamma: PathBuf,
        #[arg(long)]
        full: bool,
    },
    /// Merge industries and write the coarse table.
    Aggregate {
        #[command(flatten)]
        table: TableArgs,
        /// Group by the first n characters of each industry code.
        #[arg(long, conflicts_with = "map")]
        digits: Option<usize>,
        /// Explicit map (CSV: fine,coarse).
        #[arg(long)]
        map: Option<PathBuf>,
    },
    /// Zero every cross-border intermediate flow and write the table.
    CloseTrade {
        #[command(flatten)]
        table: TableArgs,
    },
    /// Open closed economies to trade and compare exact and first-order
    /// average multipliers.
    Perturb {
        /// One closed table per country.
        #[arg(required = true, num_args = 2..)]
        tables: Vec<PathBuf>,
        /// Import intensities to evaluate; every country buys this share of
        /// its inputs from abroad, split evenly across partners.
        #[arg(long, value_delimiter = ',', default_value = "0.01,0.02,0.04,0.08")]
        eps: Vec<f64>,
    },
    /// Integrate the dynamic model and emit a tidy trajectory.
    Simulate {
        #[arg(long, value_enum, default_value_t = EconomyKind::Chain)]
        economy: EconomyKind,
        /// Table for `--economy file`.
        #[arg(long)]
        table: Option<PathBuf>,
        /// Labor share of industry a for `--economy chain`.
        #[arg(long, default_value_t = 0.4)]
        labor_share_a: f64,
        /// Uniform improvement rate, or a rates CSV (first period is used).
        #[arg(long, default_value = "0.01")]
        gamma: String,
        #[arg(long, default_value_t = 1.0)]
        years: f64,
        #[arg(long, default_value_t = 1.0 / 64.0)]
        dt: f64,
        #[arg(long, value_enum, default_value_t = NumeraireArg::Wage)]
        numeraire: NumeraireArg,
    },
    /// Ordinary least squares of one column on others.
    Regress {
        input: PathBuf,
        #[arg(long)]
        x: String,
        #[arg(long)]
        y: String,
        /// Additional regressors.
        #[arg(long)]
        covariate: Vec<String>,
    },
    /// Bin points by x and report per-bin means of y.
    Bin {
        input: PathBuf,
        #[arg(long)]
        x: String,
        #[arg(long)]
        y: String,
        #[arg(long, default_value_t = 45)]
        size: usize,
    },
    /// Standardize a column within groups.
    Normalize {
        input: PathBuf,
        #[arg(long)]
        value: String,
        #[arg(long)]
        group: String,
    },
    /// Build the toy economies and check every identity.
    Demo {
        #[arg(value_enum, default_value_t = DemoCase::All)]
        case: DemoCase,
    },
}

/// Failure classes mapped to exit codes.
pub enum Failure {
    Usage(String),
    Run(String),
}

impl<E: std::error::Error> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure::Run(e.to_string())
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = e.exit_code();
            let _ = e.print();
            return ExitCode::from(code as u8);
        }
    };
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("error: --threads must be positive");
            return ExitCode::from(2);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    }
    match commands::dispatch(&cli.command, cli.output.as_deref()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("usage error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Run(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}
