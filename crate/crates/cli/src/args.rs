use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "rankset", version, about = "Ranked set sampling for population proportions")]
pub struct Cli {
    #[command(flatten)]
    pub common: Common,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// Random seed; generated and recorded in the output metadata when omitted.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads (1 forces serial execution).
    #[arg(long, global = true, env = "RANKSET_WORKERS")]
    pub workers: Option<usize>,
    /// Output file (standard output when omitted).
    #[arg(short, long, global = true)]
    pub output: Option<PathBuf>,
    /// Output format; csv for tables, json for estimate and plan by default.
    #[arg(long, global = true, value_enum)]
    pub format: Option<Format>,
    /// Leave the elapsed time out of the metadata so reruns are byte-identical.
    #[arg(long, global = true)]
    pub no_timing: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Monte Carlo RE/PSSR over a (p, m, r, lambda) grid.
    Simulate(SimulateArgs),
    /// Exact perfect-ranking strata, variances, RE and PSSR.
    Oracle(OracleArgs),
    /// Covariate-ranked sampling from a CSV dataset.
    Dataset(DatasetArgs),
    /// Point estimate and Wald interval from a sample file.
    Estimate(EstimateArgs),
    /// Sample sizes for a target interval half-width, SRS vs MSRSS.
    Plan(PlanArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DesignArg {
    Msrss,
    Rss,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Population proportions.
    #[arg(long, num_args = 1.., required_unless_present_any = ["table1", "figures"])]
    pub p: Vec<f64>,
    /// Set sizes.
    #[arg(long, num_args = 1.., required_unless_present_any = ["table1", "figures"])]
    pub m: Vec<usize>,
    /// Stages.
    #[arg(long, num_args = 1..)]
    pub r: Vec<u32>,
    /// Ranking quality: 1 perfect, 0 random, in between Dell-Clutter.
    #[arg(long, num_args = 1..)]
    pub lambda: Vec<f64>,
    /// Replications per grid point.
    #[arg(long, default_value_t = rankset::mc::DEFAULT_REPLICATIONS)]
    pub reps: usize,
    /// Cycles per sample.
    #[arg(long, default_value_t = 1)]
    pub n: usize,
    #[arg(long, value_enum, default_value_t = DesignArg::Msrss)]
    pub design: DesignArg,
    /// The perfect-ranking table grid: p in {.1,.25,.5,.75,.9}, m in {3,4,5}, r in {1..4}.
    #[arg(long, conflicts_with_all = ["p", "m", "r", "lambda", "figures"])]
    pub table1: bool,
    /// The RE-curve grid: lambda in {0.7,0.85,1}, m in {3,4,5}, r in {1..4}, p from --p or 0.1..0.9.
    #[arg(long, conflicts_with_all = ["m", "r", "lambda"])]
    pub figures: bool,
    /// Also write long-format curve data to this file.
    #[arg(long)]
    pub plot_data: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct OracleArgs {
    /// Population proportions, as decimals or ratios such as 1/3.
    #[arg(long, num_args = 1.., required = true)]
    pub p: Vec<String>,
    #[arg(long, num_args = 1.., required = true)]
    pub m: Vec<usize>,
    #[arg(long, num_args = 1.., default_values_t = [1u32])]
    pub r: Vec<u32>,
    /// Emit the stratum probabilities instead of the variances.
    #[arg(long)]
    pub strata: bool,
    /// Print exact fractions rather than decimals.
    #[arg(long)]
    pub fractions: bool,
}

#[derive(Debug, Args)]
pub struct DatasetArgs {
    /// CSV file with a header row.
    pub data: PathBuf,
    /// Column mapping file (key = value lines).
    #[arg(long)]
    pub mapping: Option<PathBuf>,
    /// Response column.
    #[arg(long)]
    pub response: Option<String>,
    /// Label counted as a success.
    #[arg(long)]
    pub success: Option<String>,
    /// Label counted as a failure.
    #[arg(long)]
    pub failure: Option<String>,
    /// Covariates to rank by (overrides the mapping file).
    #[arg(long, num_args = 1..)]
    pub covariate: Vec<String>,
    /// Missing-value policy: drop or error.
    #[arg(long)]
    pub missing: Option<String>,
    /// Covariate level order: numeric or lexical.
    #[arg(long)]
    pub covariate_order: Option<String>,
    #[arg(long, num_args = 1.., default_values_t = rankset::mc::TABLE_M)]
    pub m: Vec<usize>,
    #[arg(long, num_args = 1.., default_values_t = rankset::mc::TABLE_R)]
    pub r: Vec<u32>,
    #[arg(long, default_value_t = rankset::mc::DEFAULT_REPLICATIONS)]
    pub reps: usize,
    /// Write the dataset summary JSON to this file.
    #[arg(long)]
    pub summary: Option<PathBuf>,
    /// Only produce the summary (written to --output).
    #[arg(long, conflicts_with = "summary")]
    pub summary_only: bool,
    /// Also write long-format curve data to this file.
    #[arg(long)]
    pub plot_data: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EstimateArgs {
    /// Sample CSV with columns stage_r,rank_i,cycle_j,value.
    pub sample: PathBuf,
    #[arg(long, default_value_t = 0.95)]
    pub level: f64,
    /// With a single cycle, use p(1-p)/N as the variance.
    #[arg(long)]
    pub fallback_variance: bool,
}

#[derive(Debug, Args)]
pub struct PlanArgs {
    #[arg(long)]
    pub half_width: f64,
    #[arg(long, default_value_t = 0.95)]
    pub level: f64,
    /// Guess of the population proportion.
    #[arg(long)]
    pub p: f64,
    #[arg(long)]
    pub m: usize,
    #[arg(long, default_value_t = 1)]
    pub r: u32,
    #[arg(long, default_value_t = 1.0)]
    pub lambda: f64,
    /// Replications used to calibrate the variance when lambda < 1.
    #[arg(long, default_value_t = 20_000)]
    pub calibration_reps: usize,
}
