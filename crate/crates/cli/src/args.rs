use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use seqrisk::experiments::SweepAxis;
use seqrisk::{ClipPolicy, EstimatorKind};

#[derive(Debug, Parser, Serialize)]
#[command(name = "seqrisk", version, about = "Outcome-probability estimators for sequence models")]
pub struct Cli {
    /// Worker threads (default: machine parallelism).
    #[arg(long, global = true, env = "SEQRISK_WORKERS")]
    pub workers: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Command {
    /// Check a Markov model file and report every violation.
    Validate {
        #[arg(long)]
        model: PathBuf,
    },
    /// Estimate the outcome probability with one estimator.
    Estimate(EstimateArgs),
    /// Exact quantities that need no sampling.
    #[command(subcommand)]
    Oracle(OracleCommand),
    /// Estimator variances across a grid of chains.
    Sweep(SweepArgs),
    /// Histograms of repeated estimates on one chain.
    Distribution(DistributionArgs),
    /// Synthetic cohort: AUROC, Brier, calibration and equivalence ratios.
    Cohort(CohortArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum KindArg {
    Mc,
    Scope,
    Reach,
}

impl From<KindArg> for EstimatorKind {
    fn from(k: KindArg) -> Self {
        match k {
            KindArg::Mc => EstimatorKind::Mc,
            KindArg::Scope => EstimatorKind::Scope,
            KindArg::Reach => EstimatorKind::Reach,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ClipArg {
    #[default]
    None,
    Unit,
}

impl From<ClipArg> for ClipPolicy {
    fn from(c: ClipArg) -> Self {
        match c {
            ClipArg::None => ClipPolicy::None,
            ClipArg::Unit => ClipPolicy::ClipToUnit,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Csv,
    Json,
    Svg,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum AxisArg {
    Probability,
    Spontaneity,
    SampleCount,
}

impl From<AxisArg> for SweepAxis {
    fn from(a: AxisArg) -> Self {
        match a {
            AxisArg::Probability => SweepAxis::Probability,
            AxisArg::Spontaneity => SweepAxis::Spontaneity,
            AxisArg::SampleCount => SweepAxis::SampleCount,
        }
    }
}

/// A Markov model given directly or generated from a chain spec.
#[derive(Debug, Args, Serialize)]
#[group(required = true, multiple = false)]
pub struct ModelSource {
    /// Markov model JSON file.
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Chain generator spec JSON file.
    #[arg(long)]
    pub spec: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct OutputArgs {
    /// Artifact path; a manifest is written next to it.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "csv")]
    pub format: Format,
}

#[derive(Debug, Args, Serialize)]
pub struct EstimateArgs {
    #[command(flatten)]
    pub source: ModelSource,
    #[arg(long, value_enum)]
    pub kind: KindArg,
    #[arg(long)]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value = "none")]
    pub clip: ClipArg,
    /// Also write the raw sub-values as little-endian f64.
    #[arg(long)]
    pub sub_values: Option<PathBuf>,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum OracleCommand {
    /// Exact outcome probability within the horizon.
    Exact {
        #[command(flatten)]
        source: ModelSource,
    },
    /// Exact means and variances of all three estimators.
    Moments {
        #[command(flatten)]
        source: ModelSource,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Probability that an elevated-risk patient outranks a baseline one
    /// under n-sample Monte Carlo.
    Dispersion {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        p_base: f64,
        #[arg(long)]
        p_elev: f64,
        /// Decimal places printed.
        #[arg(long, default_value_t = 4)]
        digits: usize,
    },
    /// Exact sub-estimator distribution by enumeration.
    Enumerate {
        #[command(flatten)]
        source: ModelSource,
        #[arg(long, value_enum)]
        kind: KindArg,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Compare outcome probability in the standard and outcome-excluded spaces.
    Bijection {
        #[command(flatten)]
        source: ModelSource,
    },
    /// Moments of the model where SCOPE is worse than MC at any probability.
    Counterexample {
        #[arg(long)]
        p: f64,
    },
}

#[derive(Debug, Args, Serialize)]
pub struct SweepArgs {
    #[arg(long, value_enum)]
    pub axis: AxisArg,
    /// Comma-separated grid; defaults per axis.
    #[arg(long, value_delimiter = ',')]
    pub grid: Option<Vec<f64>>,
    /// Base chain spec JSON; defaults per axis.
    #[arg(long)]
    pub spec: Option<PathBuf>,
    #[arg(long, default_value_t = seqrisk::experiments::sweeps::DEFAULT_REPLICATIONS)]
    pub replications: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args, Serialize)]
pub struct DistributionArgs {
    /// Chain spec JSON; defaults to the 11-state, P = 0.5 chain.
    #[arg(long)]
    pub spec: Option<PathBuf>,
    #[arg(long, default_value_t = 10_000)]
    pub n_estimates: usize,
    #[arg(long, default_value_t = 10)]
    pub samples_per_estimate: usize,
    #[arg(long, default_value_t = 40)]
    pub bins: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args, Serialize)]
pub struct CohortArgs {
    /// Cohort spec JSON; defaults to 2000 patients and 100 timelines.
    #[arg(long)]
    pub spec: Option<PathBuf>,
    #[arg(long)]
    pub patients: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[command(flatten)]
    pub output: OutputArgs,
}
