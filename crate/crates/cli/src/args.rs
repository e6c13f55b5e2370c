use std::path::PathBuf;

use antidote_core::antidote::{AntidoteConfig, Combination, SonCenterRule};
use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(
    name = "antidote",
    version,
    about = "Antidote data for fair clustering",
    args_override_self = true,
    allow_negative_numbers = true
)]
pub struct Cli {
    /// Flat `key = value` file; its entries act as flags, command-line flags win.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Vanilla vs antidote clustering on one dataset.
    Run(RunArgs),
    /// Convex (SON) antidote over a grid of λ values.
    SweepLambda(SweepArgs),
    /// Silhouette, Davies-Bouldin and Calinski-Harabasz of a stored clustering.
    Metrics(MetricsArgs),
    /// Writes a synthetic dataset.
    GenFixture(FixtureArgs),
}

#[derive(Debug, Args)]
pub struct DataArgs {
    /// Headered CSV with one group column; other columns are features.
    #[arg(long, value_name = "CSV")]
    pub data: PathBuf,

    #[arg(long, default_value = "group")]
    pub group_column: String,

    /// Comma-separated feature columns (default: all but the group column).
    #[arg(long, value_delimiter = ',')]
    pub features: Option<Vec<String>>,

    /// Z-score every feature before clustering.
    #[arg(long, num_args = 0..=1, default_value_t = false, default_missing_value = "true")]
    pub standardize: bool,

    /// Keep a random subset of this many rows.
    #[arg(long)]
    pub subsample: Option<usize>,
}

/// A fairness threshold, or the vanilla cost of the dataset.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Alpha {
    Value(f64),
    Vanilla,
}

fn parse_alpha(s: &str) -> Result<Alpha, String> {
    if s.eq_ignore_ascii_case("vanilla") {
        return Ok(Alpha::Vanilla);
    }
    s.parse::<f64>()
        .ok()
        .filter(|a| !a.is_nan())
        .map(Alpha::Value)
        .ok_or_else(|| format!("`{s}` is neither a number nor `vanilla`"))
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum SonRuleArg {
    AllRows,
    OwnRow,
}

impl From<SonRuleArg> for SonCenterRule {
    fn from(r: SonRuleArg) -> Self {
        match r {
            SonRuleArg::AllRows => SonCenterRule::AllRows,
            SonRuleArg::OwnRow => SonCenterRule::OwnRow,
        }
    }
}

/// Outer-loop and optimizer settings shared by `run` and `sweep-lambda`.
#[derive(Debug, Args)]
pub struct SearchArgs {
    /// Fairness target; `vanilla` uses the cost of the unmodified clustering.
    #[arg(long, default_value = "0", value_parser = parse_alpha)]
    pub alpha: Alpha,

    #[arg(long, default_value_t = 0)]
    pub seed: u64,

    /// Initial |V|.
    #[arg(long, default_value_t = AntidoteConfig::default().v_start)]
    pub v_start: usize,

    /// Growth of |V| after an unsuccessful outer iteration.
    #[arg(long, default_value_t = AntidoteConfig::default().xi)]
    pub xi: usize,

    #[arg(long, default_value_t = AntidoteConfig::default().max_outer_iters)]
    pub max_outer_iters: usize,

    /// Cap on |V|/|U|.
    #[arg(long, default_value_t = AntidoteConfig::default().max_v_fraction)]
    pub max_v_fraction: f64,

    /// Embedding dimension of the random-embedding search.
    #[arg(long, default_value_t = AntidoteConfig::default().n_prime)]
    pub n_prime: usize,

    #[arg(long, default_value_t = AntidoteConfig::default().sre_stages)]
    pub sre_stages: usize,

    /// Objective evaluations per embedding stage.
    #[arg(long, default_value_t = AntidoteConfig::default().inner_budget)]
    pub inner_budget: usize,

    /// Affine relaxation weight (son+social).
    #[arg(long, default_value_t = AntidoteConfig::default().gamma)]
    pub gamma: f64,

    #[arg(long, value_enum, default_value = "all-rows")]
    pub son_rule: SonRuleArg,

    #[arg(long, default_value_t = AntidoteConfig::default().subgradient_steps)]
    pub subgradient_steps: usize,

    #[arg(long, default_value_t = AntidoteConfig::default().step_scale)]
    pub step_scale: f64,

    /// Accept antidote sets that leave a cluster without original rows.
    #[arg(long, num_args = 0..=1, default_value_t = false, default_missing_value = "true")]
    pub allow_empty_clusters: bool,

    /// Evaluate optimizer batches on all cores.
    #[arg(long, num_args = 0..=1, default_value_t = false, default_missing_value = "true")]
    pub parallel: bool,
}

impl SearchArgs {
    /// `alpha` must already be resolved to a number.
    pub fn to_config(&self, alpha: f64, lambda: f64) -> AntidoteConfig {
        let mut cfg = AntidoteConfig {
            v_start: self.v_start,
            xi: self.xi,
            alpha,
            max_outer_iters: self.max_outer_iters,
            max_v_fraction: self.max_v_fraction,
            n_prime: self.n_prime,
            sre_stages: self.sre_stages,
            inner_budget: self.inner_budget,
            seed: self.seed,
            gamma: self.gamma,
            lambda,
            son_rule: self.son_rule.into(),
            subgradient_steps: self.subgradient_steps,
            step_scale: self.step_scale,
            require_all_clusters: !self.allow_empty_clusters,
            ..AntidoteConfig::default()
        };
        cfg.racos.parallel = self.parallel;
        cfg
    }
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[command(flatten)]
    pub data: DataArgs,

    /// kmeans+balance, kmeans+social, spectral+balance or son+social.
    #[arg(long)]
    pub combination: Combination,

    /// Number of clusters (k-means, spectral).
    #[arg(long, default_value_t = 2)]
    pub k: usize,

    /// SON regularisation weight (son+social).
    #[arg(long, default_value_t = AntidoteConfig::default().lambda)]
    pub lambda: f64,

    #[command(flatten)]
    pub search: SearchArgs,

    /// Name written to the CSV `dataset` column (default: file stem).
    #[arg(long)]
    pub dataset_name: Option<String>,

    /// Result JSON; printed to stdout when neither output is given.
    #[arg(long, value_name = "FILE")]
    pub out_json: Option<PathBuf>,

    /// CSV table the run's row is appended to (header written once).
    #[arg(long, value_name = "FILE")]
    pub out_csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub data: DataArgs,

    /// Explicit comma-separated λ values; overrides the min/max/steps grid.
    #[arg(long, value_delimiter = ',')]
    pub lambdas: Option<Vec<f64>>,

    #[arg(long, default_value_t = 0.001)]
    pub lambda_min: f64,

    #[arg(long, default_value_t = 0.01)]
    pub lambda_max: f64,

    #[arg(long, default_value_t = 10)]
    pub lambda_steps: usize,

    #[command(flatten)]
    pub search: SearchArgs,

    /// Output CSV; stdout when absent.
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct MetricsArgs {
    #[command(flatten)]
    pub data: DataArgs,

    /// Column of `--data` holding cluster labels (excluded from features).
    #[arg(long, conflicts_with_all = ["labels", "centers"])]
    pub label_column: Option<String>,

    /// Headered CSV with one label per data row, read from column `label`.
    #[arg(long, value_name = "CSV", conflicts_with = "centers")]
    pub labels: Option<PathBuf>,

    /// Headered CSV of cluster centers; rows are labelled by nearest center.
    #[arg(long, value_name = "CSV")]
    pub centers: Option<PathBuf>,

    /// Output JSON; stdout when absent.
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum FixtureKind {
    /// Gaussian blobs with a skewed group mix.
    Blobs,
    /// Two evenly spaced 1-D segments, one per group.
    Line,
}

#[derive(Debug, Args)]
pub struct FixtureArgs {
    #[arg(long, value_enum, default_value = "blobs")]
    pub kind: FixtureKind,

    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,

    #[arg(long, default_value_t = 200)]
    pub n: usize,

    #[arg(long, default_value_t = 2)]
    pub d: usize,

    #[arg(long, default_value_t = 2)]
    pub groups: usize,

    /// Number of blobs (default: one per group).
    #[arg(long)]
    pub blobs: Option<usize>,

    #[arg(long, default_value_t = 0.6)]
    pub skew: f64,

    /// Distance between adjacent blob centres.
    #[arg(long, default_value_t = 3.0)]
    pub spread: f64,

    #[arg(long, default_value_t = 1.0)]
    pub std: f64,

    #[arg(long, default_value_t = 0)]
    pub seed: u64,

    /// Also write the generating blob of each row as column `blob`.
    #[arg(long, num_args = 0..=1, default_value_t = false, default_missing_value = "true")]
    pub blob_labels: bool,

    /// Points in the first segment (line).
    #[arg(long, default_value_t = 12)]
    pub left: usize,

    /// Points in the second segment (line).
    #[arg(long, default_value_t = 8)]
    pub right: usize,

    /// Spacing inside a segment (line).
    #[arg(long, default_value_t = 0.5)]
    pub step: f64,

    /// Start of the second segment (line).
    #[arg(long, default_value_t = 10.0)]
    pub gap: f64,
}
