mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

/// Open-set recognition for classifier activation vectors.
#[derive(Debug, Parser)]
#[command(name = "openmax", version, about)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit per-class mean activation vectors and Weibull tail models.
    Calibrate(CalibrateArgs),
    /// Print OpenMax probabilities (unknown first) for every sample.
    Score(ScoreArgs),
    /// Print one verdict per sample: class id, UNKNOWN or UNCERTAIN.
    Predict(PredictArgs),
    /// F-measure sweeps for OpenMax and SoftMax-with-threshold, plus rejection rates.
    Evaluate(EvaluateArgs),
    /// Grid search over tail size, alpha, epsilon and metric.
    Sweep(SweepArgs),
    /// Generate the synthetic benchmark partitions.
    Synth(SynthArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum MetricArg {
    Euclidean,
    Cosine,
    Eucos,
}

impl From<MetricArg> for openmax::Metric {
    fn from(m: MetricArg) -> Self {
        match m {
            MetricArg::Euclidean => openmax::Metric::Euclidean,
            MetricArg::Cosine => openmax::Metric::Cosine,
            MetricArg::Eucos => openmax::Metric::Eucos,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum WeightingArg {
    Cdf,
    Survival,
}

impl From<WeightingArg> for openmax::Weighting {
    fn from(w: WeightingArg) -> Self {
        match w {
            WeightingArg::Cdf => openmax::Weighting::Cdf,
            WeightingArg::Survival => openmax::Weighting::Survival,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum FormatArg {
    Binary,
    Csv,
}

#[derive(Debug, Args)]
pub struct MetricOpts {
    #[arg(long, value_enum, default_value = "eucos")]
    pub metric: MetricArg,
    /// Weight of the Euclidean term in the eucos metric.
    #[arg(long, default_value_t = openmax::mav::DEFAULT_EUCOS_WEIGHT)]
    pub eucos_weight: f64,
}

#[derive(Debug, Args)]
pub struct ScoringOpts {
    /// Number of top classes to revise.
    #[arg(long, default_value_t = openmax::openmax::DEFAULT_ALPHA)]
    pub alpha: usize,
    #[arg(long, value_enum, default_value = "cdf")]
    pub weighting: WeightingArg,
}

#[derive(Debug, Args)]
pub struct CalibrateArgs {
    #[arg(long)]
    pub train: PathBuf,
    #[arg(long)]
    pub model: PathBuf,
    #[command(flatten)]
    pub metric: MetricOpts,
    /// Number of largest distances in each Weibull fit.
    #[arg(long, default_value_t = openmax::openmax::DEFAULT_TAIL_SIZE)]
    pub tail_size: usize,
    /// Data format; inferred from the extension when omitted.
    #[arg(long, value_enum)]
    pub format: Option<FormatArg>,
}

#[derive(Debug, Args)]
pub struct ScoreArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[command(flatten)]
    pub scoring: ScoringOpts,
    #[arg(long, value_enum)]
    pub format: Option<FormatArg>,
    /// Write here instead of standard output.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[command(flatten)]
    pub scoring: ScoringOpts,
    /// Reject as uncertain when the winning probability is below this.
    #[arg(long, default_value_t = 0.0)]
    pub epsilon: f64,
    #[arg(long, value_enum)]
    pub format: Option<FormatArg>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub validation: PathBuf,
    #[arg(long)]
    pub openset: Option<PathBuf>,
    #[arg(long)]
    pub fooling: Option<PathBuf>,
    #[command(flatten)]
    pub scoring: ScoringOpts,
    /// Threshold grid: `start:stop:step` or a comma-separated list.
    #[arg(long, default_value = "0:1:0.01")]
    pub thresholds: String,
    #[arg(long, value_enum)]
    pub format: Option<FormatArg>,
    /// F-measure sweep CSV; standard output when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Rejection-rate CSV for the open-set and fooling partitions.
    #[arg(long)]
    pub detection_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(long)]
    pub train: PathBuf,
    #[arg(long)]
    pub validation: PathBuf,
    /// Open-set sample used for calibration; fooling data never enters the search.
    #[arg(long)]
    pub openset: PathBuf,
    #[arg(long, default_value = "5,10,20,30,40,50")]
    pub tail_sizes: String,
    #[arg(long, default_value = "1,2,5,10")]
    pub alphas: String,
    #[arg(long, default_value = "0:0.9:0.05")]
    pub epsilons: String,
    #[arg(long, default_value = "eucos")]
    pub metrics: String,
    #[arg(long, default_value_t = openmax::mav::DEFAULT_EUCOS_WEIGHT)]
    pub eucos_weight: f64,
    #[arg(long, value_enum, default_value = "cdf")]
    pub weighting: WeightingArg,
    #[arg(long, value_enum)]
    pub format: Option<FormatArg>,
    /// Full grid table CSV; standard output when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Where to save the model of the best configuration.
    #[arg(long)]
    pub best_model: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub out_dir: PathBuf,
    #[arg(long, default_value_t = 100)]
    pub classes: usize,
    #[arg(long, default_value_t = 1)]
    pub channels: usize,
    #[arg(long, default_value_t = 200)]
    pub train_per_class: usize,
    #[arg(long, default_value_t = 50)]
    pub validation_per_class: usize,
    #[arg(long, default_value_t = 2000)]
    pub openset: usize,
    #[arg(long, default_value_t = 1500)]
    pub fooling: usize,
    #[arg(long, default_value_t = 5)]
    pub group_size: usize,
    #[arg(long)]
    pub noise: Option<f64>,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    #[arg(long, value_enum, default_value = "binary")]
    pub format: FormatArg,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match commands::run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
