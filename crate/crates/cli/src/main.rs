mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use sgc_core::model::{History, Pooling, Spatial, Temporal};

#[derive(Parser, Debug)]
#[command(name = "sgc", version, about = "Scene-graph collision prediction pipeline")]
pub struct Cli {
    /// TOML run configuration; defaults apply to anything it leaves out.
    #[arg(long, global = true, env = "SGC_CONFIG")]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate a labeled scenario dataset.
    Gen(GenArgs),
    /// Write the scene graph of every frame as JSON, one file per clip.
    Extract(ExtractArgs),
    /// Train one model on a whole dataset.
    Train(TrainArgs),
    /// Stratified k-fold cross-validation.
    Cv(CvArgs),
    /// Evaluate a checkpoint on a dataset.
    Eval(EvalArgs),
    /// Evaluate a checkpoint on a dataset it was not trained on.
    Transfer(EvalArgs),
    /// Per-frame inference latency.
    Bench(BenchArgs),
    /// Configuration helpers.
    #[command(subcommand)]
    Config(ConfigCommand),
}

#[derive(Subcommand, Debug)]
pub enum ConfigCommand {
    /// Print the effective configuration with every default spelled out.
    Dump,
}

fn fraction(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|e| format!("{e}"))?;
    if v > 0.0 && v < 1.0 {
        Ok(v)
    } else {
        Err(format!("must lie strictly between 0 and 1, got {v}"))
    }
}

#[derive(Args, Debug)]
pub struct GenArgs {
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub clips: Option<usize>,
    /// Fraction of collision clips.
    #[arg(long, value_parser = fraction)]
    pub balance: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
}

#[derive(Args, Debug)]
pub struct ExtractArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub calibration: Option<PathBuf>,
}

/// `spatial,pooling,temporal`, e.g. `mlp,sag,lstm`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Ablation {
    pub spatial: Spatial,
    pub pooling: Pooling,
    pub temporal: Temporal,
}

fn ablation(s: &str) -> Result<Ablation, String> {
    let parts: Vec<&str> = s.split([',', '+']).map(str::trim).collect();
    let [sp, po, te] = parts[..] else {
        return Err(format!("expected spatial,pooling,temporal (e.g. mrgcn,sag,lstm), got {s:?}"));
    };
    let spatial = match sp {
        "mrgcn" => Spatial::Mrgcn,
        "mlp" => Spatial::Mlp,
        _ => return Err(format!("spatial must be mrgcn or mlp, got {sp:?}")),
    };
    let pooling = match po {
        "none" => Pooling::None,
        "topk" => Pooling::Topk,
        "sag" => Pooling::Sag,
        _ => return Err(format!("pooling must be none, topk or sag, got {po:?}")),
    };
    let temporal = match te {
        "none" => Temporal::None,
        "lstm" => Temporal::Lstm,
        _ => return Err(format!("temporal must be none or lstm, got {te:?}")),
    };
    Ok(Ablation {
        spatial,
        pooling,
        temporal,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum Preset {
    #[value(name = "620dash")]
    Dash620,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum Weighting {
    Auto,
    Uniform,
}

#[derive(Args, Debug, Default)]
pub struct ModelArgs {
    #[arg(long)]
    pub seed: Option<u64>,
    /// Row of the ablation grid as spatial,pooling,temporal.
    #[arg(long, value_parser = ablation)]
    pub ablation: Option<Ablation>,
    #[arg(long, value_enum)]
    pub preset: Option<Preset>,
    /// `full` or `window<k>`.
    #[arg(long, value_parser = |s: &str| s.parse::<History>())]
    pub history: Option<History>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long, value_enum)]
    pub weighting: Option<Weighting>,
    /// Train for the full epoch budget and keep the last epoch.
    #[arg(long)]
    pub no_early_stop: bool,
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub model: ModelArgs,
}

#[derive(Args, Debug)]
pub struct CvArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub folds: Option<usize>,
    /// Add clip-level majority-vote metrics.
    #[arg(long)]
    pub per_clip: bool,
    #[command(flatten)]
    pub model: ModelArgs,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub per_clip: bool,
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
}

#[derive(Args, Debug)]
pub struct BenchArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub dataset: PathBuf,
    /// Timed frames, after the warm-up.
    #[arg(long, default_value_t = 1000, value_parser = clap::value_parser!(u64).range(1..))]
    pub repetitions: u64,
    #[arg(long, default_value_t = 100)]
    pub warmup: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Problems with how the tool was invoked, as opposed to failures while
/// running. Exit code 2.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn exit_code(err: &anyhow::Error) -> u8 {
    if err.downcast_ref::<UsageError>().is_some() {
        return 2;
    }
    match err.downcast_ref::<sgc_core::Error>() {
        Some(sgc_core::Error::Config(_)) => 2,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
