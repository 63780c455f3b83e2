//! `speechmask`: enhance WAV files, simulate test sets, score them and
//! inspect models.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

mod commands;
mod config;

use config::Config;

/// Why a command failed; decides the exit status.
#[derive(Debug)]
pub enum Failure {
    /// Bad flags, bad configuration or invalid input data (exit 2).
    Usage(String),
    /// Some items could not be processed (exit 1).
    Runtime(String),
}

impl From<speechmask_core::Error> for Failure {
    fn from(e: speechmask_core::Error) -> Self {
        use speechmask_core::Error as E;
        match e {
            E::Usage(_) | E::Config(_) => Failure::Usage(e.to_string()),
            other => Failure::Runtime(other.to_string()),
        }
    }
}

#[derive(Parser, Debug)]
#[command(
    name = "speechmask",
    version,
    about = "Low-latency single-channel speech enhancement"
)]
struct Cli {
    /// key=value configuration file; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Worker threads for file-level parallelism (default: all cores).
    #[arg(short = 'j', long, global = true)]
    jobs: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Enhance WAV files with the baseline, GRU or U-Net engine.
    Enhance(EnhanceArgs),
    /// Generate a simulated test set of noisy mixtures and references.
    Simulate(SimulateArgs),
    /// Score enhanced files against the references of a test set.
    Eval(EvalArgs),
    /// Measure throughput and per-frame processing time.
    Bench(BenchArgs),
    /// Print the tensors and complexity of a weight file.
    InspectWeights(InspectWeightsArgs),
    /// Print the bin ranges behind the 66 band features.
    InspectLayout,
    /// Write a zero or randomly initialised weight file.
    InitWeights(InitWeightsArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum KindArg {
    Gru,
    Unet,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum FormatArg {
    /// Same encoding as the input.
    Same,
    Pcm16,
    Float32,
}

#[derive(Args, Debug, Clone, Default)]
pub struct EngineOpts {
    /// Engine: baseline, gru or unet (default baseline).
    #[arg(long)]
    pub engine: Option<String>,
    /// Weight file for the neural engines.
    #[arg(long)]
    pub weights: Option<PathBuf>,
    /// Attenuation limit in dB (default 12 for baseline, 15 for neural).
    #[arg(long)]
    pub max_atten_db: Option<f64>,
    #[arg(long)]
    pub alpha_dd: Option<f64>,
    #[arg(long)]
    pub alpha_noise: Option<f64>,
    #[arg(long)]
    pub alpha_speech: Option<f64>,
    #[arg(long)]
    pub minstat_window_s: Option<f64>,
    /// Use the previous frame's a posteriori SNR in the decision-directed term.
    #[arg(long)]
    pub dd_previous_gamma: Option<bool>,
}

#[derive(Args, Debug)]
pub struct EnhanceArgs {
    #[command(flatten)]
    pub engine: EngineOpts,
    /// Directory for the enhanced files (named after the inputs).
    #[arg(short, long)]
    pub out_dir: PathBuf,
    /// Output sample encoding.
    #[arg(long, value_enum, default_value = "same")]
    pub format: FormatArg,
    /// Input WAV files (mono, 16 or 32 kHz).
    #[arg(required = true)]
    pub inputs: Vec<PathBuf>,
}

#[derive(Args, Debug)]
pub struct SimulateArgs {
    #[arg(long)]
    pub speech_dir: PathBuf,
    #[arg(long)]
    pub noise_dir: PathBuf,
    /// Optional directory of channel impulse responses.
    #[arg(long)]
    pub ir_dir: Option<PathBuf>,
    #[arg(short, long)]
    pub out_dir: PathBuf,
    #[arg(long)]
    pub count: usize,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, allow_hyphen_values = true)]
    pub snr_min_db: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub snr_max_db: Option<f64>,
    #[arg(long)]
    pub hp_cutoff_hz: Option<f64>,
    /// Lower end of the random speech level in dB (enables level randomization).
    #[arg(long, allow_hyphen_values = true)]
    pub level_min_db: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub level_max_db: Option<f64>,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub enhanced_dir: PathBuf,
    /// Per-item table (default: <enhanced-dir>/metrics.tsv).
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// JSON summary (default: <enhanced-dir>/metrics.json).
    #[arg(long)]
    pub summary: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct BenchArgs {
    #[command(flatten)]
    pub engine: EngineOpts,
    /// Seconds of white noise to process.
    #[arg(long)]
    pub duration_s: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Args, Debug)]
pub struct InspectWeightsArgs {
    pub path: PathBuf,
}

#[derive(Args, Debug)]
pub struct InitWeightsArgs {
    #[arg(long, value_enum)]
    pub kind: KindArg,
    #[arg(short, long)]
    pub out: PathBuf,
    /// All-zero weights instead of random ones.
    #[arg(long)]
    pub zeros: bool,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Uniform range as a multiple of 1/sqrt(fan-in).
    #[arg(long, default_value_t = 1.0)]
    pub scale: f32,
}

fn run(cli: Cli) -> Result<(), Failure> {
    let cfg = match &cli.config {
        Some(p) => Config::read(p)?,
        None => Config::default(),
    };
    let jobs = cfg.pick(cli.jobs, "jobs")?;
    if jobs == Some(0) {
        return Err(Failure::Usage("--jobs must be at least 1".into()));
    }
    match cli.command {
        Command::Enhance(a) => commands::enhance(&a, &cfg, jobs),
        Command::Simulate(a) => commands::simulate(&a, &cfg, jobs),
        Command::Eval(a) => commands::eval(&a, jobs),
        Command::Bench(a) => commands::bench(&a, &cfg),
        Command::InspectWeights(a) => commands::inspect_weights(&a),
        Command::InspectLayout => commands::inspect_layout(),
        Command::InitWeights(a) => commands::init_weights(&a, &cfg),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(m)) => {
            log::error!("{m}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(m)) => {
            log::error!("{m}");
            ExitCode::FAILURE
        }
    }
}
