//! The `slide-mil` command line: one subcommand per pipeline stage.
//!
//! Exit codes: 0 success, 1 training diverged, 2 usage / validation /
//! malformed input, 3 I/O, 4 a slide without tissue tiles (other slides
//! are still processed), 5 a metric undefined on a single-class set.

mod commands;
pub mod plot;
mod report;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use slide_mil::Error;

pub const EXIT_OK: i32 = 0;
pub const EXIT_DIVERGED: i32 = 1;
pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_IO: i32 = 3;
pub const EXIT_EMPTY_TISSUE: i32 = 4;
pub const EXIT_UNDEFINED_METRIC: i32 = 5;

/// Maps every library error to its exit code.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Io(_) | Error::Image(_) => EXIT_IO,
        Error::EmptyBag(_) => EXIT_EMPTY_TISSUE,
        Error::UndefinedMetric(_) => EXIT_UNDEFINED_METRIC,
        Error::Numeric(_) | Error::Diverged { .. } => EXIT_DIVERGED,
        Error::Parse { .. }
        | Error::Validation { .. }
        | Error::Contract(_)
        | Error::Format(_)
        | Error::Truncated { .. }
        | Error::Data(_)
        | Error::Json(_) => EXIT_VALIDATION,
    }
}

#[derive(Debug, Parser)]
#[command(name = "slide-mil", version, about = "Slide-level mutation prediction with gated attention MIL")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Render synthetic slides with ground-truth tissue masks and a manifest.
    SynthSlide(SynthSlideArgs),
    /// Write a synthetic cohort of embedding bags with planted witness instances.
    SynthBags(SynthBagsArgs),
    /// Compute tissue masks for every slide in a manifest.
    Segment(SegmentArgs),
    /// Compute the kept 256x256 tile grid of every slide.
    Tile(TileArgs),
    /// Turn every slide into an embedding bag (.ebag).
    Encode(EncodeArgs),
    /// Split, cross-validate, select a model and evaluate it on the hold-out set.
    Train(TrainArgs),
    /// Score a cohort with a trained model.
    Evaluate(EvaluateArgs),
    /// Summarise one or more report.json files.
    Report(ReportArgs),
}

#[derive(Debug, Clone, Args)]
pub struct SegmentOpts {
    /// Minimum HSV saturation of a tissue pixel (exclusive).
    #[arg(long, default_value_t = 0.08)]
    pub sat_min: f64,
    /// Maximum HSV value of a tissue pixel (exclusive).
    #[arg(long, default_value_t = 0.95)]
    pub val_max: f64,
}

#[derive(Debug, Clone, Args)]
pub struct TileOpts {
    #[arg(long, default_value_t = 256)]
    pub tile_size: u32,
    /// Keep a tile when at least this fraction of it is tissue.
    #[arg(long, default_value_t = 0.5)]
    pub min_tissue: f64,
}

#[derive(Debug, Args)]
pub struct SynthSlideArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 3)]
    pub count: usize,
    /// The last N slides are rendered without any tissue.
    #[arg(long, default_value_t = 0)]
    pub blank: usize,
    #[arg(long, default_value_t = 1024)]
    pub width: u32,
    #[arg(long, default_value_t = 768)]
    pub height: u32,
    #[arg(long, default_value_t = 6)]
    pub blobs: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct SynthBagsArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 100)]
    pub n_bags: usize,
    #[arg(long, default_value_t = 16)]
    pub dim: usize,
    #[arg(long, default_value_t = 20)]
    pub min_size: usize,
    #[arg(long, default_value_t = 50)]
    pub max_size: usize,
    /// Mean of a witness instance along the signal direction.
    #[arg(long, default_value_t = 4.0)]
    pub signal: f64,
    #[arg(long, default_value_t = 1.0)]
    pub noise: f64,
    #[arg(long, default_value_t = 0.5)]
    pub positive_fraction: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct SegmentArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Worker threads; 0 uses every core.
    #[arg(long, default_value_t = 0)]
    pub jobs: usize,
    #[command(flatten)]
    pub segment: SegmentOpts,
}

#[derive(Debug, Args)]
pub struct TileArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Worker threads; 0 uses every core.
    #[arg(long, default_value_t = 0)]
    pub jobs: usize,
    #[command(flatten)]
    pub segment: SegmentOpts,
    #[command(flatten)]
    pub tiles: TileOpts,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum EncoderChoice {
    /// Deterministic hash-seeded embedding of each patch.
    Stub,
    /// Read `<slide_id>.ebag` files produced elsewhere.
    Precomputed,
}

#[derive(Debug, Args)]
pub struct EncodeArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value_t = EncoderChoice::Stub)]
    pub encoder: EncoderChoice,
    #[arg(long, default_value_t = slide_mil::encoder::DEFAULT_EMBEDDING_DIM)]
    pub dim: usize,
    /// Stub encoder seed.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Directory of precomputed bags [default: the manifest's directory].
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
    /// Worker threads; 0 uses every core.
    #[arg(long, default_value_t = 0)]
    pub jobs: usize,
    #[command(flatten)]
    pub segment: SegmentOpts,
    #[command(flatten)]
    pub tiles: TileOpts,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Directory holding `<slide_id>.ebag` [default: the manifest's directory].
    #[arg(long)]
    pub bags: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// Experiment config (JSON); missing fields take their defaults.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Overrides both the split seed and the training seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Overrides the decision threshold [config default: 0.5].
    #[arg(long)]
    pub threshold: Option<f64>,
    /// Optional external cohort evaluated with the selected model.
    #[arg(long, requires = "external_bags")]
    pub external_manifest: Option<PathBuf>,
    #[arg(long, requires = "external_manifest")]
    pub external_bags: Option<PathBuf>,
    /// Worker threads for the folds; 0 uses every core.
    #[arg(long, default_value_t = 0)]
    pub jobs: usize,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Directory holding `<slide_id>.ebag` [default: the manifest's directory].
    #[arg(long)]
    pub bags: Option<PathBuf>,
    /// Trained model (.abml).
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0.5)]
    pub threshold: f64,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// report.json files written by `train`.
    #[arg(required = true)]
    pub reports: Vec<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// Dataset name per report, in order [default: the report's directory name].
    #[arg(long = "name")]
    pub names: Vec<String>,
}

/// Parses `args` (program name first) and runs the command.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_VALIDATION } else { EXIT_OK };
        }
    };
    let outcome = match cli.command {
        Command::SynthSlide(a) => commands::synth_slide(&a),
        Command::SynthBags(a) => commands::synth_bags(&a),
        Command::Segment(a) => commands::segment(&a),
        Command::Tile(a) => commands::tile(&a),
        Command::Encode(a) => commands::encode(&a),
        Command::Train(a) => commands::train(&a),
        Command::Evaluate(a) => commands::evaluate(&a),
        Command::Report(a) => report::report(&a),
    };
    match outcome {
        Ok(code) => code,
        Err(e) => {
            log::error!("{e}");
            exit_code(&e)
        }
    }
}

pub fn init_logging() {
    let env = env_logger::Env::new().filter_or("SLIDE_MIL_LOG", "error");
    let _ = env_logger::Builder::from_env(env).format_timestamp(None).try_init();
}
