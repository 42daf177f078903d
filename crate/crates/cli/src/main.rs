mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use config::RunConfig;

/// Filtered channel features pedestrian detector.
#[derive(Debug, Parser)]
#[command(name = "fcdet", version)]
pub struct Cli {
    /// Run configuration (TOML). Every key is optional; flags win.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Overrides the configured seed [default: 0].
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads; 0 lets rayon decide.
    #[arg(long, global = true, env = "FCDET_WORKERS", default_value_t = 0)]
    workers: usize,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate, learn, inspect or reduce filter banks.
    #[command(subcommand)]
    Filters(FiltersCmd),
    /// Train a detector with hard negative mining.
    Train(TrainArgs),
    /// Run a model over a corpus or image files.
    Detect(DetectArgs),
    /// Score detections against ground truth.
    Eval(EvalArgs),
    /// Render a synthetic corpus.
    Synth(SynthArgs),
    /// Filter usage and spatial influence of a model.
    Stats(StatsArgs),
}

#[derive(Debug, Subcommand)]
pub enum FiltersCmd {
    /// Write a generated bank.
    Generate(GenerateArgs),
    /// Learn PCA filters from corpus patches.
    Learn(LearnArgs),
    /// Print one line per filter: channel, id, size, weight sum.
    Inspect {
        bank: PathBuf,
    },
    /// Keep the most used filters of a model's bank.
    Reduce(ReduceArgs),
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    /// uniform, squares, checkerboards or random [default: checkerboards]
    #[arg(long)]
    family: Option<String>,
    /// Largest filter size in cells, ROWSxCOLS [default: 4x4]
    #[arg(long)]
    max: Option<String>,
    /// Square sizes for the squares family [default: 4]
    #[arg(long)]
    n_sizes: Option<usize>,
    /// Filter count for the random family [default: 30]
    #[arg(long)]
    count: Option<usize>,
    /// Cell side in pixels [default: 6]
    #[arg(long)]
    cell_px: Option<usize>,
    /// Feature stride in pixels [default: 6]
    #[arg(long)]
    stride_px: Option<usize>,
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PatchSource {
    /// Patches from anywhere in the images.
    All,
    /// Half the filters from background patches, half from pedestrians.
    ForegroundBackground,
}

#[derive(Debug, Args)]
pub struct LearnArgs {
    /// Corpus manifest.
    #[arg(long)]
    corpus: PathBuf,
    /// Filters per channel.
    #[arg(long, default_value_t = 4)]
    k: usize,
    #[arg(long, value_enum, default_value_t = PatchSource::All)]
    source: PatchSource,
    /// Patch locations per patch set.
    #[arg(long, default_value_t = 5000)]
    patches: usize,
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Debug, Args)]
pub struct ReduceArgs {
    #[arg(long)]
    model: PathBuf,
    /// Filters to keep.
    #[arg(long)]
    top: usize,
    /// Rank separately for every channel.
    #[arg(long)]
    per_channel: bool,
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Training corpus manifest; a synthetic corpus from the config when absent.
    #[arg(long)]
    corpus: Option<PathBuf>,
    /// Bank file; generated from the config when absent.
    #[arg(long)]
    bank: Option<PathBuf>,
    /// Comma-separated tree counts per stage [default: 32,512,1024,2048,4096]
    #[arg(long, value_delimiter = ',')]
    schedule: Option<Vec<usize>>,
    /// Tree depth [default: 2]
    #[arg(long)]
    depth: Option<usize>,
    /// discrete or real [default: discrete]
    #[arg(long)]
    variant: Option<String>,
    /// Random negatives of the first stage and mined per round [default: 10000]
    #[arg(long)]
    negatives: Option<usize>,
    /// Keep every k-th manifest image.
    #[arg(long, default_value_t = 1)]
    subsample: usize,
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Debug, Args)]
pub struct DetectArgs {
    #[arg(long)]
    model: PathBuf,
    /// Corpus manifest to run over.
    #[arg(long, conflicts_with = "images")]
    corpus: Option<PathBuf>,
    /// Image files; ids are the file stems.
    #[arg(required_unless_present = "corpus")]
    images: Vec<PathBuf>,
    /// Window step in pixels [default: 6]
    #[arg(long)]
    stride_px: Option<usize>,
    /// NMS min-area overlap; negative disables NMS [default: 0.65]
    #[arg(long)]
    nms: Option<f64>,
    /// Lowest reported score [default: -1]
    #[arg(long, allow_negative_numbers = true)]
    score_min: Option<f64>,
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    detections: PathBuf,
    /// Ground-truth corpus manifest.
    #[arg(long)]
    corpus: PathBuf,
    /// caltech-mr or kitti-ap [default: caltech-mr]
    #[arg(long)]
    protocol: Option<String>,
    /// reasonable, moderate or all [default: reasonable]
    #[arg(long)]
    subset: Option<String>,
    /// Directory for curve.csv and curve.svg.
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// train, val or test [default: train]
    #[arg(long)]
    split: Option<String>,
    /// Image count [default: 300]
    #[arg(long)]
    n_images: Option<usize>,
    /// Output directory; receives manifest.txt and images/.
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Debug, Args)]
pub struct StatsArgs {
    #[arg(long)]
    model: PathBuf,
    /// Directory for influence maps (PFM grids and SVG heatmaps).
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    if cli.workers > 0 {
        rayon::ThreadPoolBuilder::new().num_threads(cli.workers).build_global()?;
    }
    let mut cfg = RunConfig::load(cli.config.as_deref())?;
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    match cli.command {
        Command::Filters(FiltersCmd::Generate(a)) => commands::filters_generate(cfg, a),
        Command::Filters(FiltersCmd::Learn(a)) => commands::filters_learn(cfg, a),
        Command::Filters(FiltersCmd::Inspect { bank }) => commands::filters_inspect(&bank),
        Command::Filters(FiltersCmd::Reduce(a)) => commands::filters_reduce(cfg, a),
        Command::Train(a) => commands::train(cfg, a),
        Command::Detect(a) => commands::detect(cfg, a),
        Command::Eval(a) => commands::eval(cfg, a),
        Command::Synth(a) => commands::synth(cfg, a),
        Command::Stats(a) => commands::stats(&a),
    }
}
