//! `ais`: alignment importance scoring pipeline.
//!
//! Every command writes its files plus `config.resolved.toml` into `--out`.
//! Exit codes: 0 success, 2 input error, 3 numerical degeneracy that left
//! nothing to write, 4 I/O. Failures also print one JSON line on stderr.

mod commands;
mod output;
mod settings;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use output::{CliError, CliResult, OutDir};
use settings::Settings;

#[derive(Parser, Debug)]
#[command(name = "ais", version, about = "Alignment importance scores of convolutional feature maps")]
struct Cli {
    /// Output directory.
    #[arg(long, global = true, default_value = "ais-out")]
    out: PathBuf,

    /// TOML file whose keys override the command-line flags.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Worker threads (default: all cores).
    #[arg(long, global = true, env = "AIS_WORKERS")]
    workers: Option<usize>,

    /// Log progress to stderr.
    #[arg(short, long, global = true)]
    verbose: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Default)]
struct MetricArgs {
    /// Similarity metric for the full model: spearman, pearson or cosine.
    #[arg(long)]
    baseline_metric: Option<String>,
    /// Similarity metric for models with feature maps removed.
    #[arg(long)]
    variant_metric: Option<String>,
}

#[derive(Args, Debug)]
struct DatasetArgs {
    /// Dataset manifest.
    #[arg(long)]
    manifest: Option<PathBuf>,
    #[command(flatten)]
    metrics: MetricArgs,
}

#[derive(Args, Debug)]
struct MapArgs {
    /// Comma-separated image ids (default: all).
    #[arg(long, value_delimiter = ',')]
    images: Option<Vec<String>>,
    /// Feature maps to upsample: pre (stored maps) or post (after the head's max-pool).
    #[arg(long)]
    map_source: Option<String>,
    /// viridis, magma, gray or jet.
    #[arg(long)]
    colormap: Option<String>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Dataset-level score of every feature map.
    DatasetAis {
        #[command(flatten)]
        data: DatasetArgs,
        /// Also write the full-model embeddings.
        #[arg(long)]
        dump_embeddings: bool,
    },
    /// Image-level scores, one row per image.
    ImageAis {
        #[command(flatten)]
        data: DatasetArgs,
    },
    /// Greedy selection of a retained feature set on all judgment pairs.
    Select {
        #[command(flatten)]
        data: DatasetArgs,
    },
    /// Repeated k-fold out-of-sample comparison of full vs retained features.
    Crossval {
        #[command(flatten)]
        data: DatasetArgs,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        repeats: Option<usize>,
        #[arg(long)]
        folds: Option<usize>,
    },
    /// Heatmaps from image-level scores.
    Heatmap {
        #[command(flatten)]
        data: DatasetArgs,
        #[command(flatten)]
        maps: MapArgs,
        /// Output side length in pixels (default: the manifest's render size).
        #[arg(long)]
        size: Option<usize>,
        /// Compare against a second model given by --manifest-b.
        #[arg(long)]
        both_models: bool,
        #[arg(long)]
        manifest_b: Option<PathBuf>,
    },
    /// Precision-recall curves, relative risk and contour overlays against saliency maps.
    CompareSaliency {
        #[command(flatten)]
        data: DatasetArgs,
        #[command(flatten)]
        maps: MapArgs,
    },
    /// Distribution comparison of two image-level score matrices.
    Stats {
        /// `[n × K]` matrix written by image-ais.
        #[arg(long)]
        ais_a: Option<PathBuf>,
        #[arg(long)]
        ais_b: Option<PathBuf>,
        /// Histogram bins.
        #[arg(long)]
        bins: Option<usize>,
    },
    /// Plain-text summary of one or more output directories.
    Report {
        inputs: Vec<PathBuf>,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::DatasetAis { .. } => "dataset-ais",
            Command::ImageAis { .. } => "image-ais",
            Command::Select { .. } => "select",
            Command::Crossval { .. } => "crossval",
            Command::Heatmap { .. } => "heatmap",
            Command::CompareSaliency { .. } => "compare-saliency",
            Command::Stats { .. } => "stats",
            Command::Report { .. } => "report",
        }
    }

    fn settings(self) -> Settings {
        let mut s = Settings::default();
        let data = |s: &mut Settings, d: DatasetArgs| {
            s.manifest = d.manifest;
            s.baseline_metric = d.metrics.baseline_metric;
            s.variant_metric = d.metrics.variant_metric;
        };
        let maps = |s: &mut Settings, m: MapArgs| {
            s.images = m.images;
            s.map_source = m.map_source;
            s.colormap = m.colormap;
        };
        match self {
            Command::DatasetAis { data: d, dump_embeddings } => {
                data(&mut s, d);
                s.dump_embeddings = dump_embeddings.then_some(true);
            }
            Command::ImageAis { data: d } | Command::Select { data: d } => data(&mut s, d),
            Command::Crossval { data: d, seed, repeats, folds } => {
                data(&mut s, d);
                s.seed = seed;
                s.repeats = repeats;
                s.folds = folds;
            }
            Command::Heatmap { data: d, maps: m, size, both_models, manifest_b } => {
                data(&mut s, d);
                maps(&mut s, m);
                s.size = size;
                s.both_models = both_models.then_some(true);
                s.manifest_b = manifest_b;
            }
            Command::CompareSaliency { data: d, maps: m } => {
                data(&mut s, d);
                maps(&mut s, m);
            }
            Command::Stats { ais_a, ais_b, bins } => {
                s.ais_a = ais_a;
                s.ais_b = ais_b;
                s.bins = bins;
            }
            Command::Report { inputs } => s.inputs = (!inputs.is_empty()).then_some(inputs),
        }
        s
    }
}

fn run(cli: Cli) -> CliResult<()> {
    let name = cli.command.name();
    let mut settings = cli.command.settings();
    settings.workers = cli.workers;
    if let Some(path) = &cli.config {
        settings.overlay(Settings::from_toml_file(path)?);
    }
    let resolved = settings.resolved(name)?;

    if let Some(n) = settings.workers {
        if n == 0 {
            return Err(CliError::Input("workers must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Input(format!("worker pool: {e}")))?;
    }

    let out = OutDir::create(&cli.out)?;
    match name {
        "dataset-ais" => commands::ais::dataset_ais(&resolved, &out)?,
        "image-ais" => commands::ais::image_ais(&resolved, &out)?,
        "select" => commands::ais::select(&resolved, &out)?,
        "crossval" => commands::crossval::run(&resolved, &out)?,
        "heatmap" => commands::heatmap::run(&resolved, &out)?,
        "compare-saliency" => commands::saliency::run(&resolved, &out)?,
        "stats" => commands::stats::run(&resolved, &out)?,
        "report" => commands::report::run(&resolved, &out)?,
        _ => unreachable!("every subcommand is dispatched"),
    }
    out.text("config.resolved.toml", &resolved.to_toml())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = if cli.verbose { "info" } else { "warn" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.json_line());
            ExitCode::from(e.exit_code())
        }
    }
}
