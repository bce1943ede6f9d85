//! Command-line interface. Exit codes: 0 success, 2 invalid input or
//! missing prerequisite, 1 internal error.

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use eduqa_core::corpus::Measure;
use eduqa_core::scoring::ReaderKind;

use crate::app::{self, Ctx};
use crate::artifacts::{ensure_dir, Workdir};
use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::manifest::ManifestWriter;
use crate::report::ReportFormat;

#[derive(Debug, Parser)]
#[command(
    name = "eduqa",
    version,
    about = "Score the academic quality of video channels with textbook questions"
)]
pub struct Cli {
    /// Directory holding data, indexes, models, runs and reports
    #[arg(long, env = "EDUQA_WORKDIR", default_value = ".", global = true)]
    pub workdir: PathBuf,
    /// TOML config file [default: <workdir>/eduqa.toml when present]
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Seed for every seeded component [default: 0]
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads, 0 for one per core [default: 0]
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Log level: error, warn, info, debug or trace [default: info]
    #[arg(long, global = true)]
    pub log_level: Option<String>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Validate input files and store canonical copies under <workdir>/data
    Ingest {
        /// Videos, one JSON object per line [default: paths.videos]
        #[arg(long)]
        videos: Option<PathBuf>,
        /// Textbook lessons, topics and questions [default: paths.tqa]
        #[arg(long)]
        tqa: Option<PathBuf>,
        /// Labeled video questions, one JSON object per line [default: paths.cvqa]
        #[arg(long)]
        cvqa: Option<PathBuf>,
    },
    /// Build BM25 and dense indexes
    Index {
        /// transcript, caption, joint or all
        #[arg(long, default_value = "all")]
        measure: String,
    },
    /// Mine pseudo-labels with BM25 and train the dense retriever
    TrainRetriever {
        /// Training epochs [default: 20]
        #[arg(long)]
        epochs: Option<usize>,
        /// Learning rate [default: 1.0]
        #[arg(long)]
        lr: Option<f64>,
        /// Batches accumulated per optimizer step [default: 8]
        #[arg(long)]
        accum: Option<usize>,
        /// Instances per batch [default: 4]
        #[arg(long)]
        batch_size: Option<usize>,
        /// sgd or adamw [default: sgd]
        #[arg(long)]
        optimizer: Option<String>,
        /// Decoupled weight decay [default: 0]
        #[arg(long)]
        weight_decay: Option<f64>,
        /// BM25 candidates read per question [default: 20]
        #[arg(long)]
        top_m: Option<usize>,
        /// Field used for mining and training [default: joint]
        #[arg(long, default_value = "joint")]
        measure: String,
    },
    /// Train the choice classifier from labeled (answer, choices, gold) lines
    TrainNnmc {
        /// JSON lines with keys answer, choices, gold
        #[arg(long)]
        data: PathBuf,
        /// Training epochs
        #[arg(long, default_value_t = 30)]
        epochs: usize,
        /// Learning rate
        #[arg(long, default_value_t = 0.5)]
        lr: f64,
    },
    /// Read every labeled video question against its own video
    EvaluateCvqa {
        /// lexical, attention or external [default: pipeline.reader]
        #[arg(long)]
        reader: Option<String>,
        /// Context: transcript, caption or joint
        #[arg(long, default_value = "transcript")]
        measure: String,
    },
    /// Retrieve, read, select and judge every textbook question
    RunTqa {
        /// Videos read per topic [default: 3]
        #[arg(short = 'k', long = "k")]
        k: Option<usize>,
        /// bm25-transcript, bm25-caption, dense-transcript, dense-caption or dense-multimodal [default: dense-multimodal]
        #[arg(long)]
        retriever: Option<String>,
        /// Reading context: transcript, caption or joint [default: joint]
        #[arg(long)]
        measure: Option<String>,
        /// clem or nnmc [default: clem]
        #[arg(long)]
        selector: Option<String>,
        /// lexical, attention or external [default: lexical]
        #[arg(long)]
        reader: Option<String>,
    },
    /// Answer every textbook question against a fixed nonsense sentence
    Baseline {
        /// lexical, attention or external [default: lexical]
        #[arg(long)]
        reader: Option<String>,
        /// clem or nnmc [default: clem]
        #[arg(long)]
        selector: Option<String>,
    },
    /// Compute channel academic quality from the last run-tqa scores
    ScoreChannels,
    /// Write the accuracy grid, topic coverage and channel reports
    Report {
        /// csv, or svg for CSV plus charts
        #[arg(long, value_enum, default_value = "csv")]
        format: ReportFormat,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Ingest { .. } => "ingest",
            Command::Index { .. } => "index",
            Command::TrainRetriever { .. } => "train-retriever",
            Command::TrainNnmc { .. } => "train-nnmc",
            Command::EvaluateCvqa { .. } => "evaluate-cvqa",
            Command::RunTqa { .. } => "run-tqa",
            Command::Baseline { .. } => "baseline",
            Command::ScoreChannels => "score-channels",
            Command::Report { .. } => "report",
        }
    }
}

fn set<T>(slot: &mut T, v: Option<T>) {
    if let Some(v) = v {
        *slot = v;
    }
}

/// Config file values with command-line flags applied on top.
pub fn effective_config(cli: &Cli) -> Result<RunConfig> {
    let wd = Workdir::new(&cli.workdir);
    let mut cfg = match &cli.config {
        Some(p) => {
            crate::error::require(p)?;
            RunConfig::load(p)?
        }
        None if wd.default_config().is_file() => RunConfig::load(&wd.default_config())?,
        None => RunConfig::default(),
    };
    set(&mut cfg.seed, cli.seed);
    set(&mut cfg.threads, cli.threads);
    set(&mut cfg.log_level, cli.log_level.clone());
    let p = &mut cfg.pipeline;
    match &cli.command {
        Command::TrainRetriever {
            epochs,
            lr,
            accum,
            batch_size,
            optimizer,
            weight_decay,
            top_m,
            ..
        } => {
            let t = &mut cfg.train;
            set(&mut t.epochs, *epochs);
            set(&mut t.lr, *lr);
            set(&mut t.accum, *accum);
            set(&mut t.batch_size, *batch_size);
            set(&mut t.optimizer, optimizer.clone());
            set(&mut t.weight_decay, *weight_decay);
            set(&mut t.top_m, *top_m);
        }
        Command::EvaluateCvqa { reader, .. } => set(&mut p.reader, reader.clone()),
        Command::RunTqa {
            k,
            retriever,
            measure,
            selector,
            reader,
        } => {
            set(&mut p.k, *k);
            set(&mut p.retriever, retriever.clone());
            set(&mut p.measure, measure.clone());
            set(&mut p.selector, selector.clone());
            set(&mut p.reader, reader.clone());
        }
        Command::Baseline { reader, selector } => {
            set(&mut p.reader, reader.clone());
            set(&mut p.selector, selector.clone());
        }
        _ => {}
    }
    cfg.pipeline()?;
    Ok(cfg)
}

fn inputs(ctx: &Ctx, cmd: &Command) -> Vec<PathBuf> {
    let wd = &ctx.wd;
    let mut v: Vec<PathBuf> = match cmd {
        Command::Ingest { videos, tqa, cvqa } => {
            let paths = &ctx.cfg.paths;
            [
                videos.clone().or(paths.videos.clone()),
                tqa.clone().or(paths.tqa.clone()),
                cvqa.clone().or(paths.cvqa.clone()),
            ]
            .into_iter()
            .flatten()
            .collect()
        }
        Command::TrainNnmc { data, .. } => vec![data.clone()],
        Command::EvaluateCvqa { .. } => vec![wd.videos(), wd.cvqa()],
        Command::ScoreChannels => vec![wd.videos(), wd.tqa(), wd.video_scores()],
        _ => {
            let mut v = vec![wd.videos(), wd.tqa(), wd.retriever_weights(), wd.nnmc_model()];
            for m in Measure::ALL {
                v.push(wd.bm25_index(m));
                v.push(wd.dense_index(m));
            }
            v
        }
    };
    v.extend(ctx.cfg.embedding.vectors.clone());
    v.extend(ctx.cfg.reader.weights.clone());
    v
}

fn execute(ctx: &Ctx, cmd: &Command) -> Result<Vec<PathBuf>> {
    match cmd {
        Command::Ingest { videos, tqa, cvqa } => app::ingest(ctx, videos.as_deref(), tqa.as_deref(), cvqa.as_deref()),
        Command::Index { measure } => app::index(ctx, measure),
        Command::TrainRetriever { measure, .. } => app::train_retriever(ctx, measure.parse()?),
        Command::TrainNnmc { data, epochs, lr } => app::train_nnmc_cmd(ctx, data, *epochs, *lr),
        Command::EvaluateCvqa { measure, .. } => {
            let reader: ReaderKind = ctx.cfg.pipeline.reader.parse()?;
            app::evaluate_cvqa(ctx, reader, measure.parse()?)
        }
        Command::RunTqa { .. } => app::run_tqa(ctx),
        Command::Baseline { .. } => app::baseline(ctx),
        Command::ScoreChannels => app::score_channels(ctx),
        Command::Report { format } => app::report(ctx, *format),
    }
}

fn init_logging(level: &str) {
    let _ = env_logger::Builder::new()
        .parse_filters(level)
        .format_timestamp(None)
        .target(env_logger::Target::Stderr)
        .try_init();
}

/// Parses `args`, runs the command and maps the outcome to an exit code.
pub fn run<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run_cli(&cli) {
        Ok(outputs) => {
            for o in outputs {
                println!("{}", o.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

pub fn run_cli(cli: &Cli) -> Result<Vec<PathBuf>> {
    let cfg = effective_config(cli)?;
    init_logging(&cfg.log_level);
    let ctx = Ctx {
        wd: Workdir::new(&cli.workdir),
        cfg,
    };
    ensure_dir(&ctx.wd.root)?;
    let config_json = serde_json::to_value(&ctx.cfg).map_err(|e| Error::Internal(e.to_string()))?;
    let manifest = ManifestWriter::start(
        &ctx.wd.root,
        cli.command.name(),
        ctx.cfg.seed,
        ctx.cfg.digest(),
        config_json,
        &inputs(&ctx, &cli.command),
    )?;
    match execute(&ctx, &cli.command) {
        Ok(outputs) => {
            manifest.finish(&outputs)?;
            Ok(outputs)
        }
        Err(e) => {
            manifest.fail(&e);
            Err(e)
        }
    }
}

/// Directory the manifest of `command` is written to.
pub fn manifest_path(workdir: &Path, command: &str) -> PathBuf {
    workdir.join(format!("manifest-{command}.json"))
}
