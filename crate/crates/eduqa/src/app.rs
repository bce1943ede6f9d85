//! Command implementations. Each returns the files it wrote.

use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use eduqa_core::choice::{
    metrics, train_nnmc, ChoiceSelector, Clem, Judgement, Metrics, Nnmc, NnmcConfig, NnmcExample,
};
use eduqa_core::corpus::{count_by_type, Corpus, CvqaRecord, Measure, TqaSet};
use eduqa_core::reader::{AttentionParams, AttentionReader, LexicalReader, Reader};
use eduqa_core::retrieval::{
    mine_pseudo_labels, train_retriever as train_dual, DenseIndex, DenseRetriever, DualEncoder, InvertedIndex,
    MiningConfig, Retriever,
};
use eduqa_core::scoring::{
    accuracy_grid, channel_eq, evaluate_cvqa as eval_cvqa, run_baseline, topic_coverage, GridSpec, Pipeline,
    PipelineConfig, ReaderKind, RetrieverKind, SelectorKind, TopicOutcome, VideoScoreMap,
};
use eduqa_core::text::EmbedModel;
use log::{info, warn};
use rayon::prelude::*;
use serde::Serialize;

use crate::artifacts::{
    ensure_dir, load_bm25, read_json, save_bm25, write_json, NnmcExampleLine, NnmcFile, VideoScoresFile, Workdir,
};
use crate::binfmt::{
    attention_from_weights, read_index, retriever_from_weights, retriever_weights, write_index, WeightFile,
};
use crate::config::RunConfig;
use crate::error::{require, Error, Result};
use crate::external::ExternalReader;
use crate::formats::{load_cvqa, load_tqa, load_videos, save_cvqa, save_tqa, save_videos};
use crate::report::{self, ReportFormat};

pub struct Ctx {
    pub wd: Workdir,
    pub cfg: RunConfig,
}

impl Ctx {
    fn pool(&self) -> Result<rayon::ThreadPool> {
        rayon::ThreadPoolBuilder::new()
            .num_threads(self.cfg.threads)
            .build()
            .map_err(|e| Error::Internal(e.to_string()))
    }

    pub fn corpus(&self) -> Result<Corpus> {
        let path = self.wd.videos();
        require(&path)?;
        let (corpus, warnings) = load_videos(&path)?;
        for w in warnings {
            warn!("{w}");
        }
        Ok(corpus)
    }

    pub fn tqa(&self) -> Result<TqaSet> {
        let path = self.wd.tqa();
        require(&path)?;
        load_tqa(&path)
    }

    pub fn cvqa(&self) -> Result<Vec<CvqaRecord>> {
        let path = self.wd.cvqa();
        require(&path)?;
        load_cvqa(&path)
    }

    pub fn embed(&self) -> Result<Arc<EmbedModel>> {
        self.cfg.embed_model()
    }

    /// Trained retriever weights when present, else the seeded initialisation.
    pub fn encoder(&self, embed: Arc<EmbedModel>) -> Result<DualEncoder> {
        let path = self.wd.retriever_weights();
        if path.exists() {
            retriever_from_weights(&WeightFile::read(&path)?, embed)
        } else {
            self.seeded_encoder(embed)
        }
    }

    fn seeded_encoder(&self, embed: Arc<EmbedModel>) -> Result<DualEncoder> {
        let t = &self.cfg.train;
        Ok(DualEncoder::seeded(
            embed,
            t.projection_dim,
            t.init_noise,
            self.cfg.seed,
        )?)
    }

    pub fn reader(&self, kind: ReaderKind, embed: &Arc<EmbedModel>) -> Result<Box<dyn Reader>> {
        let rc = &self.cfg.reader;
        Ok(match kind {
            ReaderKind::Lexical => Box::new(LexicalReader::default()),
            ReaderKind::Attention => {
                let params = match &rc.weights {
                    Some(p) => {
                        require(p)?;
                        attention_from_weights(&WeightFile::read(p)?)?
                    }
                    None => AttentionParams::seeded(embed.dim(), rc.layers, self.cfg.seed),
                };
                Box::new(AttentionReader::new(embed.clone(), params, rc.window)?)
            }
            ReaderKind::External => {
                let (program, args) = rc
                    .external_command
                    .split_first()
                    .ok_or_else(|| Error::Validation("reader.external_command must name the program to run".into()))?;
                Box::new(ExternalReader::spawn(program, args, Duration::from_secs(rc.timeout_s))?)
            }
        })
    }

    pub fn selector(&self, kind: SelectorKind, embed: &Arc<EmbedModel>) -> Result<Box<dyn ChoiceSelector>> {
        Ok(match kind {
            SelectorKind::Clem => Box::new(Clem { embed: embed.clone() }),
            SelectorKind::Nnmc => {
                let f: NnmcFile = read_json(&self.wd.nnmc_model())?;
                Box::new(Nnmc {
                    model: f.into(),
                    embed: embed.clone(),
                })
            }
        })
    }

    /// Index files `kind` needs.
    pub fn index_files(&self, kind: RetrieverKind) -> PathBuf {
        if kind.is_dense() {
            self.wd.dense_index(kind.field())
        } else {
            self.wd.bm25_index(kind.field())
        }
    }
}

/// Loaded retrieval state for one retriever kind.
pub enum LoadedRetriever {
    Bm25(InvertedIndex),
    Dense { index: DenseIndex, encoder: DualEncoder },
}

impl LoadedRetriever {
    pub fn load(ctx: &Ctx, kind: RetrieverKind, embed: &Arc<EmbedModel>) -> Result<Self> {
        let path = ctx.index_files(kind);
        require(&path)?;
        if !kind.is_dense() {
            return Ok(LoadedRetriever::Bm25(load_bm25(&path)?));
        }
        let index = read_index(&path)?;
        let encoder = ctx.encoder(embed.clone())?;
        if index.measure() != kind.field() || index.dim() != encoder.topic.projection().cols() {
            return Err(Error::Validation(format!(
                "{} does not match the current encoder; rerun `eduqa index`",
                path.display()
            )));
        }
        Ok(LoadedRetriever::Dense { index, encoder })
    }

    pub fn with<T>(&self, f: impl FnOnce(&dyn Retriever) -> T) -> T {
        match self {
            LoadedRetriever::Bm25(ix) => f(ix),
            LoadedRetriever::Dense { index, encoder } => f(&DenseRetriever {
                index,
                topic_encoder: &encoder.topic,
            }),
        }
    }
}

fn measures_of(spec: &str) -> Result<Vec<Measure>> {
    if spec == "all" {
        Ok(Measure::ALL.to_vec())
    } else {
        Ok(vec![spec.parse()?])
    }
}

pub fn ingest(ctx: &Ctx, videos: Option<&Path>, tqa: Option<&Path>, cvqa: Option<&Path>) -> Result<Vec<PathBuf>> {
    let videos = videos
        .or(ctx.cfg.paths.videos.as_deref())
        .ok_or_else(|| Error::Validation("no videos file given (--videos or paths.videos)".into()))?;
    require(videos)?;
    ensure_dir(&ctx.wd.data())?;
    let mut out = Vec::new();
    let (corpus, warnings) = load_videos(videos)?;
    for w in &warnings {
        warn!("{w}");
    }
    save_videos(&corpus, &ctx.wd.videos())?;
    info!("{} videos in {} channels", corpus.len(), corpus.channels().count());
    out.push(ctx.wd.videos());

    if let Some(p) = tqa.or(ctx.cfg.paths.tqa.as_deref()) {
        require(p)?;
        let set = load_tqa(p)?;
        for (lesson, n) in set.question_counts() {
            info!("lesson {lesson}: {n} questions");
        }
        save_tqa(&set, &ctx.wd.tqa())?;
        out.push(ctx.wd.tqa());
    }
    if let Some(p) = cvqa.or(ctx.cfg.paths.cvqa.as_deref()) {
        require(p)?;
        let records = load_cvqa(p)?;
        for r in records.iter().filter(|r| corpus.get(&r.video_id).is_none()) {
            warn!("labeled question refers to unknown video `{}`", r.video_id);
        }
        for (t, n) in count_by_type(&records) {
            info!("{t} questions: {n}");
        }
        save_cvqa(&records, &ctx.wd.cvqa())?;
        out.push(ctx.wd.cvqa());
    }
    Ok(out)
}

fn write_dense_indexes(
    ctx: &Ctx,
    corpus: &Corpus,
    encoder: &DualEncoder,
    measures: &[Measure],
) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for &m in measures {
        let path = ctx.wd.dense_index(m);
        write_index(&DenseIndex::build(corpus, m, &encoder.video)?, &path)?;
        out.push(path);
    }
    Ok(out)
}

pub fn index(ctx: &Ctx, measure: &str) -> Result<Vec<PathBuf>> {
    let measures = measures_of(measure)?;
    let corpus = ctx.corpus()?;
    let encoder = ctx.encoder(ctx.embed()?)?;
    ensure_dir(&ctx.wd.index_dir())?;
    let mut out = Vec::new();
    for &m in &measures {
        let path = ctx.wd.bm25_index(m);
        save_bm25(&InvertedIndex::build(&corpus, m)?, &path)?;
        out.push(path);
    }
    out.extend(write_dense_indexes(ctx, &corpus, &encoder, &measures)?);
    Ok(out)
}

#[derive(Debug, Serialize)]
struct TrainSummary {
    measure: String,
    instances: usize,
    positives: usize,
    negatives: usize,
    steps: usize,
    epoch_losses: Vec<f64>,
}

/// Mines pseudo-labels with BM25 over `measure`, trains both projections
/// from the seeded initialisation and rebuilds every dense index.
pub fn train_retriever(ctx: &Ctx, measure: Measure) -> Result<Vec<PathBuf>> {
    let bm25_path = ctx.wd.bm25_index(measure);
    require(&bm25_path)?;
    let corpus = ctx.corpus()?;
    let tqa = ctx.tqa()?;
    let bm25 = load_bm25(&bm25_path)?;
    let embed = ctx.embed()?;
    let p = ctx.cfg.pipeline()?;
    let reader = ctx.reader(p.reader, &embed)?;
    let selector = ctx.selector(p.selector, &embed)?;
    let mining = MiningConfig {
        top_m: ctx.cfg.train.top_m,
        measure,
        max_tokens: ctx.cfg.reader.max_tokens,
    };
    let instances = mine_pseudo_labels(&tqa, &corpus, &bm25, reader.as_ref(), selector.as_ref(), &mining)?;
    if instances.is_empty() {
        return Err(Error::Validation(
            "no question produced a positive video; nothing to train on".into(),
        ));
    }
    let mut encoder = ctx.seeded_encoder(embed)?;
    let report = train_dual(&mut encoder, &instances, &corpus, measure, &ctx.cfg.train_config()?)?;
    info!(
        "trained on {} instances, final epoch loss {:.6}",
        instances.len(),
        report.epoch_losses.last().copied().unwrap_or(0.0)
    );
    ensure_dir(&ctx.wd.models())?;
    ensure_dir(&ctx.wd.index_dir())?;
    ensure_dir(&ctx.wd.runs())?;
    let weights = ctx.wd.retriever_weights();
    retriever_weights(&encoder).write(&weights)?;
    let mut out = vec![weights];
    out.extend(write_dense_indexes(ctx, &corpus, &encoder, &Measure::ALL)?);
    let summary_path = ctx.wd.runs().join("train_report.json");
    write_json(
        &summary_path,
        &TrainSummary {
            measure: measure.to_string(),
            instances: instances.len(),
            positives: instances.iter().map(|i| i.positives.len()).sum(),
            negatives: instances.iter().map(|i| i.negatives.len()).sum(),
            steps: report.steps,
            epoch_losses: report.epoch_losses,
        },
    )?;
    out.push(summary_path);
    Ok(out)
}

pub fn train_nnmc_cmd(ctx: &Ctx, data: &Path, epochs: usize, lr: f64) -> Result<Vec<PathBuf>> {
    require(data)?;
    let text = std::fs::read_to_string(data).map_err(|e| Error::io(data, e))?;
    let mut examples = Vec::new();
    for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let e: NnmcExampleLine = serde_json::from_str(line).map_err(|e| Error::parse(data, i + 1, e.to_string()))?;
        examples.push(NnmcExample {
            answer: e.answer,
            choices: e.choices,
            gold: e.gold,
        });
    }
    let embed = ctx.embed()?;
    let model = train_nnmc(
        &examples,
        &embed,
        &NnmcConfig {
            epochs,
            lr,
            seed: ctx.cfg.seed,
        },
    )?;
    ensure_dir(&ctx.wd.models())?;
    let path = ctx.wd.nnmc_model();
    write_json(&path, &NnmcFile::from(&model))?;
    Ok(vec![path])
}

pub fn evaluate_cvqa(ctx: &Ctx, reader: ReaderKind, measure: Measure) -> Result<Vec<PathBuf>> {
    let corpus = ctx.corpus()?;
    let records = ctx.cvqa()?;
    let embed = ctx.embed()?;
    let reader = ctx.reader(reader, &embed)?;
    let ev = eval_cvqa(&records, &corpus, reader.as_ref(), measure)?;
    ensure_dir(&ctx.wd.runs())?;
    let runs = ctx.wd.runs();
    let mut groups: Vec<(String, Metrics)> = vec![("all".into(), ev.overall.clone())];
    groups.extend(ev.by_type.iter().map(|(t, m)| (format!("qtype={t}"), m.clone())));
    groups.extend(ev.by_modality.iter().map(|(t, m)| (format!("modality={t}"), m.clone())));
    let out = vec![
        runs.join("cvqa_judgements.csv"),
        runs.join("cvqa_metrics.csv"),
        runs.join("cvqa_discrepancies.csv"),
    ];
    report::write_judgements(&out[0], &ev.judgements)?;
    report::write_metrics(&out[1], &groups)?;
    report::write_discrepancies(&out[2], &ev.discrepancies)?;
    info!(
        "accuracy {:.4}, precision {:.4}, f1_token {:.4}, {} discrepancies",
        ev.overall.accuracy,
        ev.overall.precision,
        ev.overall.f1_token,
        ev.discrepancies.len()
    );
    Ok(out)
}

/// Runs the configured pipeline over every topic on the worker pool and
/// merges results in topic order.
pub fn run_pipeline(ctx: &Ctx, cfg: &PipelineConfig, corpus: &Corpus, tqa: &TqaSet) -> Result<Vec<TopicOutcome>> {
    let embed = ctx.embed()?;
    let loaded = LoadedRetriever::load(ctx, cfg.retriever, &embed)?;
    let reader = ctx.reader(cfg.reader, &embed)?;
    let selector = ctx.selector(cfg.selector, &embed)?;
    let pool = ctx.pool()?;
    loaded.with(|retriever| {
        let mut p = Pipeline::new(
            corpus,
            retriever,
            reader.as_ref(),
            selector.as_ref(),
            cfg.k,
            cfg.measure,
        );
        p.max_tokens = ctx.cfg.reader.max_tokens;
        pool.install(|| {
            tqa.topics()
                .par_iter()
                .map(|t| p.answer_topic(tqa, &t.topic_id))
                .collect::<eduqa_core::Result<Vec<_>>>()
        })
        .map_err(Error::from)
    })
}

pub fn run_tqa(ctx: &Ctx) -> Result<Vec<PathBuf>> {
    let cfg = ctx.cfg.pipeline()?;
    require(&ctx.index_files(cfg.retriever))?;
    let corpus = ctx.corpus()?;
    let tqa = ctx.tqa()?;
    let outcomes = run_pipeline(ctx, &cfg, &corpus, &tqa)?;
    let judgements: Vec<Judgement> = outcomes.iter().flat_map(|o| o.judgements.iter().cloned()).collect();
    let scores = VideoScoreMap::from_outcomes(&outcomes);
    ensure_dir(&ctx.wd.runs())?;
    let runs = ctx.wd.runs();
    let out = vec![
        runs.join("tqa_judgements.csv"),
        runs.join("tqa_metrics.csv"),
        ctx.wd.video_scores(),
        runs.join("topic_coverage.csv"),
    ];
    report::write_judgements(&out[0], &judgements)?;
    if judgements.is_empty() {
        return Err(Error::Validation("the textbook set has no questions".into()));
    }
    let m = metrics(&judgements)?;
    report::write_metrics(&out[1], &[("all".into(), m.clone())])?;
    write_json(&out[2], &VideoScoresFile::from_map(&scores))?;
    report::write_topic_coverage(&out[3], &topic_coverage(&scores.details, &tqa))?;
    info!("accuracy {:.2}% over {} questions", 100.0 * m.accuracy, m.total);
    Ok(out)
}

pub fn baseline(ctx: &Ctx) -> Result<Vec<PathBuf>> {
    let cfg = ctx.cfg.pipeline()?;
    let tqa = ctx.tqa()?;
    let embed = ctx.embed()?;
    let reader = ctx.reader(cfg.reader, &embed)?;
    let selector = ctx.selector(cfg.selector, &embed)?;
    let (judgements, m) = run_baseline(tqa.questions(), reader.as_ref(), selector.as_ref())?;
    ensure_dir(&ctx.wd.runs())?;
    let out = vec![
        ctx.wd.runs().join("baseline_judgements.csv"),
        ctx.wd.runs().join("baseline_metrics.csv"),
    ];
    report::write_judgements(&out[0], &judgements)?;
    report::write_metrics(&out[1], &[("baseline".into(), m.clone())])?;
    info!("baseline accuracy {:.2}%", 100.0 * m.accuracy);
    Ok(out)
}

fn channel_reports(ctx: &Ctx, corpus: &Corpus, tqa: &TqaSet, svg: bool) -> Result<Vec<PathBuf>> {
    let scores = read_json::<VideoScoresFile>(&ctx.wd.video_scores())?.into_map()?;
    let (reports, warnings) = channel_eq(&scores, corpus);
    for w in warnings {
        warn!("{w}");
    }
    ensure_dir(&ctx.wd.reports())?;
    let dir = ctx.wd.reports();
    let mut out = vec![dir.join("report_channels.csv"), dir.join("channel_questions.csv")];
    report::write_channels(&out[0], &reports)?;
    report::write_channel_questions(&out[1], &reports, tqa.questions().len())?;
    if svg {
        let scatter = dir.join("channels_eq.svg");
        report::write_text(&scatter, &report::scatter_svg(&reports))?;
        let total = tqa.questions().len().max(1) as f64;
        let bars: Vec<(String, f64)> = reports
            .iter()
            .map(|r| (r.name.clone(), 100.0 * r.questions_answered as f64 / total))
            .collect();
        let bar = dir.join("channel_questions.svg");
        report::write_text(
            &bar,
            &report::bar_svg("Percentage of all loaded textbook questions answered", &bars, 100.0),
        )?;
        out.extend([scatter, bar]);
    }
    Ok(out)
}

pub fn score_channels(ctx: &Ctx) -> Result<Vec<PathBuf>> {
    require(&ctx.wd.video_scores())?;
    let corpus = ctx.corpus()?;
    let tqa = ctx.tqa()?;
    channel_reports(ctx, &corpus, &tqa, false)
}

fn kind_label(kind: RetrieverKind) -> (&'static str, &'static str) {
    match kind {
        RetrieverKind::Bm25Transcript => ("BM25 Transcript Retriever", "Transcript"),
        RetrieverKind::Bm25Caption => ("BM25 Caption Retriever", "Caption"),
        RetrieverKind::DenseTranscript => ("Dense Transcript Retriever", "Transcript"),
        RetrieverKind::DenseCaption => ("Dense Caption Retriever", "Caption"),
        RetrieverKind::DenseMultimodal => ("Multi-modal Retriever", "Transcript + Caption"),
    }
}

/// Accuracy grid over every retriever whose index exists, plus topic
/// coverage and channel reports when pipeline scores are available.
pub fn report(ctx: &Ctx, format: ReportFormat) -> Result<Vec<PathBuf>> {
    let cfg = ctx.cfg.pipeline()?;
    let kinds: Vec<RetrieverKind> = RetrieverKind::ALL
        .into_iter()
        .filter(|&k| ctx.index_files(k).exists())
        .collect();
    if kinds.is_empty() {
        return Err(Error::Missing(ctx.index_files(cfg.retriever)));
    }
    let corpus = ctx.corpus()?;
    let tqa = ctx.tqa()?;
    let embed = ctx.embed()?;
    let reader = ctx.reader(cfg.reader, &embed)?;
    let selector = ctx.selector(cfg.selector, &embed)?;
    let training = match cfg.reader {
        ReaderKind::Lexical => "none".to_string(),
        ReaderKind::Attention => ctx
            .cfg
            .reader
            .weights
            .as_deref()
            .and_then(Path::file_name)
            .map_or("seeded".to_string(), |n| n.to_string_lossy().into_owned()),
        ReaderKind::External => "external".to_string(),
    };
    let trained_retriever = ctx.wd.retriever_weights().exists();
    let loaded = kinds
        .iter()
        .map(|&k| LoadedRetriever::load(ctx, k, &embed))
        .collect::<Result<Vec<_>>>()?;
    let dense: Vec<(RetrieverKind, DenseRetriever<'_>)> = kinds
        .iter()
        .zip(&loaded)
        .filter_map(|(&k, l)| match l {
            LoadedRetriever::Dense { index, encoder } => Some((
                k,
                DenseRetriever {
                    index,
                    topic_encoder: &encoder.topic,
                },
            )),
            LoadedRetriever::Bm25(_) => None,
        })
        .collect();
    let specs: Vec<GridSpec<'_>> = kinds
        .iter()
        .zip(&loaded)
        .map(|(&k, l)| {
            let retriever: &dyn Retriever = match l {
                LoadedRetriever::Bm25(ix) => ix,
                LoadedRetriever::Dense { .. } => &dense.iter().find(|(d, _)| *d == k).expect("dense entry").1,
            };
            let (name, measure) = kind_label(k);
            let training_dataset = if k.is_dense() && trained_retriever {
                format!("{training}; retriever: TQA pseudo-labels")
            } else {
                training.clone()
            };
            GridSpec {
                label: format!("{name} + {} + {}", reader.name(), selector.name().to_uppercase()),
                retrieval_measure: measure.to_string(),
                training_dataset,
                retriever,
                reader: reader.as_ref(),
                selector: selector.as_ref(),
            }
        })
        .collect();
    let pool = ctx.pool()?;
    let rows = pool.install(|| {
        specs
            .par_iter()
            .map(|s| accuracy_grid(std::slice::from_ref(s), &tqa, &corpus).map(|mut v| v.remove(0)))
            .collect::<eduqa_core::Result<Vec<_>>>()
    })?;
    ensure_dir(&ctx.wd.reports())?;
    let dir = ctx.wd.reports();
    let grid = dir.join("grid.csv");
    report::write_grid(&grid, &rows)?;
    let mut out = vec![grid];
    let svg = format == ReportFormat::Svg;

    if ctx.wd.video_scores().exists() {
        let scores = read_json::<VideoScoresFile>(&ctx.wd.video_scores())?.into_map()?;
        let coverage = topic_coverage(&scores.details, &tqa);
        let cov_path = dir.join("topic_coverage.csv");
        report::write_topic_coverage(&cov_path, &coverage)?;
        out.push(cov_path);
        if svg {
            let bars: Vec<(String, f64)> = coverage.iter().map(|c| (c.title.clone(), 100.0 * c.fraction)).collect();
            let p = dir.join("topic_coverage.svg");
            report::write_text(
                &p,
                &report::bar_svg("Textbook topics covered (% of questions)", &bars, 100.0),
            )?;
            out.push(p);
        }
        out.extend(channel_reports(ctx, &corpus, &tqa, svg)?);
    } else {
        warn!(
            "{} not found; run `eduqa run-tqa` for topic coverage and channel reports",
            ctx.wd.video_scores().display()
        );
    }
    Ok(out)
}
