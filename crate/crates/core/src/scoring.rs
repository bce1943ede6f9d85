//! Retrieve → read → select → judge orchestration and the aggregate
//! reports built on it: per-video scores, accuracy grids, topic coverage,
//! the fixed-sentence baseline and channel academic quality (EQ).

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use crate::choice::{metrics, ChoiceSelector, Judgement, Metrics, StemMatch};
use crate::corpus::{
    format_timestamp, Corpus, CvqaRecord, Measure, Modality, QuestionType, TqaQuestion, TqaSet, Warning,
};
use crate::error::{Error, Result};
use crate::reader::{Reader, ReaderInput, DEFAULT_MAX_TOKENS};
use crate::retrieval::Retriever;

/// Context used by the baseline instead of retrieved videos.
pub const BASELINE_TEXT: &str = "Colorless green ideas sleep furiously";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum RetrieverKind {
    Bm25Transcript,
    Bm25Caption,
    DenseTranscript,
    DenseCaption,
    DenseMultimodal,
}

impl RetrieverKind {
    pub const ALL: [RetrieverKind; 5] = [
        RetrieverKind::Bm25Transcript,
        RetrieverKind::Bm25Caption,
        RetrieverKind::DenseTranscript,
        RetrieverKind::DenseCaption,
        RetrieverKind::DenseMultimodal,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            RetrieverKind::Bm25Transcript => "bm25-transcript",
            RetrieverKind::Bm25Caption => "bm25-caption",
            RetrieverKind::DenseTranscript => "dense-transcript",
            RetrieverKind::DenseCaption => "dense-caption",
            RetrieverKind::DenseMultimodal => "dense-multimodal",
        }
    }

    /// Field the retriever indexes.
    pub fn field(self) -> Measure {
        match self {
            RetrieverKind::Bm25Transcript | RetrieverKind::DenseTranscript => Measure::Transcript,
            RetrieverKind::Bm25Caption | RetrieverKind::DenseCaption => Measure::Caption,
            RetrieverKind::DenseMultimodal => Measure::Joint,
        }
    }

    pub fn is_dense(self) -> bool {
        !matches!(self, RetrieverKind::Bm25Transcript | RetrieverKind::Bm25Caption)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum SelectorKind {
    Clem,
    Nnmc,
}

impl SelectorKind {
    pub fn as_str(self) -> &'static str {
        match self {
            SelectorKind::Clem => "clem",
            SelectorKind::Nnmc => "nnmc",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum ReaderKind {
    Lexical,
    Attention,
    External,
}

impl ReaderKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ReaderKind::Lexical => "lexical",
            ReaderKind::Attention => "attention",
            ReaderKind::External => "external",
        }
    }
}

macro_rules! str_enum {
    ($ty:ty, $what:literal, [$($v:expr),+]) => {
        impl FromStr for $ty {
            type Err = Error;
            fn from_str(s: &str) -> Result<Self> {
                $(if s == $v.as_str() { return Ok($v); })+
                Err(Error::invalid($what, format!("`{s}` is not one of {}", [$($v.as_str()),+].join(", "))))
            }
        }

        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }
    };
}

str_enum!(
    RetrieverKind,
    "retriever",
    [
        RetrieverKind::Bm25Transcript,
        RetrieverKind::Bm25Caption,
        RetrieverKind::DenseTranscript,
        RetrieverKind::DenseCaption,
        RetrieverKind::DenseMultimodal
    ]
);
str_enum!(SelectorKind, "selector", [SelectorKind::Clem, SelectorKind::Nnmc]);
str_enum!(
    ReaderKind,
    "reader",
    [ReaderKind::Lexical, ReaderKind::Attention, ReaderKind::External]
);

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PipelineConfig {
    pub retriever: RetrieverKind,
    pub k: usize,
    pub reader: ReaderKind,
    /// Context the reader sees.
    pub measure: Measure,
    pub selector: SelectorKind,
    pub seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            retriever: RetrieverKind::DenseMultimodal,
            k: 3,
            reader: ReaderKind::Lexical,
            measure: Measure::Joint,
            selector: SelectorKind::Clem,
            seed: 0,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::invalid("k", "must be at least 1"));
        }
        Ok(())
    }
}

/// One question read against one retrieved video.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Detail {
    pub topic_id: String,
    pub question_id: String,
    pub video_id: String,
    pub channel_id: String,
    /// 0-based retrieval rank.
    pub rank: usize,
    pub predicted: String,
    pub selected_index: Option<usize>,
    pub answered: bool,
    pub correct: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TopicOutcome {
    pub topic_id: String,
    pub retrieved: Vec<(String, f64)>,
    pub judgements: Vec<Judgement>,
    pub details: Vec<Detail>,
}

/// Reads `context`, maps the answer onto a choice and judges it.
pub fn judge_question(
    reader: &dyn Reader,
    selector: &dyn ChoiceSelector,
    context: &str,
    question: &TqaQuestion,
    max_tokens: usize,
) -> Result<Judgement> {
    let mut j = Judgement {
        question_id: question.question_id.clone(),
        predicted: String::new(),
        gold: String::from(question.gold()),
        selected_index: None,
        gold_index: Some(question.correct_index),
        answered: false,
        correct: false,
    };
    if context.trim().is_empty() {
        return Ok(j);
    }
    let mut input = ReaderInput::new(context, question.text.as_str());
    input.max_tokens = max_tokens;
    let ans = reader.read(&input)?;
    if ans.is_abstention() {
        return Ok(j);
    }
    let sel = selector.select(&ans.text, &question.choices)?;
    j.predicted = ans.text;
    j.selected_index = Some(sel);
    j.answered = true;
    j.correct = sel == question.correct_index;
    Ok(j)
}

pub struct Pipeline<'a> {
    pub corpus: &'a Corpus,
    pub retriever: &'a dyn Retriever,
    pub reader: &'a dyn Reader,
    pub selector: &'a dyn ChoiceSelector,
    pub k: usize,
    pub measure: Measure,
    pub max_tokens: usize,
}

impl<'a> Pipeline<'a> {
    pub fn new(
        corpus: &'a Corpus,
        retriever: &'a dyn Retriever,
        reader: &'a dyn Reader,
        selector: &'a dyn ChoiceSelector,
        k: usize,
        measure: Measure,
    ) -> Self {
        Pipeline {
            corpus,
            retriever,
            reader,
            selector,
            k,
            measure,
            max_tokens: DEFAULT_MAX_TOKENS,
        }
    }

    /// Retrieves the top-k videos for the topic context and reads every
    /// question against each of them. A question is correct when any of the
    /// k videos yields the correct choice.
    pub fn answer_topic(&self, tqa: &TqaSet, topic_id: &str) -> Result<TopicOutcome> {
        let topic = tqa.topic(topic_id).ok_or_else(|| Error::UnknownId {
            kind: "topic",
            id: String::from(topic_id),
        })?;
        let retrieved = self.retriever.retrieve_topk(&topic.context, self.k)?;
        let mut videos = Vec::with_capacity(retrieved.len());
        for (vid, _) in &retrieved {
            let v = self.corpus.get(vid).ok_or_else(|| Error::UnknownId {
                kind: "video",
                id: vid.clone(),
            })?;
            videos.push((v, v.text(self.measure)));
        }
        let mut judgements = Vec::new();
        let mut details = Vec::new();
        for q in tqa.topic_questions(topic) {
            let mut per_video = Vec::with_capacity(videos.len());
            for (rank, (v, text)) in videos.iter().enumerate() {
                let j = judge_question(self.reader, self.selector, text, q, self.max_tokens)?;
                details.push(Detail {
                    topic_id: topic.topic_id.clone(),
                    question_id: q.question_id.clone(),
                    video_id: v.video_id.clone(),
                    channel_id: v.channel_id.clone(),
                    rank,
                    predicted: j.predicted.clone(),
                    selected_index: j.selected_index,
                    answered: j.answered,
                    correct: j.correct,
                });
                per_video.push(j);
            }
            let chosen = per_video
                .iter()
                .position(|j| j.correct)
                .or_else(|| per_video.iter().position(|j| j.answered))
                .unwrap_or(0);
            let mut j = per_video.into_iter().nth(chosen).unwrap_or_else(|| Judgement {
                question_id: q.question_id.clone(),
                predicted: String::new(),
                gold: String::from(q.gold()),
                selected_index: None,
                gold_index: Some(q.correct_index),
                answered: false,
                correct: false,
            });
            j.question_id = q.question_id.clone();
            judgements.push(j);
        }
        Ok(TopicOutcome {
            topic_id: topic.topic_id.clone(),
            retrieved,
            judgements,
            details,
        })
    }

    /// All topics in file order.
    pub fn run(&self, tqa: &TqaSet) -> Result<Vec<TopicOutcome>> {
        tqa.topics()
            .iter()
            .map(|t| self.answer_topic(tqa, &t.topic_id))
            .collect()
    }
}

/// `{video: number of questions answered correctly via that video}` plus the
/// per-(question, video) records it was counted from.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct VideoScoreMap {
    pub counts: BTreeMap<String, u64>,
    pub details: Vec<Detail>,
}

impl VideoScoreMap {
    pub fn from_outcomes(outcomes: &[TopicOutcome]) -> Self {
        let mut map = VideoScoreMap::default();
        for o in outcomes {
            map.extend(o.details.iter().cloned());
        }
        map
    }

    pub fn extend(&mut self, details: impl IntoIterator<Item = Detail>) {
        for d in details {
            let c = self.counts.entry(d.video_id.clone()).or_insert(0);
            if d.correct {
                *c += 1;
            }
            self.details.push(d);
        }
    }

    pub fn total(&self) -> u64 {
        self.counts.values().sum()
    }
}

/// Every question answered against the fixed baseline sentence.
pub fn run_baseline(
    questions: &[TqaQuestion],
    reader: &dyn Reader,
    selector: &dyn ChoiceSelector,
) -> Result<(Vec<Judgement>, Metrics)> {
    let judgements = questions
        .iter()
        .map(|q| judge_question(reader, selector, BASELINE_TEXT, q, DEFAULT_MAX_TOKENS))
        .collect::<Result<Vec<_>>>()?;
    let m = metrics(&judgements)?;
    Ok((judgements, m))
}

/// Column headers of the accuracy grid after the row label.
pub const GRID_COLUMNS: [&str; 7] = [
    "Baseline with Random Text",
    "Transcript (K=1)",
    "Transcript (K=3)",
    "Caption (K=1)",
    "Caption (K=3)",
    "Transcript + Caption (K=1)",
    "Transcript + Caption (K=3)",
];

/// `(measure, k)` of the six non-baseline grid columns.
pub const GRID_CELLS: [(Measure, usize); 6] = [
    (Measure::Transcript, 1),
    (Measure::Transcript, 3),
    (Measure::Caption, 1),
    (Measure::Caption, 3),
    (Measure::Joint, 1),
    (Measure::Joint, 3),
];

pub struct GridSpec<'a> {
    pub label: String,
    pub retrieval_measure: String,
    pub training_dataset: String,
    pub retriever: &'a dyn Retriever,
    pub reader: &'a dyn Reader,
    pub selector: &'a dyn ChoiceSelector,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridRow {
    pub label: String,
    pub retrieval_measure: String,
    pub training_dataset: String,
    /// Percentages in grid column order, baseline first.
    pub values: [f64; 7],
}

/// Percentage of `tqa` questions answered correctly.
pub fn accuracy_percent(outcomes: &[TopicOutcome], tqa: &TqaSet) -> f64 {
    let total = tqa.questions().len();
    if total == 0 {
        return 0.0;
    }
    let correct: usize = outcomes
        .iter()
        .map(|o| o.judgements.iter().filter(|j| j.correct).count())
        .sum();
    100.0 * correct as f64 / total as f64
}

pub fn accuracy_grid(specs: &[GridSpec<'_>], tqa: &TqaSet, corpus: &Corpus) -> Result<Vec<GridRow>> {
    specs
        .iter()
        .map(|spec| {
            let (_, base) = run_baseline(tqa.questions(), spec.reader, spec.selector)?;
            let mut values = [0.0; 7];
            values[0] = 100.0 * base.accuracy;
            for (slot, &(measure, k)) in values[1..].iter_mut().zip(GRID_CELLS.iter()) {
                let p = Pipeline::new(corpus, spec.retriever, spec.reader, spec.selector, k, measure);
                *slot = accuracy_percent(&p.run(tqa)?, tqa);
            }
            Ok(GridRow {
                label: spec.label.clone(),
                retrieval_measure: spec.retrieval_measure.clone(),
                training_dataset: spec.training_dataset.clone(),
                values,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelReport {
    pub channel_id: String,
    pub name: String,
    pub n_videos: usize,
    /// Distinct questions answered correctly via any of the channel's videos.
    pub questions_answered: usize,
    /// `questions_answered / n_videos × 100`.
    pub eq: f64,
    pub views: u64,
}

/// Academic quality per channel, highest EQ first (ties by channel id).
pub fn channel_eq(scores: &VideoScoreMap, corpus: &Corpus) -> (Vec<ChannelReport>, Vec<Warning>) {
    let mut answered: BTreeMap<&str, BTreeSet<&str>> = BTreeMap::new();
    for d in scores.details.iter().filter(|d| d.correct) {
        let channel = corpus
            .get(&d.video_id)
            .map_or(d.channel_id.as_str(), |v| v.channel_id.as_str());
        answered.entry(channel).or_default().insert(d.question_id.as_str());
    }
    let mut warnings = Vec::new();
    let mut reports = Vec::new();
    for ch in corpus.channels() {
        let n = ch.n_videos();
        if n == 0 {
            warnings.push(Warning {
                subject: ch.channel_id.clone(),
                message: String::from("channel has no videos; excluded from EQ"),
            });
            continue;
        }
        let qa = answered.get(ch.channel_id.as_str()).map_or(0, BTreeSet::len);
        reports.push(ChannelReport {
            channel_id: ch.channel_id.clone(),
            name: ch.name.clone(),
            n_videos: n,
            questions_answered: qa,
            eq: qa as f64 / n as f64 * 100.0,
            views: ch.total_views,
        });
    }
    reports.sort_by(|a, b| b.eq.total_cmp(&a.eq).then_with(|| a.channel_id.cmp(&b.channel_id)));
    (reports, warnings)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TopicCoverage {
    pub topic_id: String,
    pub title: String,
    pub answered: usize,
    pub total: usize,
    pub fraction: f64,
}

/// Fraction of each topic's questions answered correctly by any retrieved
/// video, highest first (ties by topic id).
pub fn topic_coverage(details: &[Detail], tqa: &TqaSet) -> Vec<TopicCoverage> {
    let mut correct: BTreeMap<&str, BTreeSet<&str>> = BTreeMap::new();
    for d in details.iter().filter(|d| d.correct) {
        correct
            .entry(d.topic_id.as_str())
            .or_default()
            .insert(d.question_id.as_str());
    }
    let mut out: Vec<TopicCoverage> = tqa
        .topics()
        .iter()
        .map(|t| {
            let total = t.question_ids.len();
            let answered = correct.get(t.topic_id.as_str()).map_or(0, BTreeSet::len);
            TopicCoverage {
                topic_id: t.topic_id.clone(),
                title: t.title.clone(),
                answered,
                total,
                fraction: if total == 0 {
                    0.0
                } else {
                    answered as f64 / total as f64
                },
            }
        })
        .collect();
    out.sort_by(|a, b| {
        b.fraction
            .total_cmp(&a.fraction)
            .then_with(|| a.topic_id.cmp(&b.topic_id))
    });
    out
}

/// A prediction judged incorrect although some of the gold stems matched.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Discrepancy {
    pub question_id: String,
    pub gold: String,
    pub predicted: String,
    pub matched: usize,
    pub gold_len: usize,
}

/// Judges a free-text prediction with the all-stems rule.
pub fn judge_prediction(question_id: &str, predicted: &str, gold: &str) -> (Judgement, Option<Discrepancy>) {
    let m = StemMatch::compute(predicted, gold);
    let answered = !predicted.trim().is_empty();
    let j = Judgement {
        question_id: String::from(question_id),
        predicted: String::from(predicted),
        gold: String::from(gold),
        selected_index: None,
        gold_index: None,
        answered,
        correct: answered && m.is_correct(),
    };
    let d = (answered && m.is_partial()).then(|| Discrepancy {
        question_id: String::from(question_id),
        gold: String::from(gold),
        predicted: String::from(predicted),
        matched: m.matched,
        gold_len: m.gold_len,
    });
    (j, d)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CvqaEvaluation {
    pub judgements: Vec<Judgement>,
    pub discrepancies: Vec<Discrepancy>,
    pub overall: Metrics,
    pub by_type: BTreeMap<QuestionType, Metrics>,
    pub by_modality: BTreeMap<Modality, Metrics>,
}

pub fn cvqa_question_id(index: usize, record: &CvqaRecord) -> String {
    format!("{index}:{}@{}", record.video_id, format_timestamp(record.time_s))
}

/// Reads each labeled video question against its own video.
pub fn evaluate_cvqa(
    records: &[CvqaRecord],
    corpus: &Corpus,
    reader: &dyn Reader,
    measure: Measure,
) -> Result<CvqaEvaluation> {
    let mut judgements = Vec::with_capacity(records.len());
    let mut discrepancies = Vec::new();
    for (i, r) in records.iter().enumerate() {
        let v = corpus.get(&r.video_id).ok_or_else(|| Error::UnknownId {
            kind: "video",
            id: r.video_id.clone(),
        })?;
        let text = v.text(measure);
        let predicted = if text.trim().is_empty() {
            String::new()
        } else {
            let ans = reader.read(&ReaderInput::new(text, r.question.as_str()))?;
            ans.text
        };
        let (j, d) = judge_prediction(&cvqa_question_id(i, r), &predicted, &r.answer);
        judgements.push(j);
        discrepancies.extend(d);
    }
    let overall = metrics(&judgements)?;
    let group = |key: &dyn Fn(&CvqaRecord) -> usize| -> Result<Vec<(usize, Metrics)>> {
        let mut buckets: BTreeMap<usize, Vec<Judgement>> = BTreeMap::new();
        for (r, j) in records.iter().zip(&judgements) {
            buckets.entry(key(r)).or_default().push(j.clone());
        }
        buckets.into_iter().map(|(k, js)| Ok((k, metrics(&js)?))).collect()
    };
    let types = [QuestionType::Simple, QuestionType::Complex];
    let modalities = [Modality::Visual, Modality::Language, Modality::Both];
    let by_type = group(&|r| r.qtype as usize)?
        .into_iter()
        .map(|(k, m)| (types[k], m))
        .collect();
    let by_modality = group(&|r| r.modality as usize)?
        .into_iter()
        .map(|(k, m)| (modalities[k], m))
        .collect();
    Ok(CvqaEvaluation {
        judgements,
        discrepancies,
        overall,
        by_type,
        by_modality,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kinds_round_trip_through_strings() {
        for k in RetrieverKind::ALL {
            assert_eq!(k.as_str().parse::<RetrieverKind>().unwrap(), k);
        }
        assert!("bm25".parse::<RetrieverKind>().is_err());
        assert_eq!("nnmc".parse::<SelectorKind>().unwrap(), SelectorKind::Nnmc);
        assert_eq!("external".parse::<ReaderKind>().unwrap(), ReaderKind::External);
        assert_eq!(RetrieverKind::DenseMultimodal.field(), Measure::Joint);
    }

    #[test]
    fn discrepancy_only_for_partial_matches() {
        let (j, d) = judge_prediction("q3", "digestion", "Digestive System");
        assert!(!j.correct);
        let d = d.unwrap();
        assert_eq!((d.matched, d.gold_len), (1, 2));
        let (j, d) = judge_prediction("q1", "the nucleus", "Nucleus");
        assert!(j.correct && d.is_none());
        let (j, d) = judge_prediction("q", "", "Nucleus");
        assert!(!j.answered && d.is_none());
    }

    #[test]
    fn config_validation() {
        let mut c = PipelineConfig::default();
        assert!(c.validate().is_ok());
        c.k = 0;
        assert!(c.validate().is_err());
    }
}
