//! Pseudo-label mining: BM25 candidates are read and judged; videos that
//! yield the correct choice become positives, BM25 candidates that do not
//! contain the gold answer become negatives.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use super::contrastive::TrainingInstance;
use super::{InvertedIndex, Retriever};
use crate::choice::{is_correct, ChoiceSelector};
use crate::corpus::{Corpus, Measure, TqaSet};
use crate::error::Result;
use crate::reader::{Reader, ReaderInput, DEFAULT_MAX_TOKENS};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MiningConfig {
    pub top_m: usize,
    /// Field read and checked for each candidate.
    pub measure: Measure,
    pub max_tokens: usize,
}

impl Default for MiningConfig {
    fn default() -> Self {
        MiningConfig {
            top_m: 20,
            measure: Measure::Joint,
            max_tokens: DEFAULT_MAX_TOKENS,
        }
    }
}

/// One instance per question with at least one positive; the instance query
/// is the question's topic context, which is what retrieval is run with.
pub fn mine_pseudo_labels(
    tqa: &TqaSet,
    corpus: &Corpus,
    bm25: &InvertedIndex,
    reader: &dyn Reader,
    selector: &dyn ChoiceSelector,
    cfg: &MiningConfig,
) -> Result<Vec<TrainingInstance>> {
    let mut out = Vec::new();
    for topic in tqa.topics() {
        for q in tqa.topic_questions(topic) {
            let query = format!("{} {}", topic.context, q.text);
            let candidates = bm25.retrieve_topk(&query, cfg.top_m.max(1))?;
            let mut positives = Vec::new();
            let mut negatives = Vec::new();
            for (vid, _) in candidates {
                let Some(video) = corpus.get(&vid) else { continue };
                let text = video.text(cfg.measure);
                let mut positive = false;
                if !text.trim().is_empty() {
                    let mut input = ReaderInput::new(text.clone(), q.text.clone());
                    input.max_tokens = cfg.max_tokens;
                    let ans = reader.read(&input)?;
                    if !ans.is_abstention() {
                        positive = selector.select(&ans.text, &q.choices)? == q.correct_index;
                    }
                }
                if positive {
                    positives.push(vid);
                } else if !is_correct(&text, q.gold()) {
                    negatives.push(vid);
                }
            }
            if !positives.is_empty() {
                out.push(TrainingInstance {
                    query: String::from(topic.context.as_str()),
                    positives,
                    negatives,
                });
            }
        }
    }
    Ok(out)
}
