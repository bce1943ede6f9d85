//! Lexical and dense retrieval, pseudo-label mining and contrastive
//! training of the dual encoder.

use alloc::string::String;
use alloc::vec::Vec;
use core::cmp::Ordering;

use crate::error::{Error, Result};

pub mod bm25;
pub mod contrastive;
pub mod dense;
pub mod mining;

pub use bm25::{Bm25Params, InvertedIndex};
pub use contrastive::{
    contrastive_loss, encode_instances, train_projections, train_retriever, EncodedInstance, LossAndGrad, Optimizer,
    TrainConfig, TrainReport, TrainingInstance,
};
pub use dense::{
    sim_f, sim_t, sim_v, similarity, DenseIndex, DenseRetriever, DualEncoder, PrecomputedEncoder, ProjectionEncoder,
    TextEncoder,
};
pub use mining::{mine_pseudo_labels, MiningConfig};

/// Scores every indexed document against a query text.
pub trait Retriever: Send + Sync {
    fn doc_ids(&self) -> &[String];

    /// One score per entry of [`Retriever::doc_ids`].
    fn score_all(&self, query: &str) -> Result<Vec<f64>>;

    /// Top `k` documents, highest score first, ties broken by ascending id.
    fn retrieve_topk(&self, query: &str, k: usize) -> Result<Vec<(String, f64)>> {
        let scores = self.score_all(query)?;
        rank_top_k(self.doc_ids(), &scores, k)
    }
}

/// Orders `(id, score)` pairs by descending score, then ascending id, and
/// keeps the first `min(k, n)`.
pub fn rank_top_k(ids: &[String], scores: &[f64], k: usize) -> Result<Vec<(String, f64)>> {
    if k == 0 {
        return Err(Error::invalid("k", "must be at least 1"));
    }
    if ids.is_empty() {
        return Err(Error::Empty("index"));
    }
    if ids.len() != scores.len() {
        return Err(Error::DimensionMismatch {
            context: "score vector",
            expected: ids.len(),
            found: scores.len(),
        });
    }
    let mut order: Vec<usize> = (0..ids.len()).collect();
    order.sort_by(|&a, &b| compare_ranked((&ids[a], scores[a]), (&ids[b], scores[b])));
    Ok(order.into_iter().take(k).map(|i| (ids[i].clone(), scores[i])).collect())
}

/// Total order used for every ranking: score descending, id ascending.
pub fn compare_ranked(a: (&String, f64), b: (&String, f64)) -> Ordering {
    b.1.total_cmp(&a.1).then_with(|| a.0.cmp(b.0))
}
