//! Mapping free-text answers to multiple-choice options, correctness
//! judgement and evaluation metrics.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec::Vec;

use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::linalg::softmax;
use crate::rng::chacha;
use crate::text::{cosine, normalize, stems_of, tokenize, EmbedModel};

/// Picks one of the `choices` for a free-text answer.
pub trait ChoiceSelector: Send + Sync {
    fn name(&self) -> &str;
    fn select(&self, answer: &str, choices: &[String]) -> Result<usize>;
}

fn argmax_first(scores: &[f64]) -> usize {
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate().skip(1) {
        if s > scores[best] {
            best = i;
        }
    }
    best
}

/// Closest-embedding selection: the choice whose embedding has the highest
/// cosine with the answer's embedding. Ties go to the lowest index.
pub fn clem_select(answer: &str, choices: &[String], model: &EmbedModel) -> Result<usize> {
    if choices.is_empty() {
        return Err(Error::Empty("choice list"));
    }
    let a = model.embed(&normalize(answer));
    let scores = choices
        .iter()
        .map(|c| cosine(&model.embed(&normalize(c)), &a))
        .collect::<Result<Vec<_>>>()?;
    Ok(argmax_first(&scores))
}

#[derive(Debug, Clone)]
pub struct Clem {
    pub embed: Arc<EmbedModel>,
}

impl ChoiceSelector for Clem {
    fn name(&self) -> &str {
        "clem"
    }

    fn select(&self, answer: &str, choices: &[String]) -> Result<usize> {
        clem_select(answer, choices, &self.embed)
    }
}

/// Multiset containment of stem lists: how many of `needle` are covered by
/// `haystack`, counting duplicates.
fn covered(needle: &[String], haystack: &[String]) -> usize {
    let mut pool: BTreeMap<&str, usize> = BTreeMap::new();
    for s in haystack {
        *pool.entry(s).or_insert(0) += 1;
    }
    needle
        .iter()
        .filter(|s| match pool.get_mut(s.as_str()) {
            Some(n) if *n > 0 => {
                *n -= 1;
                true
            }
            _ => false,
        })
        .count()
}

pub const NNMC_FEATURES: usize = 3;

/// `[cosine(answer, choice), stem overlap fraction, token length ratio]`.
pub fn nnmc_features(answer: &str, choice: &str, model: &EmbedModel) -> Result<[f64; NNMC_FEATURES]> {
    let cos = cosine(&model.embed(answer), &model.embed(choice))?;
    let a = stems_of(answer);
    let c = stems_of(choice);
    let overlap = if c.is_empty() {
        0.0
    } else {
        covered(&c, &a) as f64 / c.len() as f64
    };
    let (la, lc) = (a.len() as f64, c.len() as f64);
    let ratio = if la.max(lc) == 0.0 {
        0.0
    } else {
        la.min(lc) / la.max(lc)
    };
    Ok([cos, overlap, ratio])
}

/// Linear scorer over choice features with a softmax across choices.
#[derive(Debug, Clone, PartialEq)]
pub struct NnmcModel {
    pub weights: [f64; NNMC_FEATURES],
    pub bias: f64,
}

impl NnmcModel {
    fn logits(&self, features: &[[f64; NNMC_FEATURES]]) -> Vec<f64> {
        features
            .iter()
            .map(|f| self.bias + f.iter().zip(&self.weights).map(|(x, w)| x * w).sum::<f64>())
            .collect()
    }

    /// Softmax distribution over `choices`.
    pub fn probabilities(&self, answer: &str, choices: &[String], model: &EmbedModel) -> Result<Vec<f64>> {
        let feats = choices
            .iter()
            .map(|c| nnmc_features(answer, c, model))
            .collect::<Result<Vec<_>>>()?;
        Ok(softmax(&self.logits(&feats)))
    }
}

pub fn nnmc_select(answer: &str, choices: &[String], nnmc: &NnmcModel, model: &EmbedModel) -> Result<usize> {
    if choices.is_empty() {
        return Err(Error::Empty("choice list"));
    }
    Ok(argmax_first(&nnmc.probabilities(answer, choices, model)?))
}

#[derive(Debug, Clone)]
pub struct Nnmc {
    pub model: NnmcModel,
    pub embed: Arc<EmbedModel>,
}

impl ChoiceSelector for Nnmc {
    fn name(&self) -> &str {
        "nnmc"
    }

    fn select(&self, answer: &str, choices: &[String]) -> Result<usize> {
        nnmc_select(answer, choices, &self.model, &self.embed)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NnmcExample {
    pub answer: String,
    pub choices: Vec<String>,
    pub gold: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NnmcConfig {
    pub epochs: usize,
    pub lr: f64,
    pub seed: u64,
}

impl Default for NnmcConfig {
    fn default() -> Self {
        NnmcConfig {
            epochs: 30,
            lr: 0.5,
            seed: 0,
        }
    }
}

/// Softmax cross-entropy training with per-example SGD in seeded order.
pub fn train_nnmc(examples: &[NnmcExample], model: &EmbedModel, cfg: &NnmcConfig) -> Result<NnmcModel> {
    let first = examples.first().ok_or(Error::Empty("training set"))?;
    if examples.iter().all(|e| e.gold == first.gold) {
        return Err(Error::invalid("training set", "every example has the same gold index"));
    }
    let mut data = Vec::with_capacity(examples.len());
    for ex in examples {
        if ex.gold >= ex.choices.len() {
            return Err(Error::invalid("training example", "gold index out of range"));
        }
        let feats = ex
            .choices
            .iter()
            .map(|c| nnmc_features(&ex.answer, c, model))
            .collect::<Result<Vec<_>>>()?;
        data.push((feats, ex.gold));
    }
    let mut rng = chacha(cfg.seed, 0);
    let init = crate::rng::gaussian_matrix(1, NNMC_FEATURES, 0.01, &mut rng);
    let mut nnmc = NnmcModel {
        weights: [init.get(0, 0), init.get(0, 1), init.get(0, 2)],
        bias: 0.0,
    };
    let mut order: Vec<usize> = (0..data.len()).collect();
    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for &i in &order {
            let (feats, gold) = &data[i];
            let p = softmax(&nnmc.logits(feats));
            for (j, f) in feats.iter().enumerate() {
                let g = p[j] - if j == *gold { 1.0 } else { 0.0 };
                for (w, x) in nnmc.weights.iter_mut().zip(f) {
                    *w -= cfg.lr * g * x;
                }
                nnmc.bias -= cfg.lr * g;
            }
        }
    }
    Ok(nnmc)
}

/// Stem-level match between a prediction and a gold answer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StemMatch {
    /// Gold stems found in the prediction (multiset).
    pub matched: usize,
    pub gold_len: usize,
}

impl StemMatch {
    pub fn compute(pred: &str, gold: &str) -> Self {
        let g = stems_of(gold);
        let p = stems_of(pred);
        StemMatch {
            matched: covered(&g, &p),
            gold_len: g.len(),
        }
    }

    pub fn is_correct(&self) -> bool {
        self.matched == self.gold_len
    }

    /// Empty gold: vacuously correct.
    pub fn is_degenerate(&self) -> bool {
        self.gold_len == 0
    }

    /// Some but not all gold stems present; such rows are worth a human look.
    pub fn is_partial(&self) -> bool {
        self.matched > 0 && self.matched < self.gold_len
    }
}

/// Every stem of the normalised gold answer occurs in the prediction
/// (counting duplicates).
pub fn is_correct(pred: &str, gold: &str) -> bool {
    StemMatch::compute(pred, gold).is_correct()
}

/// Outcome for one question.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Judgement {
    pub question_id: String,
    pub predicted: String,
    pub gold: String,
    pub selected_index: Option<usize>,
    pub gold_index: Option<usize>,
    pub answered: bool,
    pub correct: bool,
}

/// Token-overlap F1 between prediction and gold over normalised tokens.
pub fn token_f1(pred: &str, gold: &str) -> f64 {
    let p: Vec<String> = tokenize(&normalize(pred)).tokens;
    let g: Vec<String> = tokenize(&normalize(gold)).tokens;
    if p.is_empty() || g.is_empty() {
        return if p.is_empty() && g.is_empty() { 1.0 } else { 0.0 };
    }
    let common = covered(&g, &p) as f64;
    if common == 0.0 {
        return 0.0;
    }
    let precision = common / p.len() as f64;
    let recall = common / g.len() as f64;
    2.0 * precision * recall / (precision + recall)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Metrics {
    pub total: usize,
    pub answered: usize,
    pub correct: usize,
    pub accuracy: f64,
    /// correct / answered; 0 with `precision_defined == false` when nothing
    /// was answered.
    pub precision: f64,
    pub precision_defined: bool,
    pub recall: f64,
    pub f1_binary: f64,
    /// Mean per-question token F1; unanswered questions score 0.
    pub f1_token: f64,
}

pub fn metrics(judgements: &[Judgement]) -> Result<Metrics> {
    if judgements.is_empty() {
        return Err(Error::Empty("judgement set"));
    }
    let total = judgements.len();
    let answered = judgements.iter().filter(|j| j.answered).count();
    let correct = judgements.iter().filter(|j| j.correct).count();
    let accuracy = correct as f64 / total as f64;
    let (precision, precision_defined) = if answered == 0 {
        (0.0, false)
    } else {
        (correct as f64 / answered as f64, true)
    };
    let recall = accuracy;
    let f1_binary = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    let f1_token = judgements
        .iter()
        .map(|j| {
            if j.answered {
                token_f1(&j.predicted, &j.gold)
            } else {
                0.0
            }
        })
        .sum::<f64>()
        / total as f64;
    Ok(Metrics {
        total,
        answered,
        correct,
        accuracy,
        precision,
        precision_defined,
        recall,
        f1_binary,
        f1_token,
    })
}
