//! Contrastive training of the dual encoder.
//!
//! For a query `q` with positives `v⁺_1..v⁺_m` and negatives `v⁻_1..v⁻_n`:
//!
//! L = −Σ_k log( e^{s⁺_k} / (e^{s⁺_k} + Σ_j e^{s⁻_j}) )
//!
//! where `s = ⟨P_Cᵀ x_q, P_Tᵀ x_v⟩` and `x` are frozen base embeddings.
//! Gradients with respect to both projections are analytic.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec::Vec;

use rand::seq::SliceRandom;

use super::dense::DualEncoder;
use crate::corpus::{Corpus, Measure};
use crate::error::{Error, Result};
use crate::linalg::{dot, log_sum_exp, Matrix};
use crate::rng::chacha;

/// One query with its positive and negative video ids.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrainingInstance {
    pub query: String,
    pub positives: Vec<String>,
    pub negatives: Vec<String>,
}

impl TrainingInstance {
    pub fn validate(&self) -> Result<()> {
        if self.positives.is_empty() {
            return Err(Error::invalid("training instance", "no positive video"));
        }
        let pos: BTreeSet<&String> = self.positives.iter().collect();
        if let Some(v) = self.negatives.iter().find(|v| pos.contains(v)) {
            return Err(Error::invalid(
                "training instance",
                alloc::format!("`{v}` is both positive and negative"),
            ));
        }
        Ok(())
    }
}

/// A training instance resolved to base embeddings.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedInstance {
    pub query: Vec<f64>,
    pub positives: Vec<Vec<f64>>,
    pub negatives: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossAndGrad {
    /// Summed over instances and positives.
    pub loss: f64,
    pub grad_topic: Matrix,
    pub grad_video: Matrix,
}

/// Loss and gradients of a batch, summed over instances.
pub fn contrastive_loss(batch: &[EncodedInstance], topic_proj: &Matrix, video_proj: &Matrix) -> Result<LossAndGrad> {
    let mut out = LossAndGrad {
        loss: 0.0,
        grad_topic: Matrix::zeros(topic_proj.rows(), topic_proj.cols()),
        grad_video: Matrix::zeros(video_proj.rows(), video_proj.cols()),
    };
    for inst in batch {
        accumulate_instance(inst, topic_proj, video_proj, &mut out)?;
    }
    Ok(out)
}

fn accumulate_instance(
    inst: &EncodedInstance,
    topic_proj: &Matrix,
    video_proj: &Matrix,
    out: &mut LossAndGrad,
) -> Result<()> {
    if inst.positives.is_empty() {
        return Err(Error::invalid("training instance", "no positive video"));
    }
    if topic_proj.cols() != video_proj.cols() {
        return Err(Error::DimensionMismatch {
            context: "projection output dims",
            expected: topic_proj.cols(),
            found: video_proj.cols(),
        });
    }
    let q = topic_proj.transpose_apply(&inst.query)?;
    let encode =
        |xs: &[Vec<f64>]| -> Result<Vec<Vec<f64>>> { xs.iter().map(|x| video_proj.transpose_apply(x)).collect() };
    let pos = encode(&inst.positives)?;
    let neg = encode(&inst.negatives)?;
    let s_pos: Vec<f64> = pos.iter().map(|v| dot(&q, v)).collect();
    let s_neg: Vec<f64> = neg.iter().map(|v| dot(&q, v)).collect();

    // dL/ds for every positive and negative score.
    let mut d_pos = alloc::vec![0.0; pos.len()];
    let mut d_neg = alloc::vec![0.0; neg.len()];
    let mut logits = Vec::with_capacity(1 + s_neg.len());
    for (k, &sp) in s_pos.iter().enumerate() {
        logits.clear();
        logits.push(sp);
        logits.extend_from_slice(&s_neg);
        let lse = log_sum_exp(&logits);
        out.loss += lse - sp;
        d_pos[k] += libm::exp(sp - lse) - 1.0;
        for (dn, &sn) in d_neg.iter_mut().zip(&s_neg) {
            *dn += libm::exp(sn - lse);
        }
    }

    // s = qᵀv with q = P_Cᵀx_q, v = P_Tᵀx_v:
    // ∂s/∂P_C = x_q vᵀ, ∂s/∂P_T = x_v qᵀ.
    let mut v_sum = alloc::vec![0.0; q.len()];
    let terms = pos.iter().zip(&d_pos).chain(neg.iter().zip(&d_neg));
    for (v, &g) in terms {
        for (a, b) in v_sum.iter_mut().zip(v) {
            *a += g * b;
        }
    }
    out.grad_topic.add_outer(&inst.query, &v_sum, 1.0);
    for (x, &g) in inst
        .positives
        .iter()
        .zip(&d_pos)
        .chain(inst.negatives.iter().zip(&d_neg))
    {
        out.grad_video.add_outer(x, &q, g);
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Optimizer {
    /// `θ ← θ − lr·g − lr·λ·θ`
    Sgd,
    /// Adam moments with decoupled weight decay.
    AdamW { beta1: f64, beta2: f64, eps: f64 },
}

impl Optimizer {
    pub fn adamw() -> Self {
        Optimizer::AdamW {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub lr: f64,
    pub epochs: usize,
    pub batch_size: usize,
    /// Batches whose gradients are summed before one optimiser step.
    pub accum_steps: usize,
    pub weight_decay: f64,
    pub optimizer: Optimizer,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: 1.0,
            epochs: 20,
            batch_size: 4,
            accum_steps: 8,
            weight_decay: 0.0,
            optimizer: Optimizer::Sgd,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    /// Mean per-instance loss measured during each epoch.
    pub epoch_losses: Vec<f64>,
    pub steps: usize,
}

struct OptState {
    step: u64,
    m: [Vec<f64>; 2],
    v: [Vec<f64>; 2],
}

fn apply_update(params: [&mut Matrix; 2], grads: [&Matrix; 2], scale: f64, cfg: &TrainConfig, state: &mut OptState) {
    state.step += 1;
    for (slot, (p, g)) in params.into_iter().zip(grads).enumerate() {
        let p = p.as_mut_slice();
        let g = g.as_slice();
        match cfg.optimizer {
            Optimizer::Sgd => {
                for (w, &gi) in p.iter_mut().zip(g) {
                    let decay = cfg.lr * cfg.weight_decay * *w;
                    *w -= cfg.lr * gi * scale + decay;
                }
            }
            Optimizer::AdamW { beta1, beta2, eps } => {
                let t = state.step as i32;
                let bc1 = 1.0 - libm::pow(beta1, f64::from(t));
                let bc2 = 1.0 - libm::pow(beta2, f64::from(t));
                let (m, v) = (&mut state.m[slot], &mut state.v[slot]);
                for i in 0..p.len() {
                    let gi = g[i] * scale;
                    m[i] = beta1 * m[i] + (1.0 - beta1) * gi;
                    v[i] = beta2 * v[i] + (1.0 - beta2) * gi * gi;
                    let mhat = m[i] / bc1;
                    let vhat = v[i] / bc2;
                    let decay = cfg.lr * cfg.weight_decay * p[i];
                    p[i] -= cfg.lr * mhat / (libm::sqrt(vhat) + eps) + decay;
                }
            }
        }
    }
}

/// Trains both projections in place with mini-batches and gradient
/// accumulation. Deterministic given `cfg.seed`; gradients are reduced in
/// batch order.
pub fn train_projections(
    topic_proj: &mut Matrix,
    video_proj: &mut Matrix,
    instances: &[EncodedInstance],
    cfg: &TrainConfig,
) -> Result<TrainReport> {
    if instances.is_empty() {
        return Err(Error::Empty("training set"));
    }
    if cfg.batch_size == 0 || cfg.accum_steps == 0 {
        return Err(Error::invalid(
            "train config",
            "batch size and accumulation steps must be positive",
        ));
    }
    let mut state = OptState {
        step: 0,
        m: [
            alloc::vec![0.0; topic_proj.as_slice().len()],
            alloc::vec![0.0; video_proj.as_slice().len()],
        ],
        v: [
            alloc::vec![0.0; topic_proj.as_slice().len()],
            alloc::vec![0.0; video_proj.as_slice().len()],
        ],
    };
    let mut order: Vec<usize> = (0..instances.len()).collect();
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let mut rng = chacha(cfg.seed, epoch as u64);
        order.shuffle(&mut rng);
        let mut acc_topic = Matrix::zeros(topic_proj.rows(), topic_proj.cols());
        let mut acc_video = Matrix::zeros(video_proj.rows(), video_proj.cols());
        let mut acc_batches = 0;
        let mut acc_instances = 0usize;
        let mut epoch_loss = 0.0;
        let n_batches = order.len().div_ceil(cfg.batch_size);
        for (b, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let batch: Vec<EncodedInstance> = chunk.iter().map(|&i| instances[i].clone()).collect();
            let lg = contrastive_loss(&batch, topic_proj, video_proj)?;
            if !lg.loss.is_finite() {
                return Err(Error::Diverged {
                    epoch,
                    step: state.step as usize,
                });
            }
            epoch_loss += lg.loss;
            for (a, g) in acc_topic.as_mut_slice().iter_mut().zip(lg.grad_topic.as_slice()) {
                *a += g;
            }
            for (a, g) in acc_video.as_mut_slice().iter_mut().zip(lg.grad_video.as_slice()) {
                *a += g;
            }
            acc_batches += 1;
            acc_instances += batch.len();
            if acc_batches == cfg.accum_steps || b + 1 == n_batches {
                let scale = 1.0 / acc_instances as f64;
                apply_update(
                    [topic_proj, video_proj],
                    [&acc_topic, &acc_video],
                    scale,
                    cfg,
                    &mut state,
                );
                acc_topic.as_mut_slice().iter_mut().for_each(|x| *x = 0.0);
                acc_video.as_mut_slice().iter_mut().for_each(|x| *x = 0.0);
                acc_batches = 0;
                acc_instances = 0;
            }
        }
        epoch_losses.push(epoch_loss / instances.len() as f64);
    }
    Ok(TrainReport {
        epoch_losses,
        steps: state.step as usize,
    })
}

/// Resolves instances to base embeddings for `measure`, skipping ids that
/// are not in the corpus.
pub fn encode_instances(
    instances: &[TrainingInstance],
    encoder: &DualEncoder,
    corpus: &Corpus,
    measure: Measure,
) -> Result<Vec<EncodedInstance>> {
    let mut cache: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
    let mut video = |id: &String| -> Option<Vec<f64>> {
        let v = corpus.get(id)?;
        Some(
            cache
                .entry(v.video_id.as_str())
                .or_insert_with(|| encoder.video_base(v, measure))
                .clone(),
        )
    };
    let mut out = Vec::with_capacity(instances.len());
    for inst in instances {
        inst.validate()?;
        let positives: Vec<Vec<f64>> = inst.positives.iter().filter_map(&mut video).collect();
        if positives.is_empty() {
            continue;
        }
        out.push(EncodedInstance {
            query: encoder.topic.base(&inst.query),
            positives,
            negatives: inst.negatives.iter().filter_map(&mut video).collect(),
        });
    }
    Ok(out)
}

/// Fine-tunes both projections of `encoder` on mined instances.
pub fn train_retriever(
    encoder: &mut DualEncoder,
    instances: &[TrainingInstance],
    corpus: &Corpus,
    measure: Measure,
    cfg: &TrainConfig,
) -> Result<TrainReport> {
    let encoded = encode_instances(instances, encoder, corpus, measure)?;
    let mut topic = encoder.topic.projection().clone();
    let mut video = encoder.video.projection().clone();
    let report = train_projections(&mut topic, &mut video, &encoded, cfg)?;
    *encoder.topic.projection_mut() = topic;
    *encoder.video.projection_mut() = video;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn inst(q: Vec<f64>, pos: Vec<Vec<f64>>, neg: Vec<Vec<f64>>) -> EncodedInstance {
        EncodedInstance {
            query: q,
            positives: pos,
            negatives: neg,
        }
    }

    #[test]
    fn no_negatives_means_zero_loss() {
        let p = Matrix::identity(2, 2);
        let lg = contrastive_loss(&[inst(vec![1.0, 2.0], vec![vec![3.0, 1.0]], vec![])], &p, &p).unwrap();
        assert_eq!(lg.loss, 0.0);
        assert!(lg.grad_topic.as_slice().iter().all(|&g| g == 0.0));
    }

    #[test]
    fn symmetric_pair_gives_ln2() {
        let p = Matrix::identity(2, 2);
        let lg = contrastive_loss(
            &[inst(vec![1.0, 0.0], vec![vec![0.5, 1.0]], vec![vec![0.5, -3.0]])],
            &p,
            &p,
        )
        .unwrap();
        assert!((lg.loss - core::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn zero_positives_rejected() {
        let p = Matrix::identity(2, 2);
        assert!(contrastive_loss(&[inst(vec![1.0, 0.0], vec![], vec![vec![1.0, 0.0]])], &p, &p).is_err());
        let ti = TrainingInstance {
            query: "q".into(),
            positives: vec!["a".into()],
            negatives: vec!["a".into()],
        };
        assert!(ti.validate().is_err());
    }

    #[test]
    fn zero_learning_rate_is_identity() {
        let mut t = Matrix::from_vec(2, 2, vec![0.3, -0.1, 0.7, 1.1]).unwrap();
        let mut v = Matrix::from_vec(2, 2, vec![-0.2, 0.4, 0.9, 0.05]).unwrap();
        let (t0, v0) = (t.clone(), v.clone());
        let data = vec![inst(vec![1.0, 0.5], vec![vec![0.2, 1.0]], vec![vec![1.0, -1.0]])];
        for optimizer in [Optimizer::Sgd, Optimizer::adamw()] {
            let cfg = TrainConfig {
                lr: 0.0,
                epochs: 3,
                batch_size: 1,
                accum_steps: 1,
                weight_decay: 0.01,
                optimizer,
                seed: 1,
            };
            train_projections(&mut t, &mut v, &data, &cfg).unwrap();
            assert_eq!(t, t0);
            assert_eq!(v, v0);
        }
    }

    #[test]
    fn divergence_is_reported() {
        let mut t = Matrix::identity(1, 1);
        let mut v = Matrix::identity(1, 1);
        let data = vec![inst(vec![f64::NAN], vec![vec![1.0]], vec![vec![1.0]])];
        let e = train_projections(&mut t, &mut v, &data, &TrainConfig::default()).unwrap_err();
        assert!(matches!(e, Error::Diverged { .. }));
    }
}
