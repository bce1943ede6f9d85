//! Dual-encoder dense retrieval.
//!
//! Topics and videos are encoded by two separate encoders. Similarities:
//! `sim_t = ⟨E_C(c), E_T(t)⟩`, `sim_f = ⟨E_C(c), E_T(f)⟩` and the joint
//! `sim_v = sim_t + sim_f`, which is the dot product of the duplicated topic
//! vector `[E_C(c); E_C(c)]` with the stored row `[E_T(f); E_T(t)]`.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use super::Retriever;
use crate::corpus::{Corpus, Measure};
use crate::error::{Error, Result};
use crate::linalg::{dot, norm, Matrix};
use crate::rng::{chacha, gaussian_matrix};
use crate::text::EmbedModel;

/// Maps text to a fixed-size vector.
pub trait TextEncoder: Send + Sync {
    fn dim(&self) -> usize;
    fn encode(&self, text: &str) -> Result<Vec<f64>>;
}

/// Frozen subword embedding followed by a trainable linear projection.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionEncoder {
    embed: Arc<EmbedModel>,
    projection: Matrix,
}

impl ProjectionEncoder {
    pub fn new(embed: Arc<EmbedModel>, projection: Matrix) -> Result<Self> {
        if projection.rows() != embed.dim() {
            return Err(Error::DimensionMismatch {
                context: "projection rows vs embedding dim",
                expected: embed.dim(),
                found: projection.rows(),
            });
        }
        Ok(ProjectionEncoder { embed, projection })
    }

    pub fn projection(&self) -> &Matrix {
        &self.projection
    }

    pub fn projection_mut(&mut self) -> &mut Matrix {
        &mut self.projection
    }

    pub fn embed_model(&self) -> &Arc<EmbedModel> {
        &self.embed
    }

    /// Base (pre-projection) embedding, scaled to unit length; zero for
    /// text with no tokens.
    pub fn base(&self, text: &str) -> Vec<f64> {
        let mut v = self.embed.embed(text);
        let n = norm(&v);
        if n > 0.0 {
            v.iter_mut().for_each(|x| *x /= n);
        }
        v
    }

    pub fn project(&self, base: &[f64]) -> Result<Vec<f64>> {
        self.projection.transpose_apply(base)
    }

    pub fn encode_topic(&self, topic: &str) -> Result<Vec<f64>> {
        self.encode(topic)
    }

    pub fn encode_transcript(&self, transcript: &str) -> Result<Vec<f64>> {
        self.encode(transcript)
    }

    /// Captions are joined in frame order into one text before encoding.
    pub fn encode_captions(&self, captions: &[String]) -> Result<Vec<f64>> {
        if captions.is_empty() {
            return Ok(vec![0.0; self.dim()]);
        }
        self.encode(&crate::corpus::join_sentences(captions.iter().map(String::as_str)))
    }
}

impl TextEncoder for ProjectionEncoder {
    fn dim(&self) -> usize {
        self.projection.cols()
    }

    fn encode(&self, text: &str) -> Result<Vec<f64>> {
        self.project(&self.base(text))
    }
}

/// Adapter for vectors produced outside this crate, keyed by exact text.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PrecomputedEncoder {
    dim: usize,
    vectors: BTreeMap<String, Vec<f64>>,
}

impl PrecomputedEncoder {
    pub fn new(dim: usize, vectors: BTreeMap<String, Vec<f64>>) -> Result<Self> {
        if let Some(v) = vectors.values().find(|v| v.len() != dim) {
            return Err(Error::DimensionMismatch {
                context: "precomputed vector",
                expected: dim,
                found: v.len(),
            });
        }
        Ok(PrecomputedEncoder { dim, vectors })
    }
}

impl TextEncoder for PrecomputedEncoder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn encode(&self, text: &str) -> Result<Vec<f64>> {
        if text.is_empty() {
            return Ok(vec![0.0; self.dim]);
        }
        self.vectors.get(text).cloned().ok_or_else(|| Error::UnknownId {
            kind: "precomputed text",
            id: String::from(text),
        })
    }
}

/// Topic encoder `E_C` and video encoder `E_T`; they never share weights.
#[derive(Debug, Clone, PartialEq)]
pub struct DualEncoder {
    pub topic: ProjectionEncoder,
    pub video: ProjectionEncoder,
}

impl DualEncoder {
    /// Both projections start at the identity plus independent Gaussian
    /// noise of standard deviation `noise`.
    pub fn seeded(embed: Arc<EmbedModel>, dim_out: usize, noise: f64, seed: u64) -> Result<Self> {
        let dim_in = embed.dim();
        let init = |stream: u64| {
            let mut rng = chacha(seed, stream);
            let mut m = gaussian_matrix(dim_in, dim_out, noise, &mut rng);
            let id = Matrix::identity(dim_in, dim_out);
            for (a, b) in m.as_mut_slice().iter_mut().zip(id.as_slice()) {
                *a += b;
            }
            m
        };
        Ok(DualEncoder {
            topic: ProjectionEncoder::new(embed.clone(), init(1))?,
            video: ProjectionEncoder::new(embed, init(2))?,
        })
    }

    pub fn from_projections(embed: Arc<EmbedModel>, topic: Matrix, video: Matrix) -> Result<Self> {
        if !topic.same_shape(&video) {
            return Err(Error::invalid(
                "dual encoder",
                "topic and video projections differ in shape",
            ));
        }
        Ok(DualEncoder {
            topic: ProjectionEncoder::new(embed.clone(), topic)?,
            video: ProjectionEncoder::new(embed, video)?,
        })
    }

    /// Base embedding of a video's field. For the joint measure this is the
    /// sum of the transcript and caption embeddings, which projects to
    /// `E_T(t) + E_T(f)`.
    pub fn video_base(&self, video: &crate::corpus::VideoDoc, measure: Measure) -> Vec<f64> {
        let e = &self.video;
        match measure {
            Measure::Transcript => e.base(&video.transcript),
            Measure::Caption => e.base(&video.caption_text()),
            Measure::Joint => {
                let mut t = e.base(&video.transcript);
                for (a, b) in t.iter_mut().zip(e.base(&video.caption_text())) {
                    *a += b;
                }
                t
            }
        }
    }
}

pub fn sim_t(topic: &[f64], transcript: &[f64]) -> Result<f64> {
    checked_dot(topic, transcript)
}

pub fn sim_f(topic: &[f64], captions: &[f64]) -> Result<f64> {
    checked_dot(topic, captions)
}

pub fn sim_v(topic: &[f64], transcript: &[f64], captions: &[f64]) -> Result<f64> {
    Ok(sim_t(topic, transcript)? + sim_f(topic, captions)?)
}

/// Similarity of an encoded topic with one video under `measure`.
pub fn similarity(topic: &[f64], transcript: &[f64], captions: &[f64], measure: Measure) -> Result<f64> {
    match measure {
        Measure::Transcript => sim_t(topic, transcript),
        Measure::Caption => sim_f(topic, captions),
        Measure::Joint => sim_v(topic, transcript, captions),
    }
}

fn checked_dot(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            context: "similarity",
            expected: a.len(),
            found: b.len(),
        });
    }
    Ok(dot(a, b))
}

/// Encoded videos for one measure. Joint rows are `[E_T(f); E_T(t)]`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseIndex {
    measure: Measure,
    dim: usize,
    ids: Vec<String>,
    rows: Matrix,
}

impl DenseIndex {
    pub fn build(corpus: &Corpus, measure: Measure, encoder: &dyn TextEncoder) -> Result<Self> {
        if corpus.is_empty() {
            return Err(Error::Empty("corpus"));
        }
        let d = encoder.dim();
        let mut ids = Vec::with_capacity(corpus.len());
        let mut rows = Vec::with_capacity(corpus.len());
        for v in corpus.videos() {
            let captions = || -> Result<Vec<f64>> {
                if v.captions.is_empty() {
                    Ok(vec![0.0; d])
                } else {
                    encoder.encode(&v.caption_text())
                }
            };
            let row = match measure {
                Measure::Transcript => encoder.encode(&v.transcript)?,
                Measure::Caption => captions()?,
                Measure::Joint => {
                    let mut r = captions()?;
                    r.extend(encoder.encode(&v.transcript)?);
                    r
                }
            };
            ids.push(v.video_id.clone());
            rows.push(row);
        }
        Self::from_rows(measure, d, ids, Matrix::from_rows(&rows)?)
    }

    /// `dim` is the per-modality encoder dimension; joint indexes store rows
    /// of width `2 * dim`.
    pub fn from_rows(measure: Measure, dim: usize, ids: Vec<String>, rows: Matrix) -> Result<Self> {
        if ids.is_empty() {
            return Err(Error::Empty("dense index"));
        }
        if rows.rows() != ids.len() {
            return Err(Error::DimensionMismatch {
                context: "dense index rows",
                expected: ids.len(),
                found: rows.rows(),
            });
        }
        let width = if measure == Measure::Joint { 2 * dim } else { dim };
        if rows.cols() != width {
            return Err(Error::DimensionMismatch {
                context: "dense index width",
                expected: width,
                found: rows.cols(),
            });
        }
        Ok(DenseIndex {
            measure,
            dim,
            ids,
            rows,
        })
    }

    pub fn measure(&self) -> Measure {
        self.measure
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn rows(&self) -> &Matrix {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// Scores for an encoded topic (`dim` values).
    pub fn scores(&self, topic: &[f64]) -> Result<Vec<f64>> {
        if topic.len() != self.dim {
            return Err(Error::DimensionMismatch {
                context: "topic vector",
                expected: self.dim,
                found: topic.len(),
            });
        }
        let query: Vec<f64> = match self.measure {
            Measure::Joint => topic.iter().chain(topic).copied().collect(),
            _ => topic.to_vec(),
        };
        self.rows.apply(&query)
    }
}

/// A dense index paired with the topic encoder used to query it.
pub struct DenseRetriever<'a> {
    pub index: &'a DenseIndex,
    pub topic_encoder: &'a dyn TextEncoder,
}

impl Retriever for DenseRetriever<'_> {
    fn doc_ids(&self) -> &[String] {
        self.index.ids()
    }

    fn score_all(&self, query: &str) -> Result<Vec<f64>> {
        self.index.scores(&self.topic_encoder.encode(query)?)
    }
}
