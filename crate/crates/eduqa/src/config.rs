//! Run configuration: a TOML file whose values command-line flags override.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use eduqa_core::corpus::Measure;
use eduqa_core::retrieval::{Optimizer, TrainConfig};
use eduqa_core::scoring::{PipelineConfig, ReaderKind, RetrieverKind, SelectorKind};
use eduqa_core::text::{EmbedModel, DEFAULT_BUCKET_BITS, DEFAULT_DIM};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::formats::load_vectors;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    /// 0 means one per available core.
    pub threads: usize,
    pub log_level: String,
    pub paths: PathsConfig,
    pub pipeline: PipelineSection,
    pub embedding: EmbeddingConfig,
    pub reader: ReaderConfig,
    pub train: TrainSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            threads: 0,
            log_level: "info".into(),
            paths: PathsConfig::default(),
            pipeline: PipelineSection::default(),
            embedding: EmbeddingConfig::default(),
            reader: ReaderConfig::default(),
            train: TrainSection::default(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsConfig {
    pub videos: Option<PathBuf>,
    pub tqa: Option<PathBuf>,
    pub cvqa: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineSection {
    pub retriever: String,
    pub k: usize,
    pub reader: String,
    pub measure: String,
    pub selector: String,
}

impl Default for PipelineSection {
    fn default() -> Self {
        let p = PipelineConfig::default();
        PipelineSection {
            retriever: p.retriever.to_string(),
            k: p.k,
            reader: p.reader.to_string(),
            measure: p.measure.to_string(),
            selector: p.selector.to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmbeddingConfig {
    pub dim: usize,
    pub bucket_bits: u32,
    /// Plain-text word-vector file; seeded vectors are used when absent.
    pub vectors: Option<PathBuf>,
}

impl Default for EmbeddingConfig {
    fn default() -> Self {
        EmbeddingConfig {
            dim: DEFAULT_DIM,
            bucket_bits: DEFAULT_BUCKET_BITS,
            vectors: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReaderConfig {
    pub max_tokens: usize,
    pub window: usize,
    pub layers: usize,
    /// Attention weight file; seeded weights are used when absent.
    pub weights: Option<PathBuf>,
    /// Program and arguments of the external reader.
    pub external_command: Vec<String>,
    pub timeout_s: u64,
}

impl Default for ReaderConfig {
    fn default() -> Self {
        ReaderConfig {
            max_tokens: eduqa_core::reader::DEFAULT_MAX_TOKENS,
            window: 64,
            layers: 1,
            weights: None,
            external_command: Vec::new(),
            timeout_s: 60,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub epochs: usize,
    pub lr: f64,
    pub accum: usize,
    pub batch_size: usize,
    pub weight_decay: f64,
    /// `sgd` or `adamw`.
    pub optimizer: String,
    pub top_m: usize,
    /// Output dimension of both retriever projections.
    pub projection_dim: usize,
    /// Std of the noise added to the identity initialisation.
    pub init_noise: f64,
}

impl Default for TrainSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        TrainSection {
            epochs: t.epochs,
            lr: t.lr,
            accum: t.accum_steps,
            batch_size: t.batch_size,
            weight_decay: t.weight_decay,
            optimizer: "sgd".into(),
            top_m: 20,
            projection_dim: DEFAULT_DIM,
            init_noise: 0.01,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        toml::from_str(&text).map_err(|e| Error::Validation(format!("{}: {e}", path.display())))
    }

    pub fn pipeline(&self) -> Result<PipelineConfig> {
        let p = &self.pipeline;
        let cfg = PipelineConfig {
            retriever: p.retriever.parse::<RetrieverKind>()?,
            k: p.k,
            reader: p.reader.parse::<ReaderKind>()?,
            measure: p.measure.parse::<Measure>()?,
            selector: p.selector.parse::<SelectorKind>()?,
            seed: self.seed,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn train_config(&self) -> Result<TrainConfig> {
        let t = &self.train;
        let optimizer = match t.optimizer.as_str() {
            "sgd" => Optimizer::Sgd,
            "adamw" => Optimizer::adamw(),
            other => {
                return Err(Error::Validation(format!(
                    "unknown optimizer `{other}` (expected sgd or adamw)"
                )))
            }
        };
        Ok(TrainConfig {
            lr: t.lr,
            epochs: t.epochs,
            batch_size: t.batch_size,
            accum_steps: t.accum,
            weight_decay: t.weight_decay,
            optimizer,
            seed: self.seed,
        })
    }

    /// Stable digest of the effective configuration.
    pub fn digest(&self) -> String {
        let text = toml::to_string(self).expect("config serializes");
        crate::manifest::sha256_hex(text.as_bytes())
    }

    pub fn embed_model(&self) -> Result<Arc<EmbedModel>> {
        let e = &self.embedding;
        let model = match &e.vectors {
            Some(path) => {
                let (dim, words) = load_vectors(path)?;
                EmbedModel::from_word_vectors(dim, words, self.seed)?
            }
            None => EmbedModel::with_buckets(e.dim, e.bucket_bits, self.seed)?,
        };
        Ok(Arc::new(model))
    }
}
