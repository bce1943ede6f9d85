//! Workdir layout and the JSON artifacts passed between commands.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use eduqa_core::choice::NnmcModel;
use eduqa_core::corpus::Measure;
use eduqa_core::retrieval::{Bm25Params, InvertedIndex, Retriever};
use eduqa_core::scoring::{Detail, VideoScoreMap};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{require, Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Workdir {
    pub root: PathBuf,
}

impl Workdir {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Workdir { root: root.into() }
    }

    pub fn data(&self) -> PathBuf {
        self.root.join("data")
    }

    pub fn videos(&self) -> PathBuf {
        self.data().join("videos.jsonl")
    }

    pub fn tqa(&self) -> PathBuf {
        self.data().join("tqa.json")
    }

    pub fn cvqa(&self) -> PathBuf {
        self.data().join("cvqa.jsonl")
    }

    pub fn index_dir(&self) -> PathBuf {
        self.root.join("index")
    }

    pub fn bm25_index(&self, m: Measure) -> PathBuf {
        self.index_dir().join(format!("bm25-{m}.json"))
    }

    pub fn dense_index(&self, m: Measure) -> PathBuf {
        self.index_dir().join(format!("dense-{m}.edqi"))
    }

    pub fn models(&self) -> PathBuf {
        self.root.join("models")
    }

    pub fn retriever_weights(&self) -> PathBuf {
        self.models().join("retriever.edqw")
    }

    pub fn nnmc_model(&self) -> PathBuf {
        self.models().join("nnmc.json")
    }

    pub fn runs(&self) -> PathBuf {
        self.root.join("runs")
    }

    pub fn video_scores(&self) -> PathBuf {
        self.runs().join("video_scores.json")
    }

    pub fn reports(&self) -> PathBuf {
        self.root.join("reports")
    }

    pub fn default_config(&self) -> PathBuf {
        self.root.join("eduqa.toml")
    }
}

pub fn ensure_dir(p: &Path) -> Result<()> {
    fs::create_dir_all(p).map_err(|e| Error::io(p, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value).map_err(|e| Error::Internal(e.to_string()))?;
    s.push('\n');
    fs::write(path, s).map_err(|e| Error::io(path, e))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    require(path)?;
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::parse(path, e.line(), e.to_string()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bm25File {
    pub field: String,
    pub k1: f64,
    pub b: f64,
    pub doc_ids: Vec<String>,
    pub doc_lens: Vec<u32>,
    pub postings: BTreeMap<String, Vec<(u32, u32)>>,
}

impl Bm25File {
    pub fn from_index(ix: &InvertedIndex) -> Self {
        Bm25File {
            field: ix.field().to_string(),
            k1: ix.params().k1,
            b: ix.params().b,
            doc_ids: ix.doc_ids().to_vec(),
            doc_lens: ix.doc_lens().to_vec(),
            postings: ix.postings().clone(),
        }
    }

    pub fn into_index(self) -> Result<InvertedIndex> {
        Ok(InvertedIndex::from_parts(
            self.field.parse()?,
            Bm25Params { k1: self.k1, b: self.b },
            self.doc_ids,
            self.doc_lens,
            self.postings,
        )?)
    }
}

pub fn save_bm25(ix: &InvertedIndex, path: &Path) -> Result<()> {
    write_json(path, &Bm25File::from_index(ix))
}

pub fn load_bm25(path: &Path) -> Result<InvertedIndex> {
    read_json::<Bm25File>(path)?.into_index()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DetailRecord {
    pub topic_id: String,
    pub question_id: String,
    pub video_id: String,
    pub channel_id: String,
    pub rank: usize,
    pub predicted: String,
    pub selected_index: Option<usize>,
    pub answered: bool,
    pub correct: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VideoScoresFile {
    pub counts: BTreeMap<String, u64>,
    pub details: Vec<DetailRecord>,
}

impl VideoScoresFile {
    pub fn from_map(m: &VideoScoreMap) -> Self {
        VideoScoresFile {
            counts: m.counts.clone(),
            details: m
                .details
                .iter()
                .map(|d| DetailRecord {
                    topic_id: d.topic_id.clone(),
                    question_id: d.question_id.clone(),
                    video_id: d.video_id.clone(),
                    channel_id: d.channel_id.clone(),
                    rank: d.rank,
                    predicted: d.predicted.clone(),
                    selected_index: d.selected_index,
                    answered: d.answered,
                    correct: d.correct,
                })
                .collect(),
        }
    }

    pub fn into_map(self) -> Result<VideoScoreMap> {
        let mut m = VideoScoreMap::default();
        m.extend(self.details.into_iter().map(|d| Detail {
            topic_id: d.topic_id,
            question_id: d.question_id,
            video_id: d.video_id,
            channel_id: d.channel_id,
            rank: d.rank,
            predicted: d.predicted,
            selected_index: d.selected_index,
            answered: d.answered,
            correct: d.correct,
        }));
        if m.counts != self.counts {
            return Err(Error::Validation(
                "video score counts disagree with their detail records".into(),
            ));
        }
        Ok(m)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NnmcFile {
    pub weights: [f64; 3],
    pub bias: f64,
}

impl From<&NnmcModel> for NnmcFile {
    fn from(m: &NnmcModel) -> Self {
        NnmcFile {
            weights: m.weights,
            bias: m.bias,
        }
    }
}

impl From<NnmcFile> for NnmcModel {
    fn from(f: NnmcFile) -> Self {
        NnmcModel {
            weights: f.weights,
            bias: f.bias,
        }
    }
}

/// One labeled example per line for selector training.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NnmcExampleLine {
    pub answer: String,
    pub choices: Vec<String>,
    pub gold: usize,
}
