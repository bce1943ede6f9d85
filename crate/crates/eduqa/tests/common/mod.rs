#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::sync::Arc;

use eduqa::formats::{load_tqa, load_videos};
use eduqa_core::choice::Clem;
use eduqa_core::corpus::{Corpus, Measure, TqaSet};
use eduqa_core::reader::LexicalReader;
use eduqa_core::retrieval::{
    mine_pseudo_labels, train_retriever, DualEncoder, InvertedIndex, MiningConfig, TrainConfig, TrainingInstance,
};
use eduqa_core::text::{EmbedModel, DEFAULT_DIM};

pub fn fixture(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(rel)
}

pub fn load_set(name: &str) -> (Corpus, TqaSet) {
    let (corpus, _) = load_videos(&fixture(&format!("{name}/videos.jsonl"))).unwrap();
    (corpus, load_tqa(&fixture(&format!("{name}/tqa.json"))).unwrap())
}

pub fn embed(seed: u64) -> Arc<EmbedModel> {
    Arc::new(EmbedModel::seeded(DEFAULT_DIM, seed).unwrap())
}

pub fn mine(corpus: &Corpus, tqa: &TqaSet, embed: &Arc<EmbedModel>) -> Vec<TrainingInstance> {
    let bm25 = InvertedIndex::build(corpus, Measure::Joint).unwrap();
    let selector = Clem { embed: embed.clone() };
    mine_pseudo_labels(
        tqa,
        corpus,
        &bm25,
        &LexicalReader::default(),
        &selector,
        &MiningConfig::default(),
    )
    .unwrap()
}

/// Mines on the joint field and trains from the seeded encoder, as the
/// `train-retriever` command does with default settings.
pub fn trained_encoder(corpus: &Corpus, tqa: &TqaSet, seed: u64) -> DualEncoder {
    let embed = embed(seed);
    let instances = mine(corpus, tqa, &embed);
    let mut enc = DualEncoder::seeded(embed, DEFAULT_DIM, 0.01, seed).unwrap();
    let cfg = TrainConfig {
        seed,
        ..TrainConfig::default()
    };
    train_retriever(&mut enc, &instances, corpus, Measure::Joint, &cfg).unwrap();
    enc
}

/// Video holding the facts for golden question `qNN`: two questions per video.
pub fn planted_video(question_id: &str) -> String {
    let n: usize = question_id[1..].parse().unwrap();
    format!("golden{:02}xyz", (n - 1) / 2 + 1)
}

/// Planted video of each topic, in `tqa.topics()` order.
pub fn planted_by_topic(tqa: &TqaSet) -> Vec<String> {
    tqa.topics()
        .iter()
        .map(|t| planted_video(&tqa.topic_questions(t).next().unwrap().question_id))
        .collect()
}
