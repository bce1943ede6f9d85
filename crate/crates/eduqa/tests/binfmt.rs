use std::path::Path;
use std::sync::Arc;

use eduqa::binfmt::{
    attention_from_weights, attention_weights, decode_index, encode_index, read_index, retriever_from_weights,
    retriever_weights, write_index, WeightFile,
};
use eduqa::formats::load_videos;
use eduqa_core::corpus::Measure;
use eduqa_core::linalg::Matrix;
use eduqa_core::reader::AttentionParams;
use eduqa_core::retrieval::{DenseIndex, DualEncoder};
use eduqa_core::text::EmbedModel;
use proptest::prelude::*;

fn golden_index(measure: Measure) -> (DenseIndex, DualEncoder) {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/golden/videos.jsonl");
    let (corpus, _) = load_videos(&path).unwrap();
    let embed = Arc::new(EmbedModel::seeded(32, 3).unwrap());
    let enc = DualEncoder::seeded(embed, 16, 0.01, 3).unwrap();
    (DenseIndex::build(&corpus, measure, &enc.video).unwrap(), enc)
}

#[test]
fn index_round_trip_within_f32() {
    let dir = tempfile::tempdir().unwrap();
    for m in Measure::ALL {
        let (ix, _) = golden_index(m);
        let p = dir.path().join(format!("{m}.edqi"));
        write_index(&ix, &p).unwrap();
        let back = read_index(&p).unwrap();
        assert_eq!(back.measure(), m);
        assert_eq!(back.dim(), ix.dim());
        assert_eq!(back.ids(), ix.ids());
        for (a, b) in ix.rows().as_slice().iter().zip(back.rows().as_slice()) {
            assert_eq!(*b, f64::from(*a as f32));
        }
        assert_eq!(encode_index(&back), std::fs::read(&p).unwrap());
    }
}

#[test]
fn joint_rows_are_twice_as_wide() {
    let (ix, _) = golden_index(Measure::Joint);
    assert_eq!(ix.rows().cols(), 2 * ix.dim());
}

#[test]
fn corrupt_index_is_rejected() {
    let (ix, _) = golden_index(Measure::Transcript);
    let good = encode_index(&ix);
    let p = Path::new("x.edqi");
    let mut bad = good.clone();
    bad[0] = b'X';
    assert!(decode_index(&bad, p).unwrap_err().to_string().contains("magic"));
    let mut bad = good.clone();
    bad[4] = 9;
    assert!(decode_index(&bad, p).unwrap_err().to_string().contains("version"));
    let mut bad = good.clone();
    bad[8] = 7;
    assert!(decode_index(&bad, p).unwrap_err().to_string().contains("measure"));
    assert!(decode_index(&good[..good.len() - 3], p)
        .unwrap_err()
        .to_string()
        .contains("truncated"));
    let mut bad = good.clone();
    bad.push(0);
    assert!(decode_index(&bad, p).unwrap_err().to_string().contains("trailing"));
}

#[test]
fn retriever_weights_round_trip_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let (_, enc) = golden_index(Measure::Transcript);
    let p = dir.path().join("r.edqw");
    retriever_weights(&enc).write(&p).unwrap();
    let w = WeightFile::read(&p).unwrap();
    let back = retriever_from_weights(&w, enc.topic.embed_model().clone()).unwrap();
    assert_eq!(back.topic.projection(), enc.topic.projection());
    assert_eq!(back.video.projection(), enc.video.projection());
    let mut missing = w.clone();
    missing.sections.retain(|(n, _)| n != "video");
    assert!(retriever_from_weights(&missing, enc.topic.embed_model().clone()).is_err());
}

#[test]
fn attention_weights_round_trip_exactly() {
    let p = AttentionParams::seeded(8, 2, 5);
    let w = WeightFile::decode(&attention_weights(&p).encode(), Path::new("a")).unwrap();
    let back = attention_from_weights(&w).unwrap();
    assert_eq!(attention_weights(&back), attention_weights(&p));
    assert_eq!(back.layers.len(), 2);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn weight_files_round_trip(
        shapes in proptest::collection::vec((1usize..5, 1usize..5), 0..4),
        seed in any::<u64>(),
    ) {
        let sections: Vec<(String, Matrix)> = shapes
            .iter()
            .enumerate()
            .map(|(i, &(r, c))| {
                let data = (0..r * c).map(|j| (seed.wrapping_add(j as u64 * 7919) % 1000) as f64 / 7.0 - 50.0).collect();
                (format!("s{i}"), Matrix::from_vec(r, c, data).unwrap())
            })
            .collect();
        let w = WeightFile { sections };
        let buf = w.encode();
        prop_assert_eq!(WeightFile::decode(&buf, Path::new("w")).unwrap(), w);
        for cut in [0, 3, buf.len() - 1] {
            prop_assert!(WeightFile::decode(&buf[..cut], Path::new("w")).is_err());
        }
    }

    #[test]
    fn arbitrary_bytes_never_panic(buf in proptest::collection::vec(any::<u8>(), 0..200)) {
        let _ = decode_index(&buf, Path::new("i"));
        let _ = WeightFile::decode(&buf, Path::new("w"));
    }
}
