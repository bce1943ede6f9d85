#![allow(clippy::needless_range_loop)]

use eduqa_core::corpus::Measure;
use eduqa_core::linalg::{dot, Matrix};
use eduqa_core::retrieval::{
    contrastive_loss, rank_top_k, sim_f, sim_t, sim_v, train_projections, Bm25Params, EncodedInstance, InvertedIndex,
    Optimizer, Retriever, TrainConfig,
};
use eduqa_core::text::{normalize, tokenize};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn index(texts: &[String], params: Bm25Params) -> InvertedIndex {
    let docs: Vec<(String, String)> = texts
        .iter()
        .enumerate()
        .map(|(i, t)| (format!("d{i:02}"), t.clone()))
        .collect();
    InvertedIndex::from_texts(Measure::Transcript, params, &docs).unwrap()
}

/// Direct evaluation of the Okapi formula from raw token lists.
fn brute_bm25(docs: &[Vec<String>], query: &[String], d: usize, k1: f64, b: f64) -> f64 {
    let n = docs.len() as f64;
    let avg = docs.iter().map(Vec::len).sum::<usize>() as f64 / n;
    let len = docs[d].len() as f64;
    let mut s = 0.0;
    for t in query {
        let df = docs.iter().filter(|doc| doc.contains(t)).count() as f64;
        let tf = docs[d].iter().filter(|w| *w == t).count() as f64;
        if tf == 0.0 {
            continue;
        }
        let idf = (1.0 + (n - df + 0.5) / (df + 0.5)).ln();
        s += idf * tf * (k1 + 1.0) / (tf + k1 * (1.0 - b + b * len / avg));
    }
    s
}

#[test]
fn bm25_single_doc_hand_value() {
    let ix = index(&["cat".into()], Bm25Params::default());
    let s = ix.score(&tokenize("cat"), "d00").unwrap();
    assert!((s - (1.0f64 + 0.5 / 1.5).ln()).abs() < 1e-12);
    assert!((s - 0.2877).abs() < 1e-4);
    assert_eq!(ix.score(&tokenize("dog"), "d00").unwrap(), 0.0);
    assert!(ix.score(&tokenize("cat"), "nope").is_err());
}

#[test]
fn bm25_tf_monotone_for_large_k1() {
    let params = Bm25Params { k1: 1e6, b: 0.75 };
    let mut last = 0.0;
    for tf in [1usize, 2, 4, 8, 16] {
        let doc = vec!["cat"; tf].join(" ");
        let ix = index(&[doc, "dog".into(), "emu".into()], params);
        let s = ix.score(&tokenize("cat"), "d00").unwrap();
        assert!(s > last, "tf {tf}: {s} <= {last}");
        last = s;
    }
}

#[test]
fn topk_ties_and_bounds() {
    let ids: Vec<String> = ["b", "a", "c"].iter().map(|s| s.to_string()).collect();
    let r = rank_top_k(&ids, &[1.0, 1.0, 0.5], 2).unwrap();
    assert_eq!(r, vec![("a".to_string(), 1.0), ("b".to_string(), 1.0)]);
    assert_eq!(rank_top_k(&ids, &[1.0, 1.0, 0.5], 10).unwrap().len(), 3);
    assert!(rank_top_k(&ids, &[1.0, 1.0, 0.5], 0).is_err());
}

#[test]
fn topic_verbatim_in_one_transcript_ranks_it_first() {
    let texts: Vec<String> = [
        "rivers carry sediment to the sea",
        "the heart pumps blood through arteries and veins",
        "volcanoes erupt lava and ash",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    let ix = index(&texts, Bm25Params::default());
    let top = ix.retrieve_topk("the heart pumps blood", 1).unwrap();
    assert_eq!(top[0].0, "d01");
}

fn vocab_doc() -> impl Strategy<Value = Vec<String>> {
    prop::collection::vec(
        prop::sample::select(vec!["ant", "bee", "cat", "dog", "emu", "fox", "gnu"]),
        0..12,
    )
    .prop_map(|v| v.into_iter().map(String::from).collect())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn bm25_equals_brute_force(
        docs in prop::collection::vec(vocab_doc(), 1..=10),
        query in vocab_doc(),
        k1 in 0.1f64..3.0,
        b in 0.0f64..1.0,
    ) {
        prop_assume!(docs.iter().any(|d| !d.is_empty()));
        let texts: Vec<String> = docs.iter().map(|d| d.join(" ")).collect();
        let ix = index(&texts, Bm25Params { k1, b });
        let q = tokenize(&normalize(&query.join(" ")));
        let all = ix.score_tokens(&q);
        for d in 0..docs.len() {
            let want = brute_bm25(&docs, &query, d, k1, b);
            let got = ix.score(&q, &format!("d{d:02}")).unwrap();
            prop_assert!((got - want).abs() < 1e-9, "doc {}: {} vs {}", d, got, want);
            prop_assert!((all[d] - want).abs() < 1e-9);
        }
    }

    #[test]
    fn topk_is_consistent_with_pairwise_order(scores in prop::collection::vec(-3i32..3, 1..20)) {
        let ids: Vec<String> = (0..scores.len()).map(|i| format!("v{:02}", (i * 7) % 20)).collect();
        prop_assume!(ids.iter().collect::<std::collections::BTreeSet<_>>().len() == ids.len());
        let s: Vec<f64> = scores.iter().map(|&x| f64::from(x)).collect();
        let r = rank_top_k(&ids, &s, ids.len()).unwrap();
        prop_assert_eq!(r.len(), ids.len());
        for w in r.windows(2) {
            prop_assert!(w[0].1 > w[1].1 || (w[0].1 == w[1].1 && w[0].0 < w[1].0));
        }
    }

    #[test]
    fn joint_similarity_is_the_sum(
        c in prop::collection::vec(-5f64..5.0, 6),
        t in prop::collection::vec(-5f64..5.0, 6),
        f in prop::collection::vec(-5f64..5.0, 6),
    ) {
        let v = sim_v(&c, &t, &f).unwrap();
        prop_assert!((v - sim_t(&c, &t).unwrap() - sim_f(&c, &f).unwrap()).abs() < 1e-9);
        let cc: Vec<f64> = c.iter().chain(&c).copied().collect();
        let ft: Vec<f64> = f.iter().chain(&t).copied().collect();
        prop_assert!((v - dot(&cc, &ft)).abs() < 1e-9);
    }
}

fn normal_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()
}

fn normal_matrix(rng: &mut ChaCha8Rng, r: usize, c: usize, scale: f64) -> Matrix {
    Matrix::from_vec(r, c, normal_vec(rng, r * c).into_iter().map(|x| x * scale).collect()).unwrap()
}

fn random_instance(rng: &mut ChaCha8Rng, dim: usize) -> EncodedInstance {
    let n_pos = rng.gen_range(1..=3);
    let n_neg = rng.gen_range(0..=4);
    EncodedInstance {
        query: normal_vec(rng, dim),
        positives: (0..n_pos).map(|_| normal_vec(rng, dim)).collect(),
        negatives: (0..n_neg).map(|_| normal_vec(rng, dim)).collect(),
    }
}

#[test]
fn loss_is_ln2_for_symmetric_pair() {
    let p = Matrix::identity(2, 2);
    let inst = EncodedInstance {
        query: vec![1.0, 0.0],
        positives: vec![vec![0.3, 2.0]],
        negatives: vec![vec![0.3, -1.0]],
    };
    let lg = contrastive_loss(&[inst], &p, &p).unwrap();
    assert!((lg.loss - std::f64::consts::LN_2).abs() < 1e-9);
}

#[test]
fn gradient_matches_finite_differences() {
    let dim = 8;
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for seed in 0..100u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let inst = vec![random_instance(&mut rng, dim)];
        let pc = normal_matrix(&mut rng, dim, dim, 0.3);
        let pt = normal_matrix(&mut rng, dim, dim, 0.3);
        let lg = contrastive_loss(&inst, &pc, &pt).unwrap();
        for which in 0..2 {
            let analytic = if which == 0 { &lg.grad_topic } else { &lg.grad_video };
            for i in 0..dim * dim {
                let bump = |delta: f64| {
                    let (mut a, mut b) = (pc.clone(), pt.clone());
                    let m = if which == 0 { &mut a } else { &mut b };
                    m.as_mut_slice()[i] += delta;
                    contrastive_loss(&inst, &a, &b).unwrap().loss
                };
                let numeric = (bump(h) - bump(-h)) / (2.0 * h);
                let a = analytic.as_slice()[i];
                let rel = (a - numeric).abs() / (a.abs() + numeric.abs()).max(1e-6);
                worst = worst.max(rel);
            }
        }
    }
    assert!(worst < 1e-4, "max relative error {worst:e}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn loss_nonnegative_and_zero_without_negatives(seed in any::<u64>(), drop_neg in any::<bool>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut inst = random_instance(&mut rng, 5);
        if drop_neg {
            inst.negatives.clear();
        }
        let pc = normal_matrix(&mut rng, 5, 4, 0.3);
        let pt = normal_matrix(&mut rng, 5, 4, 0.3);
        let lg = contrastive_loss(&[inst.clone()], &pc, &pt).unwrap();
        prop_assert!(lg.loss >= 0.0);
        if inst.negatives.is_empty() {
            prop_assert_eq!(lg.loss, 0.0);
        } else {
            prop_assert!(lg.loss > 0.0);
        }
    }
}

fn unit(v: Vec<f64>) -> Vec<f64> {
    let n = dot(&v, &v).sqrt();
    v.into_iter().map(|x| x / n).collect()
}

/// 50 query/video pairs where the video feature is a fixed random linear
/// map of its query, so identity projections retrieve at chance level.
fn synthetic_pairs(seed: u64) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let dim = 16;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mix = normal_matrix(&mut rng, dim, dim, 1.0 / (dim as f64).sqrt());
    let queries: Vec<Vec<f64>> = (0..50).map(|_| unit(normal_vec(&mut rng, dim))).collect();
    let videos = queries.iter().map(|q| unit(mix.apply(q).unwrap())).collect();
    (queries, videos)
}

fn top1_rate(pc: &Matrix, pt: &Matrix, queries: &[Vec<f64>], videos: &[Vec<f64>]) -> f64 {
    let encoded: Vec<Vec<f64>> = videos.iter().map(|v| pt.transpose_apply(v).unwrap()).collect();
    let ids: Vec<String> = (0..videos.len()).map(|i| format!("v{i:02}")).collect();
    let hits = queries
        .iter()
        .enumerate()
        .filter(|(i, q)| {
            let qe = pc.transpose_apply(q).unwrap();
            let scores: Vec<f64> = encoded.iter().map(|v| dot(&qe, v)).collect();
            rank_top_k(&ids, &scores, 1).unwrap()[0].0 == ids[*i]
        })
        .count();
    hits as f64 / queries.len() as f64
}

fn synthetic_instances(queries: &[Vec<f64>], videos: &[Vec<f64>]) -> Vec<EncodedInstance> {
    (0..queries.len())
        .map(|i| EncodedInstance {
            query: queries[i].clone(),
            positives: vec![videos[i].clone()],
            negatives: (0..videos.len())
                .filter(|&j| j != i)
                .map(|j| videos[j].clone())
                .collect(),
        })
        .collect()
}

#[test]
fn synthetic_training_retrieves_pairs() {
    let (queries, videos) = synthetic_pairs(11);
    let data = synthetic_instances(&queries, &videos);
    let mut pc = Matrix::identity(16, 16);
    let mut pt = Matrix::identity(16, 16);
    let before = top1_rate(&pc, &pt, &queries, &videos);
    let cfg = TrainConfig {
        epochs: 20,
        ..TrainConfig::default()
    };
    let report = train_projections(&mut pc, &mut pt, &data, &cfg).unwrap();
    let after = top1_rate(&pc, &pt, &queries, &videos);
    assert!(report.epoch_losses.last() < report.epoch_losses.first());
    assert!(before < 0.5, "identity already retrieves {before}");
    assert!(after >= 0.9, "top-1 {before} -> {after}");
}

#[test]
fn training_is_deterministic_and_adamw_learns() {
    let (queries, videos) = synthetic_pairs(3);
    let data = synthetic_instances(&queries, &videos);
    let run = |optimizer| {
        let mut pc = Matrix::identity(16, 16);
        let mut pt = Matrix::identity(16, 16);
        let cfg = TrainConfig {
            optimizer,
            lr: if optimizer == Optimizer::Sgd { 1.0 } else { 0.05 },
            weight_decay: 0.01,
            seed: 9,
            ..TrainConfig::default()
        };
        let r = train_projections(&mut pc, &mut pt, &data, &cfg).unwrap();
        (pc, pt, r)
    };
    let (a, b, _) = run(Optimizer::Sgd);
    let (c, d, _) = run(Optimizer::Sgd);
    assert_eq!((a, b), (c, d));
    let (pc, pt, r) = run(Optimizer::adamw());
    assert!(r.epoch_losses.last() < r.epoch_losses.first());
    assert!(top1_rate(&pc, &pt, &queries, &videos) >= 0.9);
}

#[test]
fn seeded_encoders_differ() {
    use eduqa_core::retrieval::{DualEncoder, TextEncoder};
    use eduqa_core::text::EmbedModel;
    let embed = std::sync::Arc::new(EmbedModel::with_buckets(16, 12, 0).unwrap());
    let enc = DualEncoder::seeded(embed, 16, 0.01, 4).unwrap();
    let text = "volcanoes erupt";
    assert_ne!(enc.topic.encode(text).unwrap(), enc.video.encode(text).unwrap());
    let caps = vec!["a cat".to_string(), "a dog".to_string()];
    assert_eq!(
        enc.video.encode_captions(&caps).unwrap(),
        enc.video.encode("a cat. a dog").unwrap()
    );
    assert!(enc.video.encode_captions(&[]).unwrap().iter().all(|&x| x == 0.0));
}
