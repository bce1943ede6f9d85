#![allow(clippy::needless_range_loop)]

use std::sync::Arc;

use eduqa_core::linalg::{softmax, Matrix};
use eduqa_core::reader::{
    attention_full, attention_sliding, attention_sliding_counted, decode_span, read_chunked, span_logits,
    AttentionParams, AttentionReader, LexicalReader, Qkv, Reader, ReaderInput, SpanHeads,
};
use eduqa_core::text::EmbedModel;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn m(rows: usize, cols: usize, data: &[f64]) -> Matrix {
    Matrix::from_vec(rows, cols, data.to_vec()).unwrap()
}

fn random_matrix(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Matrix {
    Matrix::from_vec(r, c, (0..r * c).map(|_| rng.gen_range(-2.0..2.0)).collect()).unwrap()
}

fn close(a: &Matrix, b: &Matrix, tol: f64) -> bool {
    a.rows() == b.rows() && a.as_slice().iter().zip(b.as_slice()).all(|(x, y)| (x - y).abs() <= tol)
}

#[test]
fn full_attention_hand_case() {
    let q = m(2, 1, &[1.0, 0.0]);
    let v = m(2, 1, &[2.0, 4.0]);
    let out = attention_full(&q, &q, &v).unwrap();
    let w = std::f64::consts::E / (std::f64::consts::E + 1.0);
    assert!((w - 0.7311).abs() < 1e-4);
    assert!((out.get(0, 0) - 2.5379).abs() < 1e-4);
    assert!((out.get(1, 0) - 3.0).abs() < 1e-4);
}

/// Dense masked attention written directly from the definition: a
/// non-global query sees keys within ±w/2 and every global key through the
/// sliding projections; a global query sees every key through the global
/// projections.
fn masked_oracle(s: Qkv<'_>, w: usize, mask: &[bool], g: Qkv<'_>) -> Matrix {
    let n = s.q.rows();
    let half = (w / 2) as isize;
    let mut out = Matrix::zeros(n, s.v.cols());
    for i in 0..n {
        let p = if mask[i] { g } else { s };
        let scale = 1.0 / (p.q.cols() as f64).sqrt();
        let mut logits = vec![f64::NEG_INFINITY; n];
        for j in 0..n {
            let visible = mask[i] || mask[j] || ((i as isize) - (j as isize)).abs() <= half;
            if visible {
                logits[j] = p.q.row(i).iter().zip(p.k.row(j)).map(|(a, b)| a * b).sum::<f64>() * scale;
            }
        }
        let mx = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let e: Vec<f64> = logits.iter().map(|&l| (l - mx).exp()).collect();
        let z: f64 = e.iter().sum();
        for j in 0..n {
            for c in 0..p.v.cols() {
                out.row_mut(i)[c] += e[j] / z * p.v.get(j, c);
            }
        }
    }
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn sliding_equals_full_when_window_covers(seed in any::<u64>(), n in 4usize..=32, d in 1usize..6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (q, k, v) = (random_matrix(&mut rng, n, d), random_matrix(&mut rng, n, d), random_matrix(&mut rng, n, 3));
        let p = Qkv { q: &q, k: &k, v: &v };
        let full = attention_full(&q, &k, &v).unwrap();
        let sliding = attention_sliding(p, 2 * n, &vec![false; n], p).unwrap();
        prop_assert!(close(&full, &sliding, 1e-9));
    }

    #[test]
    fn sliding_with_globals_matches_masked_oracle(seed in any::<u64>(), n in 2usize..=24, w in 1usize..10) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mk = |rng: &mut ChaCha8Rng| random_matrix(rng, n, 4);
        let (qs, ks, vs) = (mk(&mut rng), mk(&mut rng), mk(&mut rng));
        let (qg, kg, vg) = (mk(&mut rng), mk(&mut rng), mk(&mut rng));
        let mask: Vec<bool> = (0..n).map(|_| rng.gen_bool(0.2)).collect();
        let s = Qkv { q: &qs, k: &ks, v: &vs };
        let g = Qkv { q: &qg, k: &kg, v: &vg };
        let got = attention_sliding(s, w, &mask, g).unwrap();
        prop_assert!(close(&got, &masked_oracle(s, w, &mask, g), 1e-9));
    }
}

#[test]
fn window_row_ignores_values_outside_it() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let n = 9;
    let (q, k, v) = (
        random_matrix(&mut rng, n, 3),
        random_matrix(&mut rng, n, 3),
        random_matrix(&mut rng, n, 2),
    );
    let mask = vec![false; n];
    let i = 4;
    let base = attention_sliding(Qkv { q: &q, k: &k, v: &v }, 2, &mask, Qkv { q: &q, k: &k, v: &v }).unwrap();
    let mut v2 = v.clone();
    for j in (0..n).filter(|j| (*j as isize - i as isize).abs() > 1) {
        v2.row_mut(j).iter_mut().for_each(|x| *x += 100.0);
    }
    let moved = attention_sliding(Qkv { q: &q, k: &k, v: &v2 }, 2, &mask, Qkv { q: &q, k: &k, v: &v2 }).unwrap();
    assert_eq!(base.row(i), moved.row(i));
    v2.row_mut(i + 1)[0] += 1.0;
    let inside = attention_sliding(Qkv { q: &q, k: &k, v: &v2 }, 2, &mask, Qkv { q: &q, k: &k, v: &v2 }).unwrap();
    assert_ne!(base.row(i), inside.row(i));
}

#[test]
fn score_evaluations_scale_linearly() {
    let count = |n: usize| {
        let z = Matrix::zeros(n, 2);
        let p = Qkv { q: &z, k: &z, v: &z };
        attention_sliding_counted(p, 64, &vec![false; n], p).unwrap().1
    };
    let ratio = count(2048) as f64 / count(1024) as f64;
    assert!((ratio - 2.0).abs() <= 0.1, "ratio {ratio}");
    assert!(attention_sliding_counted(
        Qkv {
            q: &Matrix::zeros(2, 1),
            k: &Matrix::zeros(2, 1),
            v: &Matrix::zeros(2, 1)
        },
        0,
        &[false, false],
        Qkv {
            q: &Matrix::zeros(2, 1),
            k: &Matrix::zeros(2, 1),
            v: &Matrix::zeros(2, 1)
        },
    )
    .is_err());
}

#[test]
fn softmax_hand_case_and_shift() {
    let p = softmax(&[1.0, 2.0, 3.0]);
    for (a, b) in p.iter().zip([0.0900, 0.2447, 0.6652]) {
        assert!((a - b).abs() < 1e-4);
    }
    let shifted = softmax(&[101.0, 102.0, 103.0]);
    for (a, b) in p.iter().zip(&shifted) {
        assert!((a - b).abs() < 1e-12);
    }
}

#[test]
fn span_logits_identity_rows() {
    let p = Matrix::identity(3, 3);
    let heads = SpanHeads {
        w_start: vec![1.0, 0.0, 0.0],
        w_end: vec![0.0, 0.0, 2.0],
    };
    let (s, e) = span_logits(&p, &heads).unwrap();
    assert_eq!(s, vec![1.0, 0.0, 0.0]);
    assert_eq!(e, vec![0.0, 0.0, 2.0]);
}

#[test]
fn decode_span_examples() {
    let c = decode_span(&[0.0, 10.0, 0.0], &[0.0, 0.0, 10.0], 5, (0, 3)).unwrap();
    assert_eq!((c.start, c.end), (1, 2));
    let c = decode_span(&[1.0, 0.0, 5.0], &[0.0, 4.0, 1.0], 1, (0, 3)).unwrap();
    assert_eq!((c.start, c.end), (2, 2));
    assert!(decode_span(&[1.0], &[1.0], 3, (1, 1)).is_err());
}

fn brute_span(start: &[f64], end: &[f64], max_len: usize, lo: usize, hi: usize) -> (usize, usize, f64) {
    let mut best = (0, 0, f64::NEG_INFINITY);
    for s in lo..hi {
        for e in s..hi.min(s + max_len) {
            let v = start[s] + end[e];
            if v > best.2 {
                best = (s, e, v);
            }
        }
    }
    best
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn decode_span_equals_exhaustive_search(
        seed in any::<u64>(),
        len in 1usize..=64,
        max_len in 1usize..20,
        coarse in any::<bool>(),
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        // Coarse integer logits exercise the tie rules.
        let draw = |rng: &mut ChaCha8Rng| -> f64 {
            if coarse { f64::from(rng.gen_range(-2i32..3)) } else { rng.gen_range(-5.0..5.0) }
        };
        let start: Vec<f64> = (0..len).map(|_| draw(&mut rng)).collect();
        let end: Vec<f64> = (0..len).map(|_| draw(&mut rng)).collect();
        let lo = rng.gen_range(0..len);
        let hi = rng.gen_range(lo + 1..=len);
        let got = decode_span(&start, &end, max_len, (lo, hi)).unwrap();
        let (s, e, v) = brute_span(&start, &end, max_len, lo, hi);
        prop_assert_eq!((got.start, got.end), (s, e));
        prop_assert!((got.score - v).abs() < 1e-12);
    }
}

#[test]
fn lexical_reads_the_nucleus() {
    let r = LexicalReader::default();
    let ctx = "The nucleus is at the center of the atom.";
    let a = r
        .read(&ReaderInput::new(ctx, "What is at the center of an atom?"))
        .unwrap();
    assert!(a.text.to_lowercase().contains("nucleus"), "{a:?}");
    assert_eq!(&ctx[a.char_start..a.char_end], a.text);
    let none = r
        .read(&ReaderInput::new(
            "Colorless green ideas sleep furiously",
            "Which gas do plants absorb?",
        ))
        .unwrap();
    assert!(none.is_abstention());
}

const WORDS: &[&str] = &[
    "the", "magma", "rock", "is", "hot", "lava", "cools", "into", "basalt", "of", "a", "volcano", "plants", "absorb",
    "carbon", "dioxide", "light", "leaves", "what", "which",
];

fn text_strategy(max: usize) -> impl Strategy<Value = String> {
    prop::collection::vec(
        (
            prop::sample::select(WORDS),
            prop::sample::select(vec![" ", " ", ", ", ". ", "-"]),
        ),
        1..max,
    )
    .prop_map(|v| v.into_iter().map(|(w, s)| format!("{w}{s}")).collect::<String>())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn lexical_answer_is_a_context_substring(ctx in text_strategy(60), q in text_strategy(8)) {
        let r = LexicalReader::default();
        let a = r.read(&ReaderInput::new(ctx.clone(), q)).unwrap();
        if !a.is_abstention() {
            prop_assert_eq!(&ctx[a.char_start..a.char_end], a.text.as_str());
            prop_assert!(a.start <= a.end);
        }
    }

    #[test]
    fn chunking_is_transparent_when_context_fits(ctx in text_strategy(40), q in text_strategy(6)) {
        let r = LexicalReader::default();
        let input = ReaderInput::new(ctx.clone(), q.clone());
        let whole = r.read(&input).unwrap();
        let chunked = read_chunked(&ctx, 10_000, 16, |c| r.read(&ReaderInput::new(c, q.clone()))).unwrap();
        prop_assert_eq!(whole, chunked);
    }
}

#[test]
fn seeded_attention_reader_is_deterministic() {
    let embed = Arc::new(EmbedModel::with_buckets(16, 12, 2).unwrap());
    let params = AttentionParams::seeded(16, 1, 3);
    let r = AttentionReader::new(embed, params, 8).unwrap();
    let input = ReaderInput::new(
        "Molten rock below the surface is called magma. Lava cools into basalt.",
        "What is molten rock called?",
    );
    let a = r.read(&input).unwrap();
    let b = r.read(&input).unwrap();
    assert_eq!(a, b);
    assert_eq!(&input.context[a.char_start..a.char_end], a.text);
}
