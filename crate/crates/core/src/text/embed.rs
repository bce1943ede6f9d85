//! fastText-style bag of words and character n-grams.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use super::{normalize, tokenize};
use crate::error::{Error, Result};
use crate::linalg::{dot, norm};
use crate::rng::hashed_uniform;

/// How subword vectors contribute to a token's vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SubwordMode {
    /// Word vector (if known) averaged with all of the token's n-gram vectors.
    Always,
    /// Word vector for known words, n-gram average only for unknown ones.
    OovOnly,
}

/// Subword embedding model.
///
/// Bucket vectors are not stored: bucket `i` is a deterministic function of
/// `(seed, i)`, so a 2^21-bucket table costs no memory.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbedModel {
    dim: usize,
    bucket_bits: u32,
    seed: u64,
    min_n: usize,
    max_n: usize,
    mode: SubwordMode,
    words: BTreeMap<String, Vec<f64>>,
}

pub const DEFAULT_DIM: usize = 100;
pub const DEFAULT_BUCKET_BITS: u32 = 21;

impl EmbedModel {
    /// Random model with n-gram vectors only.
    pub fn seeded(dim: usize, seed: u64) -> Result<Self> {
        Self::with_buckets(dim, DEFAULT_BUCKET_BITS, seed)
    }

    pub fn with_buckets(dim: usize, bucket_bits: u32, seed: u64) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("embedding", "dim must be positive"));
        }
        if bucket_bits == 0 || bucket_bits > 32 {
            return Err(Error::invalid("embedding", "bucket bits must be in 1..=32"));
        }
        Ok(EmbedModel {
            dim,
            bucket_bits,
            seed,
            min_n: 3,
            max_n: 6,
            mode: SubwordMode::Always,
            words: BTreeMap::new(),
        })
    }

    /// Model backed by pretrained word vectors; unknown words fall back to
    /// seeded n-gram vectors.
    pub fn from_word_vectors(dim: usize, words: BTreeMap<String, Vec<f64>>, seed: u64) -> Result<Self> {
        let mut model = Self::seeded(dim, seed)?;
        for (w, v) in &words {
            if v.len() != dim {
                return Err(Error::invalid(
                    "embedding",
                    alloc::format!("vector for `{w}` has {} values, expected {dim}", v.len()),
                ));
            }
        }
        model.words = words;
        model.mode = SubwordMode::OovOnly;
        Ok(model)
    }

    pub fn with_mode(mut self, mode: SubwordMode) -> Self {
        self.mode = mode;
        self
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn vocab_len(&self) -> usize {
        self.words.len()
    }

    fn bucket_count(&self) -> u64 {
        1u64 << self.bucket_bits
    }

    fn add_bucket(&self, bucket: u64, acc: &mut [f64]) {
        let scale = 1.0 / self.dim as f64;
        for (i, a) in acc.iter_mut().enumerate() {
            *a += scale * hashed_uniform(self.seed, bucket, i as u64);
        }
    }

    /// Character n-grams (by `char`) of `<token>`.
    pub fn ngrams(&self, token: &str) -> Vec<String> {
        let chars: Vec<char> = core::iter::once('<')
            .chain(token.chars())
            .chain(core::iter::once('>'))
            .collect();
        let mut out = Vec::new();
        for n in self.min_n..=self.max_n {
            if n > chars.len() {
                break;
            }
            for w in chars.windows(n) {
                out.push(w.iter().collect());
            }
        }
        out
    }

    /// Vector of a single normalised token.
    pub fn token_vector(&self, token: &str) -> Vec<f64> {
        let mut acc = vec![0.0; self.dim];
        let mut parts = 0usize;
        if let Some(v) = self.words.get(token) {
            for (a, x) in acc.iter_mut().zip(v) {
                *a += x;
            }
            parts += 1;
            if self.mode == SubwordMode::OovOnly {
                return acc;
            }
        }
        for g in self.ngrams(token) {
            self.add_bucket(u64::from(fnv1a(g.as_bytes())) % self.bucket_count(), &mut acc);
            parts += 1;
        }
        if parts > 1 {
            let inv = 1.0 / parts as f64;
            acc.iter_mut().for_each(|a| *a *= inv);
        }
        acc
    }

    /// Mean of the token vectors of `normalize(text)`; zero for empty text.
    pub fn embed(&self, text: &str) -> Vec<f64> {
        let toks = tokenize(&normalize(text));
        let mut acc = vec![0.0; self.dim];
        if toks.is_empty() {
            return acc;
        }
        for t in toks.iter() {
            for (a, x) in acc.iter_mut().zip(self.token_vector(t)) {
                *a += x;
            }
        }
        let inv = 1.0 / toks.len() as f64;
        acc.iter_mut().for_each(|a| *a *= inv);
        acc
    }
}

/// 32-bit FNV-1a, the hash fastText uses for subword buckets.
fn fnv1a(bytes: &[u8]) -> u32 {
    let mut h: u32 = 0x811c_9dc5;
    for &b in bytes {
        h ^= u32::from(b);
        h = h.wrapping_mul(0x0100_0193);
    }
    h
}

/// Cosine similarity; 0 when either vector has zero norm.
pub fn cosine(u: &[f64], v: &[f64]) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::DimensionMismatch {
            context: "cosine",
            expected: u.len(),
            found: v.len(),
        });
    }
    let nu = norm(u);
    let nv = norm(v);
    if nu == 0.0 || nv == 0.0 {
        return Ok(0.0);
    }
    Ok((dot(u, v) / (nu * nv)).clamp(-1.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model() -> EmbedModel {
        EmbedModel::seeded(32, 7).unwrap()
    }

    #[test]
    fn fnv_reference_values() {
        // Published FNV-1a 32 test vectors.
        assert_eq!(fnv1a(b""), 0x811c_9dc5);
        assert_eq!(fnv1a(b"a"), 0xe40c_292c);
        assert_eq!(fnv1a(b"foobar"), 0xbf9c_f968);
    }

    #[test]
    fn ngrams_of_short_word() {
        let m = model();
        assert_eq!(m.ngrams("at"), ["<at", "at>", "<at>"]);
        assert!(m.ngrams("").is_empty());
    }

    #[test]
    fn empty_text_is_zero() {
        assert!(model().embed("").iter().all(|&x| x == 0.0));
        assert!(model().embed(" ,. ").iter().all(|&x| x == 0.0));
    }

    #[test]
    fn embedding_is_deterministic() {
        let a = model().embed("the sun rises");
        let b = EmbedModel::seeded(32, 7).unwrap().embed("the sun rises");
        assert_eq!(a, b);
        assert_ne!(a, EmbedModel::seeded(32, 8).unwrap().embed("the sun rises"));
    }

    #[test]
    fn trailing_space_does_not_change_embedding() {
        let m = model();
        let c = cosine(&m.embed("sun"), &m.embed("sun ")).unwrap();
        assert!((c - 1.0).abs() < 1e-9);
    }

    #[test]
    fn cosine_hand_values() {
        assert_eq!(cosine(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 0.0);
        assert!((cosine(&[1.0, 1.0], &[1.0, 0.0]).unwrap() - core::f64::consts::FRAC_1_SQRT_2).abs() < 1e-6);
        assert_eq!(cosine(&[0.0, 0.0], &[1.0, 0.0]).unwrap(), 0.0);
        assert!(cosine(&[1.0], &[1.0, 0.0]).is_err());
    }

    #[test]
    fn pretrained_words_take_precedence() {
        let mut words = BTreeMap::new();
        words.insert(String::from("sun"), alloc::vec![1.0, 0.0]);
        let m = EmbedModel::from_word_vectors(2, words, 1).unwrap();
        assert_eq!(m.embed("Sun"), alloc::vec![1.0, 0.0]);
        // unknown word: n-gram fallback, non-zero
        assert!(m.embed("moon").iter().any(|&x| x != 0.0));
        let bad: BTreeMap<String, Vec<f64>> = [(String::from("x"), alloc::vec![1.0])].into_iter().collect();
        assert!(EmbedModel::from_word_vectors(2, bad, 1).is_err());
    }
}
