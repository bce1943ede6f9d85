//! Okapi BM25 over an inverted index.
//!
//! score(D, Q) = Σ_{t ∈ Q} IDF(t) · tf(t, D) · (k1 + 1) / (tf(t, D) + k1 · (1 − b + b · |D| / avgdl))
//! IDF(t) = ln(1 + (N − df(t) + 0.5) / (df(t) + 0.5))
//!
//! Query terms are summed with multiplicity.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use super::Retriever;
use crate::corpus::{Corpus, Measure};
use crate::error::{Error, Result};
use crate::text::{normalize, tokenize, TokenSeq};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bm25Params {
    pub k1: f64,
    pub b: f64,
}

impl Default for Bm25Params {
    fn default() -> Self {
        Bm25Params { k1: 1.2, b: 0.75 }
    }
}

/// A posting: document position and term frequency.
pub type Posting = (u32, u32);

#[derive(Debug, Clone, PartialEq)]
pub struct InvertedIndex {
    field: Measure,
    params: Bm25Params,
    doc_ids: Vec<String>,
    doc_lens: Vec<u32>,
    avg_len: f64,
    postings: BTreeMap<String, Vec<Posting>>,
}

impl InvertedIndex {
    pub fn build(corpus: &Corpus, field: Measure) -> Result<Self> {
        Self::build_with(corpus, field, Bm25Params::default())
    }

    pub fn build_with(corpus: &Corpus, field: Measure, params: Bm25Params) -> Result<Self> {
        if corpus.is_empty() {
            return Err(Error::Empty("corpus"));
        }
        let docs: Vec<(String, String)> = corpus
            .videos()
            .iter()
            .map(|v| (v.video_id.clone(), v.text(field)))
            .collect();
        Self::from_texts(field, params, &docs)
    }

    /// Index arbitrary `(id, text)` documents.
    pub fn from_texts(field: Measure, params: Bm25Params, docs: &[(String, String)]) -> Result<Self> {
        if docs.is_empty() {
            return Err(Error::Empty("corpus"));
        }
        let mut postings: BTreeMap<String, Vec<Posting>> = BTreeMap::new();
        let mut doc_lens = Vec::with_capacity(docs.len());
        let mut doc_ids = Vec::with_capacity(docs.len());
        for (d, (id, text)) in docs.iter().enumerate() {
            let toks = tokenize(&normalize(text));
            let mut tf: BTreeMap<&str, u32> = BTreeMap::new();
            for t in toks.iter() {
                *tf.entry(t).or_insert(0) += 1;
            }
            for (term, n) in tf {
                postings.entry(String::from(term)).or_default().push((d as u32, n));
            }
            doc_lens.push(toks.len() as u32);
            doc_ids.push(id.clone());
        }
        Self::from_parts(field, params, doc_ids, doc_lens, postings)
    }

    /// Reassemble an index from stored parts, checking its invariants.
    pub fn from_parts(
        field: Measure,
        params: Bm25Params,
        doc_ids: Vec<String>,
        doc_lens: Vec<u32>,
        postings: BTreeMap<String, Vec<Posting>>,
    ) -> Result<Self> {
        if doc_ids.is_empty() {
            return Err(Error::Empty("index"));
        }
        if doc_ids.len() != doc_lens.len() {
            return Err(Error::DimensionMismatch {
                context: "document lengths",
                expected: doc_ids.len(),
                found: doc_lens.len(),
            });
        }
        let mut sums = vec![0u64; doc_ids.len()];
        for (term, list) in &postings {
            let mut prev: Option<u32> = None;
            for &(d, tf) in list {
                if d as usize >= doc_ids.len() || prev.is_some_and(|p| p >= d) || tf == 0 {
                    return Err(Error::invalid(
                        "inverted index",
                        format!("postings for `{term}` are out of range, unsorted or zero"),
                    ));
                }
                prev = Some(d);
                sums[d as usize] += u64::from(tf);
            }
        }
        if let Some(d) = (0..doc_ids.len()).find(|&d| sums[d] != u64::from(doc_lens[d])) {
            return Err(Error::invalid(
                "inverted index",
                format!("term frequencies of `{}` do not sum to its length", doc_ids[d]),
            ));
        }
        let total: u64 = doc_lens.iter().map(|&l| u64::from(l)).sum();
        let avg_len = total as f64 / doc_ids.len() as f64;
        Ok(InvertedIndex {
            field,
            params,
            doc_ids,
            doc_lens,
            avg_len,
            postings,
        })
    }

    pub fn field(&self) -> Measure {
        self.field
    }

    pub fn params(&self) -> Bm25Params {
        self.params
    }

    pub fn n_docs(&self) -> usize {
        self.doc_ids.len()
    }

    pub fn doc_lens(&self) -> &[u32] {
        &self.doc_lens
    }

    pub fn avg_len(&self) -> f64 {
        self.avg_len
    }

    pub fn postings(&self) -> &BTreeMap<String, Vec<Posting>> {
        &self.postings
    }

    pub fn doc_freq(&self, term: &str) -> usize {
        self.postings.get(term).map_or(0, Vec::len)
    }

    pub fn idf(&self, term: &str) -> f64 {
        let n = self.n_docs() as f64;
        let df = self.doc_freq(term) as f64;
        libm::log(1.0 + (n - df + 0.5) / (df + 0.5))
    }

    pub fn position(&self, doc_id: &str) -> Option<usize> {
        self.doc_ids.iter().position(|d| d == doc_id)
    }

    fn term_weight(&self, tf: u32, doc: usize) -> f64 {
        let Bm25Params { k1, b } = self.params;
        let tf = f64::from(tf);
        let len_ratio = if self.avg_len > 0.0 {
            f64::from(self.doc_lens[doc]) / self.avg_len
        } else {
            0.0
        };
        tf * (k1 + 1.0) / (tf + k1 * (1.0 - b + b * len_ratio))
    }

    /// BM25 score of one document.
    pub fn score(&self, query: &TokenSeq, doc_id: &str) -> Result<f64> {
        let doc = self.position(doc_id).ok_or_else(|| Error::UnknownId {
            kind: "document",
            id: String::from(doc_id),
        })?;
        let mut s = 0.0;
        for t in query.iter() {
            let Some(list) = self.postings.get(t) else { continue };
            if let Ok(p) = list.binary_search_by_key(&(doc as u32), |&(d, _)| d) {
                s += self.idf(t) * self.term_weight(list[p].1, doc);
            }
        }
        Ok(s)
    }

    /// Scores of every document, accumulated term-at-a-time.
    pub fn score_tokens(&self, query: &TokenSeq) -> Vec<f64> {
        let mut scores = vec![0.0; self.n_docs()];
        for t in query.iter() {
            let Some(list) = self.postings.get(t) else { continue };
            let idf = self.idf(t);
            for &(d, tf) in list {
                scores[d as usize] += idf * self.term_weight(tf, d as usize);
            }
        }
        scores
    }
}

impl Retriever for InvertedIndex {
    fn doc_ids(&self) -> &[String] {
        &self.doc_ids
    }

    fn score_all(&self, query: &str) -> Result<Vec<f64>> {
        Ok(self.score_tokens(&tokenize(&normalize(query))))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn docs(texts: &[&str]) -> Vec<(String, String)> {
        texts
            .iter()
            .enumerate()
            .map(|(i, t)| (format!("d{i}"), String::from(*t)))
            .collect()
    }

    #[test]
    fn postings_of_single_doc() {
        let idx = InvertedIndex::from_texts(Measure::Transcript, Bm25Params::default(), &docs(&["a b a"])).unwrap();
        assert_eq!(idx.postings()["a"], vec![(0, 2)]);
        assert_eq!(idx.postings()["b"], vec![(0, 1)]);
        assert_eq!(idx.doc_lens(), &[3]);
    }

    #[test]
    fn single_doc_hand_value() {
        let idx = InvertedIndex::from_texts(Measure::Transcript, Bm25Params::default(), &docs(&["cat"])).unwrap();
        let s = idx.score(&tokenize("cat"), "d0").unwrap();
        // ln(1 + 0.5/1.5), tf-part 1
        assert!((s - 0.287_682_072).abs() < 1e-6, "{s}");
    }

    #[test]
    fn absent_terms_contribute_nothing() {
        let idx =
            InvertedIndex::from_texts(Measure::Transcript, Bm25Params::default(), &docs(&["cat", "dog"])).unwrap();
        assert_eq!(idx.score(&tokenize("bird fish"), "d0").unwrap(), 0.0);
        assert!(idx.score(&tokenize("cat"), "nope").is_err());
    }

    #[test]
    fn empty_documents_are_indexed() {
        let idx = InvertedIndex::from_texts(Measure::Caption, Bm25Params::default(), &docs(&["", ""])).unwrap();
        assert_eq!(idx.doc_lens(), &[0, 0]);
        assert_eq!(idx.avg_len(), 0.0);
        assert_eq!(idx.score_tokens(&tokenize("x")), vec![0.0, 0.0]);
    }

    #[test]
    fn from_parts_checks_lengths() {
        let mut postings = BTreeMap::new();
        postings.insert(String::from("a"), vec![(0, 2)]);
        let bad = InvertedIndex::from_parts(
            Measure::Transcript,
            Bm25Params::default(),
            vec![String::from("d")],
            vec![3],
            postings,
        );
        assert!(bad.is_err());
    }
}
