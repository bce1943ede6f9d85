//! Sentence-overlap reader.
//!
//! Picks the context sentence sharing the most content stems with the
//! question, then answers with the shortest span of that sentence covering
//! its highest-IDF tokens that do not occur in the question. IDF is computed
//! over the sentences of the context being read.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec::Vec;

use super::{read_chunked, Answer, Reader, ReaderInput, DEFAULT_CHUNK_OVERLAP};
use crate::error::Result;
use crate::text::{content_stems, is_stopword, sentences, tokenize_raw};

#[derive(Debug, Clone, PartialEq)]
pub struct LexicalReader {
    /// Minimum number of shared content stems before answering.
    pub min_overlap: usize,
}

impl Default for LexicalReader {
    fn default() -> Self {
        LexicalReader { min_overlap: 1 }
    }
}

struct Sentence {
    /// Byte offset of the sentence in the context.
    offset: usize,
    /// Index of the sentence's first token within the context.
    first_token: usize,
    tokens: Vec<String>,
    spans: Vec<(usize, usize)>,
    stems: Vec<String>,
}

impl LexicalReader {
    fn read_whole(&self, context: &str, question: &str) -> Answer {
        let q_stems = content_stems(question);
        let mut token_base = 0;
        let sents: Vec<Sentence> = sentences(context)
            .into_iter()
            .map(|(a, b)| {
                let toks = tokenize_raw(&context[a..b]);
                let stems = toks.stems();
                let s = Sentence {
                    offset: a,
                    first_token: token_base,
                    tokens: toks.tokens,
                    spans: toks.offsets,
                    stems,
                };
                token_base += s.tokens.len();
                s
            })
            .collect();

        let overlap = |s: &Sentence| {
            s.tokens
                .iter()
                .zip(&s.stems)
                .filter(|(t, st)| !is_stopword(t) && q_stems.contains(*st))
                .map(|(_, st)| st.as_str())
                .collect::<BTreeSet<_>>()
                .len()
        };
        let mut best: Option<(usize, usize)> = None;
        for (i, s) in sents.iter().enumerate() {
            let o = overlap(s);
            if best.is_none_or(|(_, bo)| o > bo) {
                best = Some((i, o));
            }
        }
        let Some((best_idx, best_overlap)) = best else {
            return Answer::abstain();
        };
        if best_overlap < self.min_overlap.max(1) {
            return Answer::abstain();
        }

        // Sentence-level document frequency of each stem.
        let mut sf: BTreeMap<&str, usize> = BTreeMap::new();
        for s in &sents {
            let distinct: BTreeSet<&str> = s.stems.iter().map(String::as_str).collect();
            for st in distinct {
                *sf.entry(st).or_insert(0) += 1;
            }
        }
        let n = sents.len() as f64;
        let idf = |st: &str| {
            let df = sf.get(st).copied().unwrap_or(0) as f64;
            libm::log(1.0 + (n - df + 0.5) / (df + 0.5))
        };

        let s = &sents[best_idx];
        let candidates: Vec<(usize, f64)> = s
            .tokens
            .iter()
            .zip(&s.stems)
            .enumerate()
            .filter(|(_, (t, st))| !is_stopword(t) && !q_stems.contains(*st))
            .map(|(i, (_, st))| (i, idf(st)))
            .collect();
        let Some(max_idf) = candidates.iter().map(|c| c.1).reduce(f64::max) else {
            return Answer::abstain();
        };
        let chosen: Vec<usize> = candidates
            .iter()
            .filter(|c| c.1 >= max_idf - 1e-12)
            .map(|c| c.0)
            .collect();
        let (a, b) = shortest_cover(&s.stems, &chosen);
        let char_start = s.offset + s.spans[a].0;
        let char_end = s.offset + s.spans[b].1;
        Answer {
            text: String::from(&context[char_start..char_end]),
            start: s.first_token + a,
            end: s.first_token + b,
            char_start,
            char_end,
            score: best_overlap as f64 + max_idf / (1.0 + max_idf),
        }
    }
}

/// Shortest token window `[a, b]` containing at least one occurrence of the
/// stem at every position in `chosen`. Earliest window wins ties.
fn shortest_cover(stems: &[String], chosen: &[usize]) -> (usize, usize) {
    let needed: BTreeSet<&str> = chosen.iter().map(|&i| stems[i].as_str()).collect();
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    let mut have = 0;
    let mut best = (chosen[0], chosen[0]);
    let mut best_len = usize::MAX;
    let mut left = 0;
    for right in 0..stems.len() {
        let r = stems[right].as_str();
        if needed.contains(r) {
            let c = counts.entry(r).or_insert(0);
            *c += 1;
            if *c == 1 {
                have += 1;
            }
        }
        while have == needed.len() {
            if right - left < best_len {
                best_len = right - left;
                best = (left, right);
            }
            let l = stems[left].as_str();
            if let Some(c) = counts.get_mut(l) {
                *c -= 1;
                if *c == 0 {
                    have -= 1;
                }
            }
            left += 1;
        }
    }
    best
}

impl Reader for LexicalReader {
    fn name(&self) -> &str {
        "lexical"
    }

    fn read(&self, input: &ReaderInput) -> Result<Answer> {
        read_chunked(&input.context, input.max_tokens, DEFAULT_CHUNK_OVERLAP, |chunk| {
            Ok(self.read_whole(chunk, &input.question))
        })
    }
}
