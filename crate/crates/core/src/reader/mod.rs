//! Extractive reading comprehension.
//!
//! A reader receives a context (transcript, caption text or both) and a
//! question and returns a span of the context. Backends: a lexical
//! sentence-overlap reader, a sliding-window attention reader with start/end
//! span heads, and (in the `eduqa` crate) a subprocess adapter.

use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::text::tokenize_raw;

pub mod attention;
pub mod lexical;
pub mod neural;
pub mod span;

pub use attention::{attention_full, attention_sliding, attention_sliding_counted, Qkv};
pub use lexical::LexicalReader;
pub use neural::{AttentionParams, AttentionReader, LayerParams};
pub use span::{decode_span, span_logits, SpanChoice, SpanHeads};

pub const DEFAULT_MAX_TOKENS: usize = 4096;
pub const DEFAULT_MAX_SPAN_LEN: usize = 30;
pub const DEFAULT_CHUNK_OVERLAP: usize = 128;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReaderInput {
    pub context: String,
    pub question: String,
    /// Budget for the whole encoded sequence (question, separators, context).
    pub max_tokens: usize,
}

impl ReaderInput {
    pub fn new(context: impl Into<String>, question: impl Into<String>) -> Self {
        ReaderInput {
            context: context.into(),
            question: question.into(),
            max_tokens: DEFAULT_MAX_TOKENS,
        }
    }
}

/// An extracted span. `start`/`end` are inclusive context token indices,
/// `char_start..char_end` the byte range of `text` inside the context.
#[derive(Debug, Clone, PartialEq)]
pub struct Answer {
    pub text: String,
    pub start: usize,
    pub end: usize,
    pub char_start: usize,
    pub char_end: usize,
    pub score: f64,
}

impl Answer {
    /// The "no answer" marker: empty text and the lowest possible score.
    pub fn abstain() -> Self {
        Answer {
            text: String::new(),
            start: 0,
            end: 0,
            char_start: 0,
            char_end: 0,
            score: f64::NEG_INFINITY,
        }
    }

    pub fn is_abstention(&self) -> bool {
        self.text.is_empty() && self.score == f64::NEG_INFINITY
    }

    fn shifted(mut self, tokens: usize, bytes: usize) -> Self {
        if !self.is_abstention() {
            self.start += tokens;
            self.end += tokens;
            self.char_start += bytes;
            self.char_end += bytes;
        }
        self
    }
}

pub trait Reader: Send + Sync {
    fn name(&self) -> &str;
    fn read(&self, input: &ReaderInput) -> Result<Answer>;
}

/// Inclusive-exclusive token ranges covering `n` tokens with chunks of at
/// most `chunk_len` tokens overlapping by `overlap` tokens.
pub fn chunk_ranges(n: usize, chunk_len: usize, overlap: usize) -> Vec<(usize, usize)> {
    if n == 0 || chunk_len == 0 {
        return Vec::new();
    }
    let stride = if chunk_len > overlap {
        chunk_len - overlap
    } else {
        chunk_len
    };
    let mut out = Vec::new();
    let mut start = 0;
    loop {
        let end = (start + chunk_len).min(n);
        out.push((start, end));
        if end == n {
            return out;
        }
        start += stride;
    }
}

/// Runs `read_one` on each chunk of the context that fits into
/// `chunk_tokens` tokens and keeps the best-scoring answer (first on ties).
/// Offsets of the result refer to the full context.
pub fn read_chunked<F>(context: &str, chunk_tokens: usize, overlap: usize, mut read_one: F) -> Result<Answer>
where
    F: FnMut(&str) -> Result<Answer>,
{
    if context.trim().is_empty() {
        return Err(Error::Empty("context"));
    }
    let toks = tokenize_raw(context);
    if toks.len() <= chunk_tokens {
        return read_one(context);
    }
    let mut best = Answer::abstain();
    for (a, b) in chunk_ranges(toks.len(), chunk_tokens, overlap) {
        let from = toks.offsets[a].0;
        let to = toks.offsets[b - 1].1;
        let ans = read_one(&context[from..to])?.shifted(a, from);
        if best.is_abstention() && !ans.is_abstention() || ans.score > best.score {
            best = ans;
        }
    }
    Ok(best)
}
