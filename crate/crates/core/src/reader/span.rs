//! Start/end span heads and span decoding.

use alloc::collections::VecDeque;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::linalg::{dot, Matrix};

#[derive(Debug, Clone, PartialEq)]
pub struct SpanHeads {
    pub w_start: Vec<f64>,
    pub w_end: Vec<f64>,
}

impl SpanHeads {
    pub fn hidden(&self) -> usize {
        self.w_start.len()
    }
}

/// `(P·W_start, P·W_end)` for hidden states `P` (L×h).
pub fn span_logits(hidden: &Matrix, heads: &SpanHeads) -> Result<(Vec<f64>, Vec<f64>)> {
    let h = hidden.cols();
    for w in [&heads.w_start, &heads.w_end] {
        if w.len() != h {
            return Err(Error::DimensionMismatch {
                context: "span head",
                expected: h,
                found: w.len(),
            });
        }
    }
    let start = (0..hidden.rows()).map(|i| dot(hidden.row(i), &heads.w_start)).collect();
    let end = (0..hidden.rows()).map(|i| dot(hidden.row(i), &heads.w_end)).collect();
    Ok((start, end))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpanChoice {
    pub start: usize,
    pub end: usize,
    pub score: f64,
}

/// Best `(s, e)` with `lo ≤ s ≤ e < min(s + max_span_len, hi)` maximising
/// `start[s] + end[e]`; ties go to the smallest `s`, then the smallest `e`.
///
/// Runs in `O(hi − lo)` using a monotone deque holding the running maximum of
/// `end` over the window `[s, s + max_span_len)`, scanned right to left.
pub fn decode_span(
    start_logits: &[f64],
    end_logits: &[f64],
    max_span_len: usize,
    range: (usize, usize),
) -> Result<SpanChoice> {
    let (lo, hi) = range;
    if start_logits.len() != end_logits.len() {
        return Err(Error::DimensionMismatch {
            context: "span logits",
            expected: start_logits.len(),
            found: end_logits.len(),
        });
    }
    if lo >= hi || hi > start_logits.len() {
        return Err(Error::Empty("context token range"));
    }
    if max_span_len == 0 {
        return Err(Error::invalid("max_span_len", "must be at least 1"));
    }
    // Indices with strictly increasing end logits from front to back; the
    // back is the window maximum, and the smallest index wins ties because
    // a newly pushed (smaller) index evicts equal values.
    let mut window: VecDeque<usize> = VecDeque::new();
    let mut best: Option<SpanChoice> = None;
    for s in (lo..hi).rev() {
        while window.front().is_some_and(|&f| end_logits[f] <= end_logits[s]) {
            window.pop_front();
        }
        window.push_front(s);
        let last = s + max_span_len - 1;
        while window.back().is_some_and(|&b| b > last) {
            window.pop_back();
        }
        let e = *window.back().expect("window holds s");
        let score = start_logits[s] + end_logits[e];
        // Scanning s downwards: `>=` keeps the smaller s on ties.
        if best.is_none_or(|b| score >= b.score) {
            best = Some(SpanChoice {
                start: s,
                end: e,
                score,
            });
        }
    }
    Ok(best.expect("non-empty range"))
}
