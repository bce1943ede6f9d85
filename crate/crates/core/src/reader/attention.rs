//! Scaled dot-product attention, full and sliding-window/global.
//!
//! Sliding-window attention: a non-global token `i` attends to tokens `j`
//! with `|i − j| ≤ w/2` plus every global token, using the sliding
//! projections. Global tokens attend to every token using the global
//! projections. Positions outside a token's pattern are treated as `−∞`
//! logits, so they are simply never evaluated. Cost is `O(n·(w + g))`.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::linalg::{dot, softmax, Matrix};

/// Query, key and value matrices of one attention pattern.
#[derive(Debug, Clone, Copy)]
pub struct Qkv<'a> {
    pub q: &'a Matrix,
    pub k: &'a Matrix,
    pub v: &'a Matrix,
}

impl Qkv<'_> {
    fn check(&self) -> Result<()> {
        let n = self.q.rows();
        if self.k.rows() != n || self.v.rows() != n {
            return Err(Error::DimensionMismatch {
                context: "attention sequence length",
                expected: n,
                found: if self.k.rows() != n {
                    self.k.rows()
                } else {
                    self.v.rows()
                },
            });
        }
        if self.q.cols() != self.k.cols() {
            return Err(Error::DimensionMismatch {
                context: "attention key dim",
                expected: self.q.cols(),
                found: self.k.cols(),
            });
        }
        Ok(())
    }
}

/// Attends query row `i` over the listed key positions.
fn attend_row(p: &Qkv<'_>, i: usize, keys: &[usize], scale: f64, out: &mut [f64]) {
    let q = p.q.row(i);
    let logits: Vec<f64> = keys.iter().map(|&j| dot(q, p.k.row(j)) * scale).collect();
    let w = softmax(&logits);
    out.iter_mut().for_each(|o| *o = 0.0);
    for (&j, &wj) in keys.iter().zip(&w) {
        for (o, &vj) in out.iter_mut().zip(p.v.row(j)) {
            *o += wj * vj;
        }
    }
}

/// `softmax(Q Kᵀ / √d_k) V`, row-wise softmax.
pub fn attention_full(q: &Matrix, k: &Matrix, v: &Matrix) -> Result<Matrix> {
    let p = Qkv { q, k, v };
    p.check()?;
    let n = q.rows();
    let scale = 1.0 / libm::sqrt(q.cols() as f64);
    let keys: Vec<usize> = (0..n).collect();
    let mut out = Matrix::zeros(n, v.cols());
    for i in 0..n {
        attend_row(&p, i, &keys, scale, out.row_mut(i));
    }
    Ok(out)
}

/// Sliding-window attention with global tokens.
pub fn attention_sliding(sliding: Qkv<'_>, window: usize, global_mask: &[bool], global: Qkv<'_>) -> Result<Matrix> {
    attention_sliding_counted(sliding, window, global_mask, global).map(|(m, _)| m)
}

/// As [`attention_sliding`], also returning the number of query·key score
/// evaluations performed.
pub fn attention_sliding_counted(
    sliding: Qkv<'_>,
    window: usize,
    global_mask: &[bool],
    global: Qkv<'_>,
) -> Result<(Matrix, usize)> {
    if window < 1 {
        return Err(Error::invalid("attention window", "must be at least 1"));
    }
    sliding.check()?;
    global.check()?;
    let n = sliding.q.rows();
    if global.q.rows() != n || global_mask.len() != n {
        return Err(Error::DimensionMismatch {
            context: "global attention length",
            expected: n,
            found: if global_mask.len() != n {
                global_mask.len()
            } else {
                global.q.rows()
            },
        });
    }
    if global.v.cols() != sliding.v.cols() {
        return Err(Error::DimensionMismatch {
            context: "global value dim",
            expected: sliding.v.cols(),
            found: global.v.cols(),
        });
    }
    let half = window / 2;
    let scale_s = 1.0 / libm::sqrt(sliding.q.cols() as f64);
    let scale_g = 1.0 / libm::sqrt(global.q.cols() as f64);
    let globals: Vec<usize> = (0..n).filter(|&j| global_mask[j]).collect();
    let all: Vec<usize> = (0..n).collect();
    let mut out = Matrix::zeros(n, sliding.v.cols());
    let mut evals = 0usize;
    let mut keys = Vec::new();
    for (i, &is_global) in global_mask.iter().enumerate() {
        if is_global {
            attend_row(&global, i, &all, scale_g, out.row_mut(i));
            evals += n;
            continue;
        }
        let lo = i.saturating_sub(half);
        let hi = (i + half + 1).min(n);
        keys.clear();
        // Merge global positions left of, then right of, the window.
        keys.extend(globals.iter().copied().filter(|&j| j < lo));
        keys.extend(lo..hi);
        keys.extend(globals.iter().copied().filter(|&j| j >= hi));
        attend_row(&sliding, i, &keys, scale_s, out.row_mut(i));
        evals += keys.len();
    }
    Ok((out, evals))
}
