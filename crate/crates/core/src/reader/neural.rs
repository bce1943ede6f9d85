//! Attention reader: `[CLS] question [SEP] context` is embedded, passed
//! through sliding-window/global attention layers, and decoded with start/end
//! span heads. `[CLS]` and the question tokens are global.
//!
//! The weights are either seeded or loaded; this is an exact kernel, not a
//! trained model.

use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec::Vec;

use super::attention::{attention_sliding, Qkv};
use super::span::{decode_span, span_logits, SpanHeads};
use super::{read_chunked, Answer, Reader, ReaderInput, DEFAULT_CHUNK_OVERLAP, DEFAULT_MAX_SPAN_LEN};
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::rng::{chacha, gaussian_matrix};
use crate::text::{tokenize_raw, EmbedModel};

const CLS: &str = "<cls>";
const SEP: &str = "<sep>";

#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams {
    pub wq: Matrix,
    pub wk: Matrix,
    pub wv: Matrix,
    pub wq_global: Matrix,
    pub wk_global: Matrix,
    pub wv_global: Matrix,
    /// Output projection applied before the residual connection.
    pub wo: Matrix,
}

impl LayerParams {
    pub fn matrices(&self) -> [(&'static str, &Matrix); 7] {
        [
            ("wq", &self.wq),
            ("wk", &self.wk),
            ("wv", &self.wv),
            ("wq_global", &self.wq_global),
            ("wk_global", &self.wk_global),
            ("wv_global", &self.wv_global),
            ("wo", &self.wo),
        ]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttentionParams {
    pub hidden: usize,
    pub layers: Vec<LayerParams>,
    pub heads: SpanHeads,
}

impl AttentionParams {
    pub fn seeded(hidden: usize, n_layers: usize, seed: u64) -> Self {
        let std = 1.0 / libm::sqrt(hidden as f64);
        let mut rng = chacha(seed, 0x5eed);
        let mut mat = || gaussian_matrix(hidden, hidden, std, &mut rng);
        let layers = (0..n_layers)
            .map(|_| LayerParams {
                wq: mat(),
                wk: mat(),
                wv: mat(),
                wq_global: mat(),
                wk_global: mat(),
                wv_global: mat(),
                wo: mat(),
            })
            .collect();
        let heads = mat();
        AttentionParams {
            hidden,
            layers,
            heads: SpanHeads {
                w_start: heads.row(0).to_vec(),
                w_end: heads.row(1 % hidden.max(1)).to_vec(),
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        let h = self.hidden;
        for layer in &self.layers {
            for (_, m) in layer.matrices() {
                if m.rows() != h || m.cols() != h {
                    return Err(Error::DimensionMismatch {
                        context: "attention layer weight",
                        expected: h,
                        found: if m.rows() != h { m.rows() } else { m.cols() },
                    });
                }
            }
        }
        if self.heads.w_start.len() != h || self.heads.w_end.len() != h {
            return Err(Error::DimensionMismatch {
                context: "span heads",
                expected: h,
                found: self.heads.w_start.len(),
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct AttentionReader {
    embed: Arc<EmbedModel>,
    params: AttentionParams,
    pub window: usize,
    pub max_span_len: usize,
}

impl AttentionReader {
    pub fn new(embed: Arc<EmbedModel>, params: AttentionParams, window: usize) -> Result<Self> {
        params.validate()?;
        if params.hidden != embed.dim() {
            return Err(Error::DimensionMismatch {
                context: "reader hidden size vs embedding dim",
                expected: embed.dim(),
                found: params.hidden,
            });
        }
        if window == 0 {
            return Err(Error::invalid("attention window", "must be at least 1"));
        }
        Ok(AttentionReader {
            embed,
            params,
            window,
            max_span_len: DEFAULT_MAX_SPAN_LEN,
        })
    }

    pub fn params(&self) -> &AttentionParams {
        &self.params
    }

    fn input_states(&self, tokens: &[&str]) -> Matrix {
        let h = self.params.hidden;
        let mut x = Matrix::zeros(tokens.len(), h);
        for (pos, tok) in tokens.iter().enumerate() {
            let v = self.embed.token_vector(tok);
            let row = x.row_mut(pos);
            for (i, (r, e)) in row.iter_mut().zip(v).enumerate() {
                // sinusoidal position code
                let rate = libm::pow(10_000.0, (2 * (i / 2)) as f64 / h as f64);
                let angle = pos as f64 / rate;
                let p = if i % 2 == 0 { libm::sin(angle) } else { libm::cos(angle) };
                *r = e + 0.1 * p;
            }
        }
        x
    }

    /// Final hidden states for a token sequence and its global mask.
    pub fn encode(&self, tokens: &[&str], global_mask: &[bool]) -> Result<Matrix> {
        let mut x = self.input_states(tokens);
        for layer in &self.params.layers {
            let q = x.matmul(&layer.wq)?;
            let k = x.matmul(&layer.wk)?;
            let v = x.matmul(&layer.wv)?;
            let qg = x.matmul(&layer.wq_global)?;
            let kg = x.matmul(&layer.wk_global)?;
            let vg = x.matmul(&layer.wv_global)?;
            let attn = attention_sliding(
                Qkv { q: &q, k: &k, v: &v },
                self.window,
                global_mask,
                Qkv { q: &qg, k: &kg, v: &vg },
            )?;
            let update = attn.matmul(&layer.wo)?;
            for (a, u) in x.as_mut_slice().iter_mut().zip(update.as_slice()) {
                *a += u;
            }
            layer_norm(&mut x);
        }
        Ok(x)
    }

    fn read_chunk(&self, context: &str, question: &[String]) -> Result<Answer> {
        let ctx = tokenize_raw(context);
        if ctx.is_empty() {
            return Ok(Answer::abstain());
        }
        let mut tokens: Vec<&str> = Vec::with_capacity(question.len() + ctx.len() + 2);
        tokens.push(CLS);
        tokens.extend(question.iter().map(String::as_str));
        tokens.push(SEP);
        let ctx_start = tokens.len();
        tokens.extend(ctx.iter());
        let global: Vec<bool> = (0..tokens.len()).map(|i| i < ctx_start - 1).collect();
        let states = self.encode(&tokens, &global)?;
        let (start, end) = span_logits(&states, &self.params.heads)?;
        let best = decode_span(&start, &end, self.max_span_len, (ctx_start, tokens.len()))?;
        let (s, e) = (best.start - ctx_start, best.end - ctx_start);
        let (char_start, char_end) = (ctx.offsets[s].0, ctx.offsets[e].1);
        Ok(Answer {
            text: String::from(&context[char_start..char_end]),
            start: s,
            end: e,
            char_start,
            char_end,
            score: best.score,
        })
    }
}

fn layer_norm(x: &mut Matrix) {
    let h = x.cols() as f64;
    for r in 0..x.rows() {
        let row = x.row_mut(r);
        let mean = row.iter().sum::<f64>() / h;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / h;
        let inv = 1.0 / libm::sqrt(var + 1e-5);
        row.iter_mut().for_each(|v| *v = (*v - mean) * inv);
    }
}

impl Reader for AttentionReader {
    fn name(&self) -> &str {
        "attention"
    }

    fn read(&self, input: &ReaderInput) -> Result<Answer> {
        let mut question = tokenize_raw(&input.question).tokens;
        // Keep at least half of the budget for context.
        question.truncate(input.max_tokens / 2);
        let budget = input.max_tokens.saturating_sub(question.len() + 2);
        if budget == 0 {
            return Err(Error::invalid("reader input", "max_tokens leaves no room for context"));
        }
        read_chunked(&input.context, budget, DEFAULT_CHUNK_OVERLAP, |chunk| {
            self.read_chunk(chunk, &question)
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn reader() -> AttentionReader {
        let embed = Arc::new(EmbedModel::with_buckets(16, 10, 4).unwrap());
        AttentionReader::new(embed, AttentionParams::seeded(16, 2, 11), 8).unwrap()
    }

    #[test]
    fn deterministic_and_consistent() {
        let r = reader();
        let input = ReaderInput::new(
            "The nucleus is at the center of the atom. Electrons orbit it.",
            "What is at the center of an atom?",
        );
        let a = r.read(&input).unwrap();
        let b = r.read(&input).unwrap();
        assert_eq!(a, b);
        assert_eq!(&input.context[a.char_start..a.char_end], a.text);
        assert!(a.end >= a.start && a.end - a.start < r.max_span_len);
    }

    #[test]
    fn rejects_bad_shapes() {
        let embed = Arc::new(EmbedModel::with_buckets(16, 10, 4).unwrap());
        assert!(AttentionReader::new(embed.clone(), AttentionParams::seeded(8, 1, 1), 8).is_err());
        let mut p = AttentionParams::seeded(16, 1, 1);
        p.heads.w_end.pop();
        assert!(AttentionReader::new(embed, p, 8).is_err());
    }

    #[test]
    fn chunked_read_matches_single_chunk() {
        let r = reader();
        let mut input = ReaderInput::new(
            "Lava comes from volcanoes near the coast.",
            "Where does lava come from?",
        );
        let whole = r.read(&input).unwrap();
        input.max_tokens = 64;
        assert_eq!(r.read(&input).unwrap(), whole);
    }
}
