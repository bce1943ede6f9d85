//! Binary dense-index and weight files.
//!
//! Both start with a 4-byte magic and a little-endian `u32` version. A dense
//! index continues with `measure: u8`, 3 reserved bytes, `n_docs: u64`,
//! `dim: u32`, the rows as little-endian `f32`, and finally the id map as
//! `u32`-length-prefixed UTF-8 strings. A weight file continues with
//! `n_sections: u32` and a section table of `(name, rows: u32, cols: u32,
//! offset: u64)` entries, names `u16`-length-prefixed; each section's data
//! is `rows * cols` little-endian `f64` values at `offset`.

use std::fs;
use std::path::Path;
use std::sync::Arc;

use eduqa_core::corpus::Measure;
use eduqa_core::linalg::Matrix;
use eduqa_core::reader::{AttentionParams, LayerParams, SpanHeads};
use eduqa_core::retrieval::{DenseIndex, DualEncoder};
use eduqa_core::text::EmbedModel;

use crate::error::{Error, Result};

pub const INDEX_MAGIC: &[u8; 4] = b"EDQI";
pub const WEIGHTS_MAGIC: &[u8; 4] = b"EDQW";
pub const VERSION: u32 = 1;

fn measure_code(m: Measure) -> u8 {
    match m {
        Measure::Transcript => 0,
        Measure::Caption => 1,
        Measure::Joint => 2,
    }
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| Error::Validation(format!("{}: truncated at byte {}", self.path.display(), self.pos)))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn array<const N: usize>(&mut self) -> Result<[u8; N]> {
        Ok(self.take(N)?.try_into().expect("length checked"))
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.array()?))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.array()?))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.array()?))
    }

    fn string(&mut self, len: usize) -> Result<String> {
        let bytes = self.take(len)?;
        String::from_utf8(bytes.to_vec())
            .map_err(|_| Error::Validation(format!("{}: invalid UTF-8 string", self.path.display())))
    }

    fn header(&mut self, magic: &[u8; 4]) -> Result<()> {
        if &self.array::<4>()? != magic {
            return Err(Error::Validation(format!(
                "{}: bad magic, expected {}",
                self.path.display(),
                String::from_utf8_lossy(magic)
            )));
        }
        let v = self.u32()?;
        if v != VERSION {
            return Err(Error::Validation(format!(
                "{}: unsupported version {v}",
                self.path.display()
            )));
        }
        Ok(())
    }
}

fn to_usize(x: u64, path: &Path) -> Result<usize> {
    usize::try_from(x).map_err(|_| Error::Validation(format!("{}: size {x} too large", path.display())))
}

pub fn encode_index(index: &DenseIndex) -> Vec<u8> {
    let rows = index.rows();
    let mut out = Vec::with_capacity(24 + rows.as_slice().len() * 4);
    out.extend_from_slice(INDEX_MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.push(measure_code(index.measure()));
    out.extend_from_slice(&[0; 3]);
    out.extend_from_slice(&(index.len() as u64).to_le_bytes());
    out.extend_from_slice(&(index.dim() as u32).to_le_bytes());
    for &x in rows.as_slice() {
        out.extend_from_slice(&(x as f32).to_le_bytes());
    }
    for id in index.ids() {
        out.extend_from_slice(&(id.len() as u32).to_le_bytes());
        out.extend_from_slice(id.as_bytes());
    }
    out
}

pub fn decode_index(buf: &[u8], path: &Path) -> Result<DenseIndex> {
    let mut c = Cursor { buf, pos: 0, path };
    c.header(INDEX_MAGIC)?;
    let measure = match c.u8()? {
        0 => Measure::Transcript,
        1 => Measure::Caption,
        2 => Measure::Joint,
        m => {
            return Err(Error::Validation(format!(
                "{}: unknown measure code {m}",
                path.display()
            )))
        }
    };
    c.take(3)?;
    let n = to_usize(c.u64()?, path)?;
    let dim = c.u32()? as usize;
    let width = if measure == Measure::Joint { 2 * dim } else { dim };
    let count = n
        .checked_mul(width)
        .ok_or_else(|| Error::Validation(format!("{}: size overflow", path.display())))?;
    let raw = c.take(count.saturating_mul(4))?;
    let data = raw
        .chunks_exact(4)
        .map(|b| f64::from(f32::from_le_bytes(b.try_into().expect("4 bytes"))))
        .collect();
    let mut ids = Vec::with_capacity(n);
    for _ in 0..n {
        let len = c.u32()? as usize;
        ids.push(c.string(len)?);
    }
    if c.pos != buf.len() {
        return Err(Error::Validation(format!(
            "{}: trailing bytes after id map",
            path.display()
        )));
    }
    Ok(DenseIndex::from_rows(
        measure,
        dim,
        ids,
        Matrix::from_vec(n, width, data)?,
    )?)
}

pub fn write_index(index: &DenseIndex, path: &Path) -> Result<()> {
    fs::write(path, encode_index(index)).map_err(|e| Error::io(path, e))
}

pub fn read_index(path: &Path) -> Result<DenseIndex> {
    let buf = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_index(&buf, path)
}

/// Named matrices in file order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct WeightFile {
    pub sections: Vec<(String, Matrix)>,
}

impl WeightFile {
    pub fn get(&self, name: &str) -> Option<&Matrix> {
        self.sections.iter().find(|(n, _)| n == name).map(|(_, m)| m)
    }

    fn require(&self, name: &str) -> Result<&Matrix> {
        self.get(name)
            .ok_or_else(|| Error::Validation(format!("weight file has no section `{name}`")))
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(WEIGHTS_MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(self.sections.len() as u32).to_le_bytes());
        let table_len: usize = self.sections.iter().map(|(n, _)| 2 + n.len() + 16).sum();
        let mut offset = (out.len() + table_len) as u64;
        for (name, m) in &self.sections {
            out.extend_from_slice(&(name.len() as u16).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.extend_from_slice(&(m.rows() as u32).to_le_bytes());
            out.extend_from_slice(&(m.cols() as u32).to_le_bytes());
            out.extend_from_slice(&offset.to_le_bytes());
            offset += (m.as_slice().len() * 8) as u64;
        }
        for (_, m) in &self.sections {
            for &x in m.as_slice() {
                out.extend_from_slice(&x.to_le_bytes());
            }
        }
        out
    }

    pub fn decode(buf: &[u8], path: &Path) -> Result<Self> {
        let mut c = Cursor { buf, pos: 0, path };
        c.header(WEIGHTS_MAGIC)?;
        let n = c.u32()? as usize;
        let mut table = Vec::with_capacity(n.min(1024));
        for _ in 0..n {
            let len = c.u16()? as usize;
            let name = c.string(len)?;
            let rows = c.u32()? as usize;
            let cols = c.u32()? as usize;
            let offset = to_usize(c.u64()?, path)?;
            table.push((name, rows, cols, offset));
        }
        let mut sections = Vec::with_capacity(table.len());
        for (name, rows, cols, offset) in table {
            let mut d = Cursor { buf, pos: offset, path };
            let raw = d.take(rows.saturating_mul(cols).saturating_mul(8))?;
            let data = raw
                .chunks_exact(8)
                .map(|b| f64::from_le_bytes(b.try_into().expect("8 bytes")))
                .collect();
            sections.push((name, Matrix::from_vec(rows, cols, data)?));
        }
        Ok(WeightFile { sections })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.encode()).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let buf = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::decode(&buf, path)
    }
}

pub fn retriever_weights(enc: &DualEncoder) -> WeightFile {
    WeightFile {
        sections: vec![
            ("topic".to_string(), enc.topic.projection().clone()),
            ("video".to_string(), enc.video.projection().clone()),
        ],
    }
}

pub fn retriever_from_weights(w: &WeightFile, embed: Arc<EmbedModel>) -> Result<DualEncoder> {
    let topic = w.require("topic")?.clone();
    let video = w.require("video")?.clone();
    Ok(DualEncoder::from_projections(embed, topic, video)?)
}

pub fn attention_weights(p: &AttentionParams) -> WeightFile {
    let mut sections = Vec::new();
    for (i, layer) in p.layers.iter().enumerate() {
        for (name, m) in layer.matrices() {
            sections.push((format!("layer{i}.{name}"), m.clone()));
        }
    }
    let heads = Matrix::from_rows(&[p.heads.w_start.clone(), p.heads.w_end.clone()]).expect("equal head lengths");
    sections.push(("heads".to_string(), heads));
    WeightFile { sections }
}

pub fn attention_from_weights(w: &WeightFile) -> Result<AttentionParams> {
    let heads = w.require("heads")?;
    if heads.rows() != 2 {
        return Err(Error::Validation("section `heads` must have 2 rows".to_string()));
    }
    let mut layers = Vec::new();
    while w.get(&format!("layer{}.wq", layers.len())).is_some() {
        let i = layers.len();
        let m = |name: &str| w.require(&format!("layer{i}.{name}")).cloned();
        layers.push(LayerParams {
            wq: m("wq")?,
            wk: m("wk")?,
            wv: m("wv")?,
            wq_global: m("wq_global")?,
            wk_global: m("wk_global")?,
            wv_global: m("wv_global")?,
            wo: m("wo")?,
        });
    }
    let params = AttentionParams {
        hidden: heads.cols(),
        layers,
        heads: SpanHeads {
            w_start: heads.row(0).to_vec(),
            w_end: heads.row(1).to_vec(),
        },
    };
    params.validate()?;
    Ok(params)
}
