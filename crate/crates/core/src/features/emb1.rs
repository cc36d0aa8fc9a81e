//! EMB1 container: little-endian header `"EMB1" | u32 version | u32 count |
//! u32 dim` followed by `count` records of
//! `u16 id_len | id | u8 label | dim×f32 visual | dim×f32 text | dim×f32 freq`.

use std::fmt;
use std::path::Path;

use crate::error::{Error, Result};

pub const EMB1_MAGIC: &[u8; 4] = b"EMB1";
pub const EMB1_VERSION: u32 = 1;
pub const EMB1_HEADER_LEN: usize = 16;
/// Per-modality embedding width.
pub const EMBED_DIM: usize = 768;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Label {
    Real = 0,
    Fake = 1,
}

impl Label {
    pub fn from_u8(v: u8) -> Option<Label> {
        match v {
            0 => Some(Label::Real),
            1 => Some(Label::Fake),
            _ => None,
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Label::Real => "real",
            Label::Fake => "fake",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingRecord {
    pub id: String,
    pub label: Label,
    pub visual: Vec<f32>,
    pub text: Vec<f32>,
    pub freq: Vec<f32>,
}

impl EmbeddingRecord {
    pub fn zeros(id: impl Into<String>, label: Label) -> Self {
        EmbeddingRecord {
            id: id.into(),
            label,
            visual: vec![0.0; EMBED_DIM],
            text: vec![0.0; EMBED_DIM],
            freq: vec![0.0; EMBED_DIM],
        }
    }

    pub fn modalities(&self) -> [&[f32]; 3] {
        [&self.visual, &self.text, &self.freq]
    }

    fn check(&self, index: usize) -> Result<()> {
        for (name, v) in ["visual", "text", "freq"].iter().zip(self.modalities()) {
            if v.len() != EMBED_DIM {
                return Err(Error::format(
                    Some(index),
                    format!("{name} has dim {}, expected {EMBED_DIM}", v.len()),
                ));
            }
        }
        if self.id.len() > usize::from(u16::MAX) {
            return Err(Error::format(Some(index), "id longer than 65535 bytes"));
        }
        Ok(())
    }

    /// Serialized size in bytes.
    pub fn encoded_len(&self) -> usize {
        2 + self.id.len() + 1 + 3 * EMBED_DIM * 4
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct EmbeddingDataset {
    pub records: Vec<EmbeddingRecord>,
}

impl EmbeddingDataset {
    pub fn new(records: Vec<EmbeddingRecord>) -> Self {
        EmbeddingDataset { records }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, EmbeddingRecord> {
        self.records.iter()
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let body: usize = self.records.iter().map(EmbeddingRecord::encoded_len).sum();
        let mut out = Vec::with_capacity(EMB1_HEADER_LEN + body);
        out.extend_from_slice(EMB1_MAGIC);
        out.extend_from_slice(&EMB1_VERSION.to_le_bytes());
        let count = u32::try_from(self.records.len())
            .map_err(|_| Error::format(None, "too many records for EMB1"))?;
        out.extend_from_slice(&count.to_le_bytes());
        out.extend_from_slice(&(EMBED_DIM as u32).to_le_bytes());
        for (i, rec) in self.records.iter().enumerate() {
            rec.check(i)?;
            out.extend_from_slice(&(rec.id.len() as u16).to_le_bytes());
            out.extend_from_slice(rec.id.as_bytes());
            out.push(rec.label as u8);
            for v in rec.modalities() {
                for x in v {
                    out.extend_from_slice(&x.to_le_bytes());
                }
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        let header = |reason: &str| Error::format(None, reason.to_string());
        if r.take(4).ok_or_else(|| header("truncated header"))? != EMB1_MAGIC {
            return Err(header("bad magic, expected EMB1"));
        }
        let version = r.u32().ok_or_else(|| header("truncated header"))?;
        if version != EMB1_VERSION {
            return Err(Error::format(None, format!("unsupported version {version}")));
        }
        let count = r.u32().ok_or_else(|| header("truncated header"))? as usize;
        let dim = r.u32().ok_or_else(|| header("truncated header"))? as usize;
        if dim != EMBED_DIM {
            return Err(Error::format(None, format!("dim {dim}, expected {EMBED_DIM}")));
        }

        let mut records = Vec::with_capacity(count.min(1 << 16));
        for index in 0..count {
            let truncated = || Error::format(Some(index), "truncated record");
            let id_len = r.u16().ok_or_else(truncated)? as usize;
            let id = std::str::from_utf8(r.take(id_len).ok_or_else(truncated)?)
                .map_err(|_| Error::format(Some(index), "id is not UTF-8"))?
                .to_string();
            let raw_label = r.u8().ok_or_else(truncated)?;
            let label = Label::from_u8(raw_label)
                .ok_or_else(|| Error::format(Some(index), format!("label {raw_label} not in {{0, 1}}")))?;
            let mut vec = || -> Result<Vec<f32>> {
                let raw = r.take(dim * 4).ok_or_else(truncated)?;
                Ok(raw
                    .chunks_exact(4)
                    .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                    .collect())
            };
            let visual = vec()?;
            let text = vec()?;
            let freq = vec()?;
            records.push(EmbeddingRecord {
                id,
                label,
                visual,
                text,
                freq,
            });
        }
        if r.pos != bytes.len() {
            return Err(Error::format(
                None,
                format!("{} trailing bytes after {count} records", bytes.len() - r.pos),
            ));
        }
        Ok(EmbeddingDataset { records })
    }
}

struct Reader<'b> {
    bytes: &'b [u8],
    pos: usize,
}

impl<'b> Reader<'b> {
    fn take(&mut self, n: usize) -> Option<&'b [u8]> {
        let end = self.pos.checked_add(n)?;
        let out = self.bytes.get(self.pos..end)?;
        self.pos = end;
        Some(out)
    }

    fn u8(&mut self) -> Option<u8> {
        self.take(1).map(|b| b[0])
    }

    fn u16(&mut self) -> Option<u16> {
        self.take(2).map(|b| u16::from_le_bytes([b[0], b[1]]))
    }

    fn u32(&mut self) -> Option<u32> {
        self.take(4).map(|b| u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }
}

pub fn read_emb1(path: impl AsRef<Path>) -> Result<EmbeddingDataset> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    EmbeddingDataset::from_bytes(&bytes)
}

pub fn write_emb1(dataset: &EmbeddingDataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = dataset.to_bytes()?;
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}
