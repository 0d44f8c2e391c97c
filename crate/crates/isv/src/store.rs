//! Embedding store: per-utterance vectors with speaker and spoof labels.
//!
//! ```text
//! "ISVEMB01" | dim u32 | count u64
//! per record: id str | speaker str | label u8 | dim × f32
//! ```
//! Strings are a u32 byte length followed by UTF-8; all integers and floats
//! are little-endian.

use std::collections::HashMap;
use std::path::Path;

use isv_core::SpoofLabel;

use crate::binio::{expect_magic, label_byte, label_from_byte, Reader, Writer};
use crate::error::{Error, Result};
use crate::fsio::{read_bytes, write_bytes};

pub const EMBEDDING_MAGIC: &[u8; 8] = b"ISVEMB01";

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingRecord {
    pub id: String,
    pub speaker: String,
    pub label: SpoofLabel,
    pub vector: Vec<f32>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct EmbeddingStore {
    dim: usize,
    records: Vec<EmbeddingRecord>,
    index: HashMap<String, usize>,
}

impl EmbeddingStore {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            ..Default::default()
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn records(&self) -> &[EmbeddingRecord] {
        &self.records
    }

    pub fn insert(&mut self, record: EmbeddingRecord) -> Result<()> {
        if record.vector.len() != self.dim {
            return Err(Error::Format(format!(
                "embedding `{}` has dimension {}, store holds {}",
                record.id,
                record.vector.len(),
                self.dim
            )));
        }
        if self.index.contains_key(&record.id) {
            return Err(Error::Format(format!("duplicate embedding id `{}`", record.id)));
        }
        self.index.insert(record.id.clone(), self.records.len());
        self.records.push(record);
        Ok(())
    }

    /// Stores a 64-bit vector at 32-bit precision.
    pub fn insert_f64(&mut self, id: &str, speaker: &str, label: SpoofLabel, vector: &[f64]) -> Result<()> {
        self.insert(EmbeddingRecord {
            id: id.to_string(),
            speaker: speaker.to_string(),
            label,
            vector: vector.iter().map(|&v| v as f32).collect(),
        })
    }

    pub fn get(&self, id: &str) -> Option<&EmbeddingRecord> {
        self.index.get(id).map(|&i| &self.records[i])
    }

    pub fn vector(&self, id: &str) -> Option<Vec<f64>> {
        self.get(id).map(|r| r.vector.iter().map(|&v| f64::from(v)).collect())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::default();
        w.bytes(EMBEDDING_MAGIC);
        w.u32(self.dim as u32);
        w.u64(self.records.len() as u64);
        for r in &self.records {
            w.str(&r.id);
            w.str(&r.speaker);
            w.u8(label_byte(r.label));
            w.f32s(&r.vector);
        }
        w.buf
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes, "embedding store");
        expect_magic(&mut r, EMBEDDING_MAGIC, "embedding store")?;
        let dim = r.u32()? as usize;
        let count = r.len(9 + 4 * dim)?;
        let mut store = EmbeddingStore::new(dim);
        for _ in 0..count {
            let id = r.str()?;
            let speaker = r.str()?;
            let label = label_from_byte(r.u8()?, "embedding store")?;
            let vector = r.f32s(dim)?;
            store.insert(EmbeddingRecord { id, speaker, label, vector })?;
        }
        r.expect_end()?;
        Ok(store)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_bytes(path, &self.to_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&read_bytes(path)?)
    }
}

/// Writes records as a store; mixed dimensions or duplicate ids are rejected
/// before the file is touched.
pub fn write_store(path: &Path, records: &[EmbeddingRecord]) -> Result<()> {
    let dim = records.first().map_or(0, |r| r.vector.len());
    let mut store = EmbeddingStore::new(dim);
    for r in records {
        store.insert(r.clone())?;
    }
    store.save(path)
}
