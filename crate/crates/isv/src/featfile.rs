//! Feature archive: labeled `frames × 64` matrices.
//!
//! ```text
//! "ISVFEAT1" | bands u32 | count u64
//! per record: id str | speaker str | label u8 | frames u32 | window u32 | hop u32 | frames × bands × f64
//! ```

use std::collections::HashSet;
use std::path::Path;

use isv_core::features::{FeatureMatrix, BANDS};
use isv_core::SpoofLabel;

use crate::binio::{expect_magic, label_byte, label_from_byte, Reader, Writer};
use crate::error::{Error, Result};
use crate::fsio::{read_bytes, write_bytes};

pub const FEATURE_MAGIC: &[u8; 8] = b"ISVFEAT1";

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureRecord {
    pub id: String,
    pub speaker: String,
    pub label: SpoofLabel,
    pub features: FeatureMatrix,
}

pub fn features_to_bytes(records: &[FeatureRecord]) -> Result<Vec<u8>> {
    let mut seen = HashSet::new();
    let mut w = Writer::default();
    w.bytes(FEATURE_MAGIC);
    w.u32(BANDS as u32);
    w.u64(records.len() as u64);
    for r in records {
        if !seen.insert(r.id.as_str()) {
            return Err(Error::Format(format!("duplicate feature id `{}`", r.id)));
        }
        w.str(&r.id);
        w.str(&r.speaker);
        w.u8(label_byte(r.label));
        w.u32(r.features.frames() as u32);
        w.u32(r.features.window as u32);
        w.u32(r.features.hop as u32);
        w.f64s(r.features.data());
    }
    Ok(w.buf)
}

pub fn features_from_bytes(bytes: &[u8]) -> Result<Vec<FeatureRecord>> {
    let mut r = Reader::new(bytes, "feature archive");
    expect_magic(&mut r, FEATURE_MAGIC, "feature archive")?;
    let bands = r.u32()? as usize;
    if bands != BANDS {
        return Err(Error::Format(format!("feature archive has {bands} bands, expected {BANDS}")));
    }
    let count = r.len(21)?;
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let id = r.str()?;
        let speaker = r.str()?;
        let label = label_from_byte(r.u8()?, "feature archive")?;
        let frames = r.u32()? as usize;
        let window = r.u32()? as usize;
        let hop = r.u32()? as usize;
        let data = r.f64s(frames * BANDS)?;
        let features = FeatureMatrix::new(frames, data, window, hop).map_err(|e| Error::Corrupt(format!("feature `{id}`: {e}")))?;
        out.push(FeatureRecord { id, speaker, label, features });
    }
    r.expect_end()?;
    Ok(out)
}

pub fn write_features(path: &Path, records: &[FeatureRecord]) -> Result<()> {
    let bytes = features_to_bytes(records)?;
    write_bytes(path, &bytes)
}

pub fn read_features(path: &Path) -> Result<Vec<FeatureRecord>> {
    features_from_bytes(&read_bytes(path)?)
}
