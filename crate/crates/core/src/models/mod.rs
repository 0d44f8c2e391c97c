//! Network definitions and the cosine baseline scorer.

mod backend;
mod e2e;
mod encoder;
mod frontend;
mod pad;

pub use backend::{shape_sv_score, Backend, BackendCache, BackendConfig, BackendExample, BackendOutput};
pub use e2e::{E2eConfig, E2eModel, E2eOutput};
pub use encoder::{Encoder, EncoderCache, EncoderConfig};
pub use frontend::{FrontendCache, FrontendModel, FrontendTask, MtlOutput};
pub use pad::PadClassifier;

use crate::error::{Error, Result};

/// Cosine similarity of two embeddings.
pub fn cosine_score(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::shape("cosine", &[a.len()], &[b.len()]));
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = libm::sqrt(a.iter().map(|x| x * x).sum());
    let nb = libm::sqrt(b.iter().map(|x| x * x).sum());
    if na == 0.0 || nb == 0.0 {
        return Err(Error::ZeroVector);
    }
    Ok((dot / (na * nb)).clamp(-1.0, 1.0))
}
