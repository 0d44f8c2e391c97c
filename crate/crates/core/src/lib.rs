//! Spoofing-aware speaker verification, from the numeric kernel up.
//!
//! Everything in this crate is pure computation over `alloc`: tensors and
//! layers with hand-written backward passes, the AMSGrad optimizer, the
//! log-Mel front-end, the MFM-CNN encoder, the joint (SID + PAD + ISV) model,
//! the modular back-end, and the three-EER evaluation protocol. File formats
//! and the command-line pipeline live in the companion `isv` crate.

#![no_std]

extern crate alloc;

pub mod eer;
pub mod error;
pub mod features;
pub mod gradcheck;
pub mod histogram;
pub mod label;
pub mod layers;
pub mod loss;
pub mod models;
pub mod optim;
pub mod rng;
pub mod synth;
pub mod tensor;
pub mod train;
pub mod trials;

pub use error::{Error, Result};
pub use label::SpoofLabel;
pub use tensor::Tensor;
