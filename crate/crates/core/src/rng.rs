//! Seeded random streams. Every consumer derives its own stream from a
//! `(seed, stream)` pair so that training steps can be replayed in isolation.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub type IsvRng = ChaCha8Rng;

/// Independent generator for `(seed, stream)`.
pub fn stream(seed: u64, stream: u64) -> IsvRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

pub fn normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.sample(StandardNormal)
}

pub fn uniform<R: Rng + ?Sized>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * rng.random::<f64>()
}

/// Fisher-Yates shuffle of the first `take` positions.
pub fn partial_shuffle<T, R: Rng + ?Sized>(items: &mut [T], take: usize, rng: &mut R) {
    let n = items.len();
    for i in 0..take.min(n) {
        let j = rng.random_range(i..n);
        items.swap(i, j);
    }
}

// Stream identifiers, kept distinct per consumer.
pub const STREAM_INIT: u64 = 1;
pub const STREAM_BATCH: u64 = 2;
pub const STREAM_WORLD: u64 = 3;
pub const STREAM_TRIALS: u64 = 4;
