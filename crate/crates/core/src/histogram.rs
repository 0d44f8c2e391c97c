//! Per-trial-type score histograms.

use alloc::vec;
use alloc::vec::Vec;

use crate::eer::ScoreSet;
use crate::error::{Error, Result};
use crate::trials::TrialType;

#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    pub lo: f64,
    pub hi: f64,
    /// `counts[type][bin]`, types indexed by [`TrialType::index`].
    pub counts: [Vec<usize>; 3],
}

impl Histogram {
    pub fn bins(&self) -> usize {
        self.counts[0].len()
    }

    pub fn bin_width(&self) -> f64 {
        (self.hi - self.lo) / self.bins() as f64
    }

    pub fn bin_center(&self, bin: usize) -> f64 {
        self.lo + (bin as f64 + 0.5) * self.bin_width()
    }

    /// Center of the most populated bin of `kind`; the first one on ties.
    pub fn mode(&self, kind: TrialType) -> Option<f64> {
        let c = &self.counts[kind.index()];
        let max = *c.iter().max()?;
        if max == 0 {
            return None;
        }
        c.iter().position(|&n| n == max).map(|b| self.bin_center(b))
    }
}

/// Bins scores over `range`, or over `[min, max]` of the data when `None`.
/// Values outside the range land in the edge bins.
pub fn histogram(scores: &ScoreSet, bins: usize, range: Option<(f64, f64)>) -> Result<Histogram> {
    if scores.is_empty() || bins == 0 {
        return Err(Error::InsufficientTrials("histogram needs scores and at least one bin".into()));
    }
    let (lo, hi) = match range {
        Some(r) => r,
        None => {
            let lo = scores.entries().iter().map(|e| e.score).fold(f64::INFINITY, f64::min);
            let hi = scores.entries().iter().map(|e| e.score).fold(f64::NEG_INFINITY, f64::max);
            if hi > lo {
                (lo, hi)
            } else {
                (lo - 0.5, lo + 0.5)
            }
        }
    };
    if hi.partial_cmp(&lo) != Some(core::cmp::Ordering::Greater) {
        return Err(Error::Config(alloc::format!("empty histogram range [{lo}, {hi}]")));
    }
    let mut counts = [vec![0; bins], vec![0; bins], vec![0; bins]];
    for e in scores.entries() {
        let pos = (e.score - lo) / (hi - lo) * bins as f64;
        let bin = if pos < 0.0 { 0 } else { (libm::floor(pos) as usize).min(bins - 1) };
        counts[e.kind.index()][bin] += 1;
    }
    Ok(Histogram { lo, hi, counts })
}
