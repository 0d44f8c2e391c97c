//! Equal error rates for the three trial subsets.
//!
//! | EER     | target | zero-effort | replay |
//! |---------|--------|-------------|--------|
//! | ZE-EER  | 1      | 0           |        |
//! | PAD-EER | 1      |             | 0      |
//! | ISV-EER | 1      | 0           | 0      |
//!
//! A trial is accepted iff `score >= threshold`. Every distinct score is a
//! candidate threshold, plus a final one above every score (FAR = 0,
//! FRR = 1). Along that sweep `FAR − FRR` is non-increasing; the EER is read
//! off by linear interpolation between the two adjacent thresholds where it
//! changes sign (or exactly at a threshold where it is zero).

use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::trials::{Trial, TrialType};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoredTrial {
    pub score: f64,
    pub kind: TrialType,
}

/// Scores paired with trial types.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ScoreSet {
    entries: Vec<ScoredTrial>,
}

impl ScoreSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_entries(entries: Vec<ScoredTrial>) -> Result<Self> {
        if let Some(bad) = entries.iter().find(|e| !e.score.is_finite()) {
            return Err(Error::InvalidScore(bad.score));
        }
        Ok(Self { entries })
    }

    pub fn push(&mut self, score: f64, kind: TrialType) -> Result<()> {
        if !score.is_finite() {
            return Err(Error::InvalidScore(score));
        }
        self.entries.push(ScoredTrial { score, kind });
        Ok(())
    }

    pub fn entries(&self) -> &[ScoredTrial] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn scores_of(&self, kind: TrialType) -> Vec<f64> {
        self.entries.iter().filter(|e| e.kind == kind).map(|e| e.score).collect()
    }

    pub fn counts(&self) -> [usize; 3] {
        crate::trials::count_by_type(self.entries.iter().map(|e| &e.kind))
    }

    /// Mean score per trial type, `None` where the type is absent.
    pub fn means(&self) -> [Option<f64>; 3] {
        let mut sums = [0.0; 3];
        let counts = self.counts();
        for e in &self.entries {
            sums[e.kind.index()] += e.score;
        }
        let mut out = [None; 3];
        for k in 0..3 {
            if counts[k] > 0 {
                out[k] = Some(sums[k] / counts[k] as f64);
            }
        }
        out
    }
}

/// An EER (in percent) and the interpolated threshold where it occurs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EerPoint {
    pub eer: f64,
    pub threshold: f64,
}

/// EER of `targets` against `nontargets`.
pub fn compute_eer(targets: &[f64], nontargets: &[f64]) -> Result<EerPoint> {
    if targets.is_empty() || nontargets.is_empty() {
        return Err(Error::InsufficientTrials(alloc::format!(
            "{} target and {} non-target scores; need at least one of each",
            targets.len(),
            nontargets.len()
        )));
    }
    if let Some(bad) = targets.iter().chain(nontargets).find(|s| !s.is_finite()) {
        return Err(Error::InvalidScore(*bad));
    }
    let mut tar = targets.to_vec();
    let mut non = nontargets.to_vec();
    tar.sort_by(f64::total_cmp);
    non.sort_by(f64::total_cmp);
    let (nt, nn) = (tar.len() as f64, non.len() as f64);

    let mut thresholds: Vec<f64> = tar.iter().chain(&non).copied().collect();
    thresholds.sort_by(f64::total_cmp);
    thresholds.dedup();

    // (threshold, FAR, FRR) along the sweep; cursors count scores below the threshold.
    let (mut below_t, mut below_n) = (0usize, 0usize);
    let mut prev: Option<(f64, f64, f64)> = None;
    for &t in &thresholds {
        while below_t < tar.len() && tar[below_t] < t {
            below_t += 1;
        }
        while below_n < non.len() && non[below_n] < t {
            below_n += 1;
        }
        let far = (non.len() - below_n) as f64 / nn;
        let frr = below_t as f64 / nt;
        if let Some(p) = crossing(prev, (t, far, frr)) {
            return Ok(p);
        }
        prev = Some((t, far, frr));
    }
    let last = *thresholds.last().expect("non-empty");
    Ok(crossing(prev, (last, 0.0, 1.0)).expect("FAR - FRR reaches -1 past the last score"))
}

/// EER point if the sweep crosses zero at `cur`, interpolating from `prev`.
fn crossing(prev: Option<(f64, f64, f64)>, cur: (f64, f64, f64)) -> Option<EerPoint> {
    let (t1, far1, frr1) = cur;
    let d1 = far1 - frr1;
    if d1 == 0.0 {
        return Some(EerPoint {
            eer: 100.0 * far1,
            threshold: t1,
        });
    }
    if d1 > 0.0 {
        return None;
    }
    let (t0, far0, frr0) = prev.expect("FRR is zero at the lowest threshold, so FAR - FRR starts >= 0");
    let d0 = far0 - frr0;
    let w = d0 / (d0 - d1);
    let far = far0 + w * (far1 - far0);
    let frr = frr0 + w * (frr1 - frr0);
    Some(EerPoint {
        eer: 100.0 * 0.5 * (far + frr),
        threshold: t0 + w * (t1 - t0),
    })
}

/// Accepted trials per type at `threshold`.
pub fn accept_counts(scores: &ScoreSet, threshold: f64) -> [usize; 3] {
    let mut counts = [0; 3];
    for e in scores.entries() {
        if e.score >= threshold {
            counts[e.kind.index()] += 1;
        }
    }
    counts
}

/// ZE-, PAD- and ISV-EER of one scorer. An EER is `None` when its non-target type is absent.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub ze: Option<EerPoint>,
    pub pad: Option<EerPoint>,
    pub isv: Option<EerPoint>,
    /// Trial counts indexed by [`TrialType::index`].
    pub counts: [usize; 3],
}

pub fn compute_three_eers(scores: &ScoreSet) -> Result<EvalReport> {
    let target = scores.scores_of(TrialType::Target);
    if target.is_empty() {
        return Err(Error::InsufficientTrials("no target trials".into()));
    }
    let ze = scores.scores_of(TrialType::ZeroEffort);
    let replay = scores.scores_of(TrialType::Replay);
    if ze.is_empty() && replay.is_empty() {
        return Err(Error::InsufficientTrials("no non-target trials".into()));
    }
    let subset = |non: &[f64]| -> Result<Option<EerPoint>> {
        if non.is_empty() {
            Ok(None)
        } else {
            compute_eer(&target, non).map(Some)
        }
    };
    let both: Vec<f64> = ze.iter().chain(&replay).copied().collect();
    Ok(EvalReport {
        ze: subset(&ze)?,
        pad: subset(&replay)?,
        isv: subset(&both)?,
        counts: scores.counts(),
    })
}

/// Scores every trial with `scorer` over items looked up by utterance id, then reports the three EERs.
///
/// All ids are resolved before anything is scored; unresolvable ids are
/// reported together.
pub fn evaluate_system<T, L, S>(trials: &[Trial], lookup: L, mut scorer: S) -> Result<(EvalReport, ScoreSet)>
where
    L: Fn(&str) -> Option<T>,
    S: FnMut(&T, &T) -> Result<f64>,
{
    let mut missing: Vec<String> = Vec::new();
    let mut resolved = Vec::with_capacity(trials.len());
    for trial in trials {
        let e = lookup(&trial.enroll);
        let t = lookup(&trial.test);
        for (id, found) in [(&trial.enroll, e.is_some()), (&trial.test, t.is_some())] {
            if !found && !missing.contains(id) {
                missing.push(id.clone());
            }
        }
        if let (Some(e), Some(t)) = (e, t) {
            resolved.push((e, t, trial.kind));
        }
    }
    if !missing.is_empty() {
        return Err(Error::MissingUtterances(missing));
    }
    let mut scores = ScoreSet::new();
    for (e, t, kind) in &resolved {
        scores.push(scorer(e, t)?, *kind)?;
    }
    Ok((compute_three_eers(&scores)?, scores))
}
