//! Trial types and in-batch trial composition.
//!
//! Enrollment is always bona fide. A pair (enroll `i`, test `j`, `i ≠ j`) is
//! a *target* when both share a speaker and the test is bona fide, a *replay*
//! non-target when they share a speaker and the test is replayed, and a
//! *zero-effort* non-target when speakers differ and the test is bona fide.
//! Different-speaker replayed tests belong to none of the three and are
//! skipped.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use crate::error::{Error, Result};
use crate::label::SpoofLabel;
use crate::rng::{partial_shuffle, stream, STREAM_TRIALS};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum TrialType {
    Target,
    ZeroEffort,
    Replay,
}

impl TrialType {
    pub const ALL: [TrialType; 3] = [TrialType::Target, TrialType::ZeroEffort, TrialType::Replay];

    pub fn as_str(self) -> &'static str {
        match self {
            TrialType::Target => "target",
            TrialType::ZeroEffort => "zero_effort",
            TrialType::Replay => "replay",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }

    /// ISV decision class: 0 = accept (target), 1 = reject.
    pub fn isv_class(self) -> usize {
        match self {
            TrialType::Target => 0,
            _ => 1,
        }
    }

    /// Same-speaker label for the SV branch: targets and replays share the speaker.
    pub fn same_speaker(self) -> bool {
        self != TrialType::ZeroEffort
    }
}

impl fmt::Display for TrialType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TrialType {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "target" => Ok(TrialType::Target),
            "zero_effort" => Ok(TrialType::ZeroEffort),
            "replay" => Ok(TrialType::Replay),
            other => Err(Error::Label(format!("unknown trial type `{other}`"))),
        }
    }
}

/// A trial between two named utterances.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Trial {
    pub enroll: String,
    pub test: String,
    pub kind: TrialType,
}

/// A trial between two positions of a batch or utterance list.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PairTrial {
    pub enroll: usize,
    pub test: usize,
    pub kind: TrialType,
}

/// Trial type of an (enroll, test) pair, or `None` when the pair forms no valid trial.
pub fn classify_pair<S: PartialEq + ?Sized>(enroll: (&S, SpoofLabel), test: (&S, SpoofLabel)) -> Option<TrialType> {
    if !enroll.1.is_bonafide() {
        return None;
    }
    match (enroll.0 == test.0, test.1) {
        (true, SpoofLabel::Bonafide) => Some(TrialType::Target),
        (true, SpoofLabel::Replay) => Some(TrialType::Replay),
        (false, SpoofLabel::Bonafide) => Some(TrialType::ZeroEffort),
        (false, SpoofLabel::Replay) => None,
    }
}

/// All ordered in-batch trials, enroll-major.
pub fn compose_inbatch_trials<S: PartialEq>(speakers: &[S], labels: &[SpoofLabel]) -> Result<Vec<PairTrial>> {
    if speakers.len() != labels.len() {
        return Err(Error::shape("compose trials", &[speakers.len()], &[labels.len()]));
    }
    if speakers.len() < 2 {
        return Err(Error::Composition(format!("batch of {} utterance(s); need at least 2", speakers.len())));
    }
    if !labels.iter().any(|l| l.is_bonafide()) {
        return Err(Error::Composition("batch has no bona fide utterance to enroll".into()));
    }
    let mut trials = Vec::new();
    for i in 0..speakers.len() {
        for j in 0..speakers.len() {
            if i == j {
                continue;
            }
            if let Some(kind) = classify_pair((&speakers[i], labels[i]), (&speakers[j], labels[j])) {
                trials.push(PairTrial { enroll: i, test: j, kind });
            }
        }
    }
    Ok(trials)
}

pub fn count_by_type<'a>(kinds: impl IntoIterator<Item = &'a TrialType>) -> [usize; 3] {
    let mut counts = [0; 3];
    for k in kinds {
        counts[k.index()] += 1;
    }
    counts
}

/// Keeps at most `cap` trials of each type, chosen by a seeded shuffle; order of survivors is preserved.
pub fn cap_per_type(trials: &[PairTrial], cap: [usize; 3], seed: u64) -> Vec<PairTrial> {
    let mut keep = Vec::new();
    for (t, kind) in TrialType::ALL.iter().enumerate() {
        let mut idx: Vec<usize> = (0..trials.len()).filter(|&i| trials[i].kind == *kind).collect();
        let mut rng = stream(seed, STREAM_TRIALS + t as u64 * 17);
        partial_shuffle(&mut idx, cap[t], &mut rng);
        idx.truncate(cap[t]);
        keep.extend(idx);
    }
    keep.sort_unstable();
    keep.into_iter().map(|i| trials[i]).collect()
}

/// Caps every present type at the smallest non-zero per-type count.
pub fn balance_trials(trials: &[PairTrial], seed: u64) -> Vec<PairTrial> {
    let counts = count_by_type(trials.iter().map(|t| &t.kind));
    let min = counts.iter().copied().filter(|&c| c > 0).min().unwrap_or(0);
    cap_per_type(trials, [min; 3], seed)
}

/// Checks the trial invariants against utterance metadata.
pub fn validate_trial<S: PartialEq + ?Sized>(enroll: (&S, SpoofLabel), test: (&S, SpoofLabel), kind: TrialType) -> Result<()> {
    match classify_pair(enroll, test) {
        Some(k) if k == kind => Ok(()),
        other => Err(Error::Label(format!(
            "trial labeled {kind} but utterance metadata implies {}",
            other.map_or("no valid trial", TrialType::as_str)
        ))),
    }
}
