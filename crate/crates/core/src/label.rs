use core::fmt;
use core::str::FromStr;

use crate::error::Error;

/// Whether an utterance is a live recording or a replayed one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SpoofLabel {
    Bonafide,
    Replay,
}

impl SpoofLabel {
    pub fn as_str(self) -> &'static str {
        match self {
            SpoofLabel::Bonafide => "bonafide",
            SpoofLabel::Replay => "replay",
        }
    }

    /// PAD target: 1 for bona fide, 0 for replayed.
    pub fn pad_target(self) -> f64 {
        match self {
            SpoofLabel::Bonafide => 1.0,
            SpoofLabel::Replay => 0.0,
        }
    }

    pub fn is_bonafide(self) -> bool {
        self == SpoofLabel::Bonafide
    }
}

impl fmt::Display for SpoofLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SpoofLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "bonafide" => Ok(SpoofLabel::Bonafide),
            "replay" => Ok(SpoofLabel::Replay),
            other => Err(Error::Label(alloc::format!("unknown spoof label `{other}`"))),
        }
    }
}
