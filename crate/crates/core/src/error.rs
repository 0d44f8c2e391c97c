use alloc::string::String;
use alloc::vec::Vec;

pub type Result<T> = core::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch in {op}: {left:?} vs {right:?}")]
    Shape {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },
    #[error("max feature map needs an even channel count, got {channels}")]
    OddChannels { channels: usize },
    #[error("kernel {kernel:?} does not fit padded input {padded:?}")]
    KernelTooLarge {
        kernel: (usize, usize),
        padded: (usize, usize),
    },
    #[error("training diverged: non-finite gradient in `{param}`")]
    Divergence { param: String },
    #[error("waveform too short: {samples} samples, window is {window}")]
    TooShort { samples: usize, window: usize },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("invalid label: {0}")]
    Label(String),
    #[error("trial composition failed: {0}")]
    Composition(String),
    #[error("insufficient trials: {0}")]
    InsufficientTrials(String),
    #[error("cosine score undefined for a zero vector")]
    ZeroVector,
    #[error("PAD input {0} outside [0, 1]")]
    PadRange(f64),
    #[error("score {0} is not finite")]
    InvalidScore(f64),
    #[error("unknown utterance ids: {}", .0.join(", "))]
    MissingUtterances(Vec<String>),
}

impl Error {
    pub(crate) fn shape(op: &'static str, left: &[usize], right: &[usize]) -> Self {
        Error::Shape {
            op,
            left: left.to_vec(),
            right: right.to_vec(),
        }
    }
}
