use alloc::string::String;

/// Errors raised by the algorithmic core.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("unknown label `{0}`")]
    UnknownLabel(String),
    #[error("label `{0}` has no angle in the wheel config")]
    MissingAngle(String),
    #[error("label `{label}` at {angle} degrees has zero valence")]
    ZeroValence { label: String, angle: f64 },
    #[error("neutral label `{0}` must not be given an angle")]
    NeutralWithAngle(String),
    #[error("angle for `{0}` is not finite")]
    NonFiniteAngle(String),
    #[error("row {0} has no positive mass")]
    ZeroRow(usize),
    #[error("conversation `{0}` has no utterances")]
    EmptyConversation(String),
    #[error("dataset has no conversations")]
    EmptyDataset,
    #[error("bucket count {k} outside 1..={n}")]
    BucketCount { k: usize, n: usize },
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("target row is not a probability distribution")]
    InvalidTarget,
    #[error("gold and predicted sequences differ in length ({gold} vs {pred})")]
    LengthMismatch { gold: usize, pred: usize },
    #[error("no predictions to score")]
    EmptyInput,
    #[error("loss is not finite at step {step}")]
    Diverged { step: u64 },
    #[error("invalid config: {0}")]
    InvalidConfig(String),
}

pub type Result<T> = core::result::Result<T, Error>;
