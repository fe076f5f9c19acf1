use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("episode already finished")]
    EpisodeFinished,
    #[error("action has {got} components, layout expects {expected}")]
    ActionShapeMismatch { expected: usize, got: usize },
    #[error("recommendation intensities for group {group} sum to {sum}, expected 1")]
    AlphaConstraintViolated { group: usize, sum: f64 },
    #[error("no samples")]
    EmptySamples,
    #[error("empty parameter grid")]
    EmptyGrid,
    #[error("state-action space has {entries} entries, limit is {limit}")]
    SpaceTooLarge { entries: usize, limit: usize },
    #[error("input has length {got}, expected {expected}")]
    ShapeMismatch { expected: usize, got: usize },
    #[error("loss is not finite")]
    NonFiniteLoss,
    #[error("window of {len} triples exceeds context {max}")]
    WindowTooLong { len: usize, max: usize },
    #[error("empty dataset")]
    EmptyDataset,
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidConfig(msg.into())
}
