use alloc::string::String;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("answer offset {offset} lies outside every sentence span")]
    Alignment { offset: usize },
    #[error("answer text does not match the context at offset {offset}")]
    AnswerMismatch { offset: usize },
    #[error("input too long: needs at least {needed} positions but max_len is {max_len}")]
    InputTooLong { needed: usize, max_len: usize },
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("non-finite activation in {stage} layer {layer}")]
    NonFinite { stage: &'static str, layer: usize },
    #[error("non-finite loss at step {step}")]
    NonFiniteLoss { step: u64 },
    #[error("invariant violated: {0}")]
    Invariant(String),
}

pub type Result<T> = core::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
