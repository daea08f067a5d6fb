use thiserror::Error;

/// Errors produced anywhere in the codec. Every variant maps to a stable,
/// machine-readable code used by the command-line front end.
#[derive(Debug, Error)]
pub enum NvcError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("argument error: {0}")]
    Argument(String),
    #[error("state error: {0}")]
    State(String),
    #[error("bitstream error: {0}")]
    Bitstream(String),
    #[error("encode error: {0}")]
    Encode(String),
    #[error("model error: {0}")]
    Model(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("evaluation error: {0}")]
    Eval(String),
    #[error("training error: {0}")]
    Training(String),
    #[error("i/o error: {0}")]
    Io(String),
    #[error("tensor error: {0}")]
    Tensor(#[from] candle_core::Error),
}

impl NvcError {
    pub fn code(&self) -> &'static str {
        match self {
            NvcError::Config(_) => "E_CONFIG",
            NvcError::Argument(_) => "E_ARGUMENT",
            NvcError::State(_) => "E_STATE",
            NvcError::Bitstream(_) => "E_BITSTREAM",
            NvcError::Encode(_) => "E_ENCODE",
            NvcError::Model(_) => "E_MODEL",
            NvcError::Data(_) => "E_DATA",
            NvcError::Eval(_) => "E_EVAL",
            NvcError::Training(_) => "E_TRAINING",
            NvcError::Io(_) => "E_IO",
            NvcError::Tensor(_) => "E_TENSOR",
        }
    }

    pub(crate) fn io(context: impl std::fmt::Display, err: std::io::Error) -> Self {
        NvcError::Io(format!("{context}: {err}"))
    }
}

impl From<std::io::Error> for NvcError {
    fn from(err: std::io::Error) -> Self {
        NvcError::Io(err.to_string())
    }
}

pub type Result<T> = std::result::Result<T, NvcError>;
