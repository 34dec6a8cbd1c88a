use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("schema mismatch: {0}")]
    Schema(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("index out of range: {0}")]
    IndexOutOfRange(String),
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error("invalid state: {0}")]
    State(String),
    #[error("training aborted: {0}")]
    TrainingAborted(String),
    #[error("unsupported format version {found} (this build reads up to {supported})")]
    Version { found: u32, supported: u32 },
    #[error("corrupt payload: {0}")]
    Corrupt(String),
    #[error("binding mismatch: {0}")]
    Binding(String),
    #[error("undefined ratio: {0}")]
    UndefinedRatio(String),
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
