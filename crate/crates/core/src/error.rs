use thiserror::Error;

/// Errors produced across the recommender pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape error: {0}")]
    Shape(String),

    #[error("lookup error: index {index} out of range for {what} of size {size}")]
    Lookup {
        what: &'static str,
        index: usize,
        size: usize,
    },

    #[error("config error: {0}")]
    Config(String),

    #[error("state error: {0}")]
    State(String),

    #[error("parse error in {path} line {line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },

    #[error("empty interaction log: {0}")]
    EmptyLog(String),

    #[error("unsatisfiable sampling for user {user}: {message}")]
    Unsatisfiable { user: u32, message: String },

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("protocol error: {0}")]
    Protocol(String),

    #[error("stale artifact: {0}")]
    StaleArtifact(String),

    #[error("training aborted: non-finite loss at epoch {epoch}, batch {batch} (lr={lr})")]
    NonFiniteLoss { epoch: usize, batch: usize, lr: f32 },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Process exit code for the CLI: 2 config, 3 data, 4 protocol.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 2,
            Error::Protocol(_) => 4,
            _ => 3,
        }
    }
}
