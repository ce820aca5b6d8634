use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Data, model and latent state disagree on a dimension.
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("part {part} is hidden in image {image}")]
    HiddenPart { image: usize, part: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    /// The exhaustive oracle refused an instance that is too large.
    #[error("refusing to enumerate {} assignments (limit {limit})", count(*required))]
    TooLarge { required: u128, limit: u128 },

    /// A file parsed but violates a format invariant.
    #[error("{0}")]
    Validation(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("malformed JSON: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Process exit code used by the command-line tool.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 2,
            Error::TooLarge { .. } => 3,
            _ => 1,
        }
    }
}

fn count(n: u128) -> String {
    if n == u128::MAX {
        "more than 2^128".into()
    } else {
        n.to_string()
    }
}
