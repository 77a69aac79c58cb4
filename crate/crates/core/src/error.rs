use std::io;

/// Crate-wide error type.
///
/// Variants are grouped by how callers should react: `InvalidArgument` and
/// `Format` are caller/input errors, `Numeric` and `Singular` indicate the
/// computation itself failed, `SizeLimit` asks for a smaller problem.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// Malformed input data. `offset` is the byte position in the source
    /// where the problem was detected.
    #[error("format error at byte {offset}: {message}")]
    Format { offset: u64, message: String },

    /// A state variable left the finite range during simulation.
    #[error("numeric failure at step {step}: {message}")]
    Numeric { step: u64, message: String },

    /// Problem size exceeds what an exact method can handle.
    #[error("size {size} exceeds limit {limit}: {hint}")]
    SizeLimit {
        size: usize,
        limit: usize,
        hint: String,
    },

    /// A linear system could not be solved.
    #[error("singular system: {0}")]
    Singular(String),

    #[error(transparent)]
    Io(#[from] io::Error),
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub fn format(offset: u64, msg: impl Into<String>) -> Self {
        Error::Format {
            offset,
            message: msg.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
