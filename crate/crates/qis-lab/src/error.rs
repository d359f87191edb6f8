use thiserror::Error;

/// Error type shared across the workbench.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    /// Malformed text file (QIS, codebook, partition); carries the 1-based line.
    #[error("format error at line {line}: {msg}")]
    Format { line: usize, msg: String },

    /// Malformed frame in a live stream; carries the 0-based frame ordinal.
    #[error("stream error at frame {ordinal}: {msg}")]
    Stream { ordinal: usize, msg: String },

    /// Parameter-file magic bytes do not match.
    #[error("bad magic in parameter file")]
    BadMagic,

    /// Parameter-file version is not supported.
    #[error("unsupported parameter file version {0}")]
    VersionMismatch(u8),

    /// Parameter file ended before the declared payload.
    #[error("truncated parameter file: {0}")]
    Truncated(String),

    /// Tensor payload does not match the shapes implied by the config block.
    #[error("parameter shape mismatch: {0}")]
    ShapeMismatch(String),
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
