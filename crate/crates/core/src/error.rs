use std::io;
use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("unsupported image format: {0}")]
    UnsupportedFormat(String),
    #[error("malformed image: {0}")]
    MalformedImage(String),
    #[error("invalid dimensions {width}x{height}: {reason}")]
    Dimensions {
        width: usize,
        height: usize,
        reason: &'static str,
    },
    #[error("channel mismatch: expected {expected}, got {got}")]
    ChannelMismatch { expected: usize, got: usize },
    #[error("invalid filter bank: {0}")]
    FilterBank(String),
    #[error("layer {layer} out of range (bank depth {depth})")]
    LayerOutOfRange { layer: usize, depth: usize },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("rate control: {0}")]
    RateControl(String),
    #[error("malformed bitstream: {0}")]
    Bitstream(String),
    #[error("invalid rd curve: {0}")]
    Curve(String),
    #[error("config: {0}")]
    Config(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
