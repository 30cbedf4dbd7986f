use std::path::PathBuf;

/// Errors produced by the deblurring library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("file not found: {}", path.display())]
    FileNotFound { path: PathBuf },

    #[error("i/o error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("unsupported format for {}: {detail}", path.display())]
    UnsupportedFormat { path: PathBuf, detail: String },

    #[error("corrupt data in {}: {detail}", path.display())]
    CorruptData { path: PathBuf, detail: String },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid parameter: {0}")]
    InvalidParam(String),

    #[error("stride {stride} with patch size {s1} leaves pixels uncovered")]
    UncoveredPixels { stride: usize, s1: usize },

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("config error{}: {detail}", line.map(|l| format!(" (line {l})")).unwrap_or_default())]
    Config { line: Option<usize>, detail: String },
}

pub type Result<T> = std::result::Result<T, Error>;
