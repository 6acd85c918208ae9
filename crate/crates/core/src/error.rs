use std::path::PathBuf;

pub type Result<T> = std::result::Result<T, Error>;

/// Broad category of an error; the CLI maps it to an exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    /// Inconsistent or invalid parameters.
    Config,
    /// Malformed, inconsistent or unreadable data.
    Data,
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid series: {0}")]
    InvalidSeries(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("length mismatch: {0}")]
    LengthMismatch(String),

    #[error("window exceeds series: window {window}, frames {frames}")]
    WindowExceedsSeries { window: usize, frames: usize },

    #[error("series too short for span: span {span} needs at least {needed} frames, got {frames}")]
    SeriesTooShort { span: usize, needed: usize, frames: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("empty delta bank")]
    EmptyBank,

    #[error("degenerate series: {0}")]
    Degenerate(String),

    #[error("profile never crosses threshold {threshold}; increase the max offset or lower the threshold")]
    ThresholdNotReached { threshold: f64 },

    #[error("invalid ground truth: {0}")]
    InvalidGroundTruth(String),

    #[error("meters radius mode requires reference positions")]
    MissingPositions,

    #[error("invalid warp control points: {0}")]
    InvalidWarp(String),

    #[error("bad magic in {path}: expected \"DVPR\"")]
    BadMagic { path: PathBuf },

    #[error("unsupported format version {0}")]
    UnsupportedVersion(u32),

    #[error("unsupported dtype code {0}")]
    UnsupportedDtype(u32),

    #[error("truncated file {path}: expected {expected} bytes, found {actual}")]
    Truncated {
        path: PathBuf,
        expected: u64,
        actual: u64,
    },

    #[error("non-finite value at row {row}, column {col}")]
    NonFinite { row: usize, col: usize },

    #[error("parse error in {path}: {msg}")]
    Parse { path: PathBuf, msg: String },

    #[error("config error: {0}")]
    Config(String),

    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Stage { source, .. } => source.kind(),
            Error::InvalidParameter(_)
            | Error::WindowExceedsSeries { .. }
            | Error::SeriesTooShort { .. }
            | Error::EmptyBank
            | Error::ThresholdNotReached { .. }
            | Error::MissingPositions
            | Error::InvalidWarp(_)
            | Error::Config(_) => ErrorKind::Config,
            _ => ErrorKind::Data,
        }
    }

    /// Tags an error with the pipeline stage it came from.
    pub fn in_stage(self, stage: &'static str) -> Self {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
