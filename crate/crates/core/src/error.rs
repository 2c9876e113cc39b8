use std::path::PathBuf;

use thiserror::Error;

use crate::detector::DetectorError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Crate-wide error. The variants fall into three families that the CLI maps
/// onto distinct exit codes: configuration problems, data problems and
/// detector failures.
#[derive(Debug, Error)]
pub enum Error {
    #[error("box {x1},{y1},{x2},{y2} exceeds image bounds {width}x{height}")]
    OutOfBounds {
        x1: f64,
        y1: f64,
        x2: f64,
        y2: f64,
        width: u32,
        height: u32,
    },

    #[error("degenerate box: {0}")]
    DegenerateBox(String),

    #[error("invalid box: {0}")]
    InvalidBox(String),

    #[error("unknown class {0:?}")]
    UnknownClass(String),

    #[error("mixed image ids in one evaluation unit: {first:?} and {other:?}")]
    MixedImageIds { first: String, other: String },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("{path}:{line}: {message}")]
    LabelParse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("captcha {captcha_w}x{captcha_h} does not fit on a {page_w}x{page_h} page at minimum scale")]
    DoesNotFit {
        captcha_w: u32,
        captcha_h: u32,
        page_w: u32,
        page_h: u32,
    },

    #[error("insufficient records: requested {requested}, available {available}")]
    InsufficientRecords { requested: usize, available: usize },

    #[error("data error: {0}")]
    Data(String),

    #[error(transparent)]
    Detector(#[from] DetectorError),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Image {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },

    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

/// Coarse classification used for process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Config,
    Data,
    Detector,
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Config(_) | Error::UnknownClass(_) => ErrorKind::Config,
            Error::Detector(_) => ErrorKind::Detector,
            _ => ErrorKind::Data,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn image(path: impl Into<PathBuf>, source: image::ImageError) -> Self {
        Error::Image {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn json(path: impl Into<PathBuf>, source: serde_json::Error) -> Self {
        Error::Json {
            path: path.into(),
            source,
        }
    }
}
