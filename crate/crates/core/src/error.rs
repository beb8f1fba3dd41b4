use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("vector norm {norm:e} is at or below the normalization floor")]
    ZeroVector { norm: f64 },
    #[error("non-finite value at flat index {index}")]
    NonFinite { index: usize },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("label row {row} is not on the probability simplex")]
    InvalidLabel { row: usize },
    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },
    #[error("bad architecture: {0}")]
    BadArchitecture(String),
    #[error("forward cache does not match parameters: {0}")]
    StaleCache(String),
    #[error("crop of {crop} exceeds image extent {height}x{width}")]
    CropTooLarge { crop: usize, height: usize, width: usize },
    #[error("cutmix needs at least two images, got {0}")]
    BatchTooSmall(usize),
    #[error("value {value} outside [{lo}, {hi}]")]
    OutOfRange { value: f64, lo: f64, hi: f64 },
    #[error("invalid configuration: {0}")]
    ConfigInvalid(String),
    #[error("dataset is empty")]
    DataEmpty,
    #[error("class count mismatch: expected {expected}, found {found}")]
    ClassCountMismatch { expected: usize, found: usize },
    #[error("ensemble members disagree: {0}")]
    MemberMismatch(String),
    #[error("degenerate input: {0}")]
    DegenerateInput(String),
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("invalid dataset spec: {0}")]
    SpecInvalid(String),
    #[error("corrupt file {}: {reason}", path.display())]
    CorruptFile { path: PathBuf, reason: String },
    #[error("unsupported format version {0}")]
    VersionUnsupported(u32),
    #[error("{}:{line}: {reason}", path.display())]
    ParseError { path: PathBuf, line: usize, reason: String },
    #[error("{}: unexpected header {found:?}", path.display())]
    HeaderMismatch { path: PathBuf, found: String },
    #[error("{}: {source}", path.display())]
    File { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
