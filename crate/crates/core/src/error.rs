use thiserror::Error;

/// Errors raised across the library.
#[derive(Debug, Error)]
pub enum RiskError {
    #[error("invalid shape: {0}")]
    InvalidShape(String),
    #[error("shape mismatch in {op}: {detail}")]
    ShapeMismatch { op: &'static str, detail: String },
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error("rank deficiency: column {column} has residual norm {residual:e}")]
    RankDeficient { column: usize, residual: f64 },
    #[error("matrix is not symmetric: |S[{i},{j}] - S[{j},{i}]| = {diff:e}")]
    Asymmetric { i: usize, j: usize, diff: f64 },
    #[error("matrix too large for dense small-matrix routine: {0}x{0} > 64")]
    TooLarge(usize),
    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("split {0} has no bias-free examples")]
    NoBiasFree(String),
    #[error("split {0} has examples with unknown group flag")]
    UnknownGroup(String),
    #[error("split {0} is empty")]
    EmptySplit(String),
    #[error("split {split} has no example of class {class}")]
    MissingClass { split: String, class: usize },
    #[error("bad magic: expected \"RSKF\", found {0:?}")]
    BadMagic([u8; 4]),
    #[error("unsupported format version {0}")]
    VersionMismatch(u32),
    #[error("truncated payload: needed {needed} bytes, found {found}")]
    Truncated { needed: usize, found: usize },
    #[error("checksum mismatch: stored {stored:08x}, computed {computed:08x}")]
    ChecksumMismatch { stored: u32, computed: u32 },
    #[error("unknown split tag {0}")]
    UnknownSplitTag(u8),
    #[error("unknown group flag {0}")]
    UnknownGroupFlag(u8),
    #[error("csv error at line {line}: {msg}")]
    Csv { line: usize, msg: String },
    #[error("unsupported oracle request: {0}")]
    Unsupported(String),
    #[error("non-finite {component} loss at epoch {epoch}, batch {batch}")]
    NonFiniteLoss {
        component: &'static str,
        epoch: usize,
        batch: usize,
    },
    #[error("model format error: {0}")]
    ModelFormat(String),
    #[error("unknown report format {0:?}")]
    UnknownFormat(String),
    #[error("planted bases are required for alignment scoring")]
    MissingPlanted,
    #[error("run failed for {param}={value} seed {seed}: {source}")]
    Sweep {
        param: String,
        value: f64,
        seed: u64,
        #[source]
        source: Box<RiskError>,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, RiskError>;
