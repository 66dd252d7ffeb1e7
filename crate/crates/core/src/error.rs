use std::path::PathBuf;

use crate::models::Violation;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("wavelet level {0} is outside 1..=30")]
    LevelOutOfRange(usize),
    #[error("series of length {len} is shorter than the level filter ({filter_len} taps)")]
    SeriesTooShort { len: usize, filter_len: usize },
    #[error("need at least 4 samples to form any wavelet level, got {0}")]
    TooFewSamples(usize),
    #[error("requested {requested} levels but at most {max} are usable for this length")]
    TooManyLevels { requested: usize, max: usize },
    #[error("coefficient series disagree: {0}")]
    CoefficientMismatch(String),
    #[error("channels have unequal lengths ({0})")]
    RaggedChannels(String),
    #[error("signal has no channels")]
    EmptySignal,
    #[error("common support of {support} samples is shorter than twice the bandwidth {bandwidth}")]
    BandwidthTooLarge { support: usize, bandwidth: usize },
    #[error("coverage level must lie in (0, 1), got {0}")]
    InvalidAlpha(f64),
    #[error("invalid model specification:\n{}", format_violations(.0))]
    InvalidSpec(Vec<Violation>),
    #[error("invalid parameters: {0}")]
    InvalidParameters(String),
    #[error("channel {channel} is not loaded by the block")]
    ChannelNotLoaded { channel: usize },
    #[error("singular matrix: {0}")]
    Singular(String),
    #[error("optimizer did not converge: {0}")]
    NonConvergence(String),
    #[error("dependence test: {0}")]
    DependenceTest(String),
    #[error("{path}: row {row}, column {column}: {message}")]
    Ingest {
        path: PathBuf,
        row: usize,
        column: String,
        message: String,
    },
    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

fn format_violations(violations: &[Violation]) -> String {
    violations
        .iter()
        .map(|v| format!("  - {v}"))
        .collect::<Vec<_>>()
        .join("\n")
}

pub type Result<T> = std::result::Result<T, Error>;
