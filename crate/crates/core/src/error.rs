use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("size mismatch: expected {expected} samples, got {got}")]
    SizeMismatch { expected: usize, got: usize },

    #[error("fields live on different grids")]
    GridMismatch,

    #[error("configuration error: {0}")]
    Config(String),

    /// Every problem found while validating a config, not just the first.
    #[error("invalid configuration:\n  {}", .0.join("\n  "))]
    ConfigList(Vec<String>),

    #[error("hypothesis {hypothesis} violated at s = {at}: {detail}")]
    Hypothesis {
        hypothesis: &'static str,
        at: f64,
        detail: String,
    },

    #[error("non-finite value at step {step} (t = {t})")]
    BlowUp { step: usize, t: f64 },

    #[error("solution left the validated range [{lo}, {hi}] at step {step}: phi in [{min}, {max}]")]
    RangeExit {
        step: usize,
        lo: f64,
        hi: f64,
        min: f64,
        max: f64,
    },

    #[error("snapshot format error in {path}: {detail}")]
    Format { path: PathBuf, detail: String },

    #[error("{0}")]
    Study(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
