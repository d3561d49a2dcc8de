use std::io;

use thiserror::Error;

/// Errors raised by the construction and its checks.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    Grid(String),

    #[error("grid mismatch: {left} vs {right} points per axis")]
    GridMismatch { left: usize, right: usize },

    #[error("rank mismatch: expected {expected}, found {found}")]
    RankMismatch {
        expected: &'static str,
        found: &'static str,
    },

    #[error("parameter out of range: {0}")]
    Parameter(String),

    #[error("noise: {0}")]
    Noise(String),

    #[error("matrix outside the decomposition domain: coefficient {coefficient:.3e} along direction {direction:?}")]
    GammaDomain {
        direction: [i64; 3],
        coefficient: f64,
    },

    #[error("vector outside the ball of radius {radius}: |u| = {norm}")]
    LambdaDomain { radius: f64, norm: f64 },

    #[error("direction families: {0}")]
    Geometry(String),

    #[error("pipe construction: {0}")]
    Pipe(String),

    #[error("shift search exhausted: {0}")]
    Shifts(String),

    #[error("transport: {0}")]
    Transport(String),

    #[error("insufficient snapshots: {0}")]
    Snapshots(String),

    #[error("guard failed: {0}")]
    Guard(String),

    #[error("config: {0}")]
    Config(String),

    #[error("format: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
