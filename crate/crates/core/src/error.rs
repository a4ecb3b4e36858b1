use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the laboratory.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid environment spec: {0}")]
    InvalidSpec(String),

    #[error("moment margin violated: {0}")]
    MomentMargin(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("assembly error at cell {cell:?}: {reason}")]
    Assembly { cell: Vec<usize>, reason: String },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("linear solve did not converge after {iterations} iterations (relative residual {residual:e})")]
    Solver { iterations: usize, residual: f64 },

    #[error("positivity violated: value {value:e} at cell {cell} (time {time})")]
    Positivity { value: f64, cell: usize, time: f64 },

    #[error("exp(psi) would overflow (max |psi| = {0}); center psi before calling")]
    Rescaling(f64),

    #[error("speed-measure mode error: {0}")]
    Mode(String),

    #[error("pairing error: {0}")]
    Pairing(String),

    #[error("insufficient samples: {0}")]
    InsufficientSamples(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("geometry error: {0}")]
    Geometry(String),

    #[error("centering error: {0}")]
    Centering(String),

    #[error("sequence error: {0}")]
    Sequence(String),

    #[error("matrix error: {0}")]
    Matrix(String),

    #[error("metric error between cells {from} and {to}: {reason}")]
    Metric { from: usize, to: usize, reason: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error in {path} at line {line}, column {column}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        column: usize,
        message: String,
    },
}

pub type Result<T> = std::result::Result<T, Error>;
