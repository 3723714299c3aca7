use std::io;

use thiserror::Error;

/// Errors produced anywhere in the compression / reconstruction toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("empty point set")]
    EmptyPointSet,

    #[error("invalid point cloud: {0}")]
    InvalidCloud(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("length mismatch: expected {expected}, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },

    #[error("not compressive: {samples} samples for {points} points")]
    NotCompressive { samples: usize, points: usize },

    #[error("level {level} out of range 1..={levels}")]
    LevelOutOfRange { level: usize, levels: usize },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("inconsistent operators: adjoint mismatch {0:.3e}")]
    InconsistentOperators(f64),

    #[error("support exceeds sample count: {support} > {samples}")]
    SupportExceedsSamples { support: usize, samples: usize },

    #[error("infeasible hole configuration after {0} attempts")]
    InfeasibleHoles(usize),

    #[error("partition mismatch: {0}")]
    PartitionMismatch(String),

    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
