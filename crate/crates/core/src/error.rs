use thiserror::Error;

/// Errors raised by the fusion toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("scope error: {0}")]
    Scope(String),
    #[error("dimension conflict for {key}: existing dim {existing}, requested {requested}")]
    DimConflict {
        key: String,
        existing: usize,
        requested: usize,
    },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("cannot eliminate {keys:?}: block is singular or ill-conditioned (condition ~{condition:e})")]
    Elimination { keys: Vec<String>, condition: f64 },
    #[error("not positive definite: {0}")]
    NotPositiveDefinite(String),
    #[error("unknown neighbor {0}")]
    UnknownNeighbor(u32),
    #[error("fusion error: {0}")]
    Fusion(String),
    #[error("decode error: {0}")]
    Decode(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("numerical failure at step {step}, robot {robot}: {source}")]
    Numerical {
        step: usize,
        robot: u32,
        source: Box<Error>,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// True for problems with the inputs rather than the numerics.
    pub fn is_config(&self) -> bool {
        matches!(self, Error::Config(_))
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
