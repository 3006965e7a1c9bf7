use thiserror::Error;

/// Errors raised anywhere in the library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter `{name}` = {value}: {constraint}")]
    InvalidParameter {
        name: &'static str,
        value: f64,
        constraint: String,
    },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("quadrature did not reach tolerance {tolerance:e} (achieved {achieved:e}): {context}")]
    Quadrature {
        context: String,
        tolerance: f64,
        achieved: f64,
    },

    #[error("divergent integral: {0}")]
    Divergent(String),

    #[error("degenerate diffusion matrix at {point:?}: |det b| = {det:e} < {floor:e}")]
    Degenerate { point: Vec<f64>, det: f64, floor: f64 },

    #[error("coefficient bound violated at {point:?}: {what}")]
    Bound { point: Vec<f64>, what: String },

    #[error("hypothesis violated: {0}")]
    Hypothesis(String),

    #[error("non-finite state after {step} steps (|Y| = {norm:e})")]
    Explosion { step: usize, norm: f64 },

    #[error("excluded {excluded} of {n_paths} paths, above threshold {threshold}")]
    Exclusion {
        excluded: u64,
        n_paths: u64,
        threshold: f64,
    },

    #[error("insufficient data: {0}")]
    Insufficient(String),

    #[error("unknown catalog entry `{0}`")]
    UnknownCatalog(String),

    #[error("config invalid:\n  {}", .0.join("\n  "))]
    Config(Vec<String>),

    #[error("io: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Config(vec![e.to_string()])
    }
}

pub(crate) fn check_param(name: &'static str, value: f64, ok: bool, constraint: &str) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(Error::InvalidParameter {
            name,
            value,
            constraint: constraint.to_string(),
        })
    }
}
