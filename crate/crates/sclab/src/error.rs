use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("invalid input: {0}")]
    Input(String),
    #[error("grid mismatch: {0}")]
    GridMismatch(String),
    #[error("linear algebra failure: {0}")]
    Linalg(String),
    #[error("hermiticity drift {0:e} exceeds 1e-8")]
    HermiticityDrift(f64),
    #[error("config error: {0}")]
    Config(String),
    #[error("run aborted: {0}")]
    Abort(String),
    #[error("format error: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
