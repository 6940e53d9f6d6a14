use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("inadmissible parameters: {0}")]
    Inadmissible(String),
    #[error("argument outside domain: {0}")]
    Domain(String),
    #[error("quadrature did not converge: achieved error {achieved:e}, target {target:e}")]
    Quadrature { achieved: f64, target: f64 },
    #[error("undefined value: {0}")]
    Undefined(String),
    #[error("outside tabulated range: {0}")]
    Range(String),
    #[error("insufficient Monte Carlo budget: {0}")]
    Budget(String),
}

pub type Result<T> = std::result::Result<T, Error>;
