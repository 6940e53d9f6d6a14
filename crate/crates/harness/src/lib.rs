//! Configuration, orchestration and result emission for the `bpre`
//! experiments.

pub mod config;
pub mod gates;
pub mod output;
pub mod pipeline;

pub use config::{Experiment, ExperimentConfig};
pub use gates::{Gate, GateStatus};

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("invalid configuration: {0}")]
    Validation(String),
    #[error(transparent)]
    Core(#[from] bpre::Error),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl HarnessError {
    /// `3` when an estimator ran out of budget, `2` otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Core(bpre::Error::Budget(_)) => 3,
            _ => 2,
        }
    }
}
