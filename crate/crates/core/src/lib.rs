//! Critical branching processes in a random environment whose associated
//! random walk has strictly stable increments.
//!
//! The crate is organised bottom-up:
//!
//! * [`stable`]: strictly stable laws (sampling, characteristic function,
//!   density at zero, positivity parameter, normalizing sequences).
//! * [`env`]: offspring laws parametrised by their log-mean and the random
//!   environment built from them.
//! * [`walk`]: the associated random walk, renewal functions `U` and `V`,
//!   small-deviation probabilities and the `P+`/`P-` weighted path samplers.
//! * [`bpre`]: generating-function iteration, quenched survival
//!   probabilities and population trajectories.
//! * [`estimators`]: the composite Monte Carlo estimators (joint survival
//!   probability, `Θ(j)`, `Θ`, conditioned ratios, verification reports).
//!
//! All randomness flows through [`rng::Streams`]: every simulated path owns
//! its own counter-based stream, so results do not depend on the number of
//! worker threads.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::excessive_precision)]

pub mod bpre;
pub mod env;
pub mod error;
pub mod estimators;
pub mod quadrature;
pub mod rng;
pub mod stable;
pub mod stats;
pub mod walk;

pub use error::{Error, Result};
pub use rng::Streams;
pub use stable::StableParams;
pub use stats::MCEstimate;

/// Hex SHA-256 of the JSON serialization of `value`.
pub fn content_hash<T: serde::Serialize>(value: &T) -> String {
    use sha2::{Digest, Sha256};
    let bytes = serde_json::to_vec(value).expect("serializable value");
    hex::encode(Sha256::digest(&bytes))
}
