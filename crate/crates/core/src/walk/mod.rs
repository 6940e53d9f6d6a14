//! The associated random walk `S_n = X_1 + ... + X_n` and its functionals.

use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stable::StableSampler;

mod conditioned;
mod deviation;
mod renewal;

pub use conditioned::{
    harmonicity_u, harmonicity_v, plus_expectation, simulate_minus, simulate_plus, HarmonicityCheck,
    PlusEstimate, WeightedSample,
};
pub use deviation::{
    local_probability, local_probability_partition, prob_positive, prob_small_deviation,
    prob_small_deviation_multi, EventEstimate,
};
pub use renewal::{
    estimate_u, estimate_v, CSV_HEADER, CSV_SCHEMA, geometric_grid, RenewalKind, RenewalTable, TableSidecar, TermBin,
    TruncationDiagnostics,
};

/// `L_n = min(S_1..S_n)`, `M_n = max(S_1..S_n)` and the first epoch `τ_n`
/// at which `min(0, L_n)` is attained (`S_0 = 0` included).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Functionals {
    pub min: f64,
    pub max: f64,
    pub tau: usize,
}

/// A finite walk path with cached prefix sums `S_0 = 0, S_1, ..., S_n`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WalkPath {
    increments: Vec<f64>,
    sums: Vec<f64>,
}

impl WalkPath {
    pub fn from_increments(increments: Vec<f64>) -> Self {
        let mut sums = Vec::with_capacity(increments.len() + 1);
        let mut s = 0.0;
        sums.push(s);
        for &x in &increments {
            s += x;
            sums.push(s);
        }
        WalkPath { increments, sums }
    }

    pub fn simulate<R: RngCore + ?Sized>(sampler: &StableSampler, n: usize, rng: &mut R) -> Self {
        Self::from_increments((0..n).map(|_| sampler.sample(rng)).collect())
    }

    pub fn len(&self) -> usize {
        self.increments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.increments.is_empty()
    }

    pub fn increments(&self) -> &[f64] {
        &self.increments
    }

    /// `S_0, ..., S_n`.
    pub fn sums(&self) -> &[f64] {
        &self.sums
    }

    pub fn end(&self) -> f64 {
        *self.sums.last().expect("S_0 is always present")
    }

    pub fn functionals(&self) -> Result<Functionals> {
        functionals(&self.increments)
    }
}

/// Single pass over the increments; ties go to the smallest index.
pub fn functionals(increments: &[f64]) -> Result<Functionals> {
    if increments.is_empty() {
        return Err(Error::Domain("functionals need a path with n >= 1".into()));
    }
    let (mut s, mut min, mut max) = (0.0, f64::INFINITY, f64::NEG_INFINITY);
    let (mut low, mut tau) = (0.0, 0usize);
    for (k, &x) in increments.iter().enumerate() {
        s += x;
        min = f64::min(min, s);
        max = f64::max(max, s);
        if s < low {
            low = s;
            tau = k + 1;
        }
    }
    Ok(Functionals { min, max, tau })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn functional_examples() {
        let f = functionals(&[1.0, -2.0, 3.0]).unwrap();
        assert_eq!((f.min, f.max, f.tau), (-1.0, 2.0, 2));
        let f = functionals(&[1.0, 1.0]).unwrap();
        assert_eq!((f.min, f.max, f.tau), (1.0, 2.0, 0));
        let f = functionals(&[-1.0, -1.0]).unwrap();
        assert_eq!(f.tau, 2);
        assert!(functionals(&[]).is_err());
    }

    #[test]
    fn ties_take_the_first_index() {
        let f = functionals(&[-1.0, 1.0, -1.0]).unwrap();
        assert_eq!(f.tau, 1);
        // returning to zero does not move τ off S_0
        let f = functionals(&[1.0, -1.0]).unwrap();
        assert_eq!(f.tau, 0);
    }

    #[test]
    fn sums_are_prefix_sums() {
        let p = WalkPath::from_increments(vec![0.5, -1.5, 2.0]);
        assert_eq!(p.sums(), &[0.0, 0.5, -1.0, 1.0]);
        assert_eq!(p.end(), 1.0);
        assert_eq!(p.len(), 3);
    }
}
