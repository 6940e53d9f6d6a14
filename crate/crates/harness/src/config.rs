//! The experiment configuration: one TOML file with sections.

use std::path::{Path, PathBuf};

use bpre::env::{EnvironmentModel, Family, SecondaryRule};
use bpre::estimators::{PhiSpec, ThetaBudget};
use bpre::walk::geometric_grid;
use bpre::StableParams;
use serde::{Deserialize, Serialize};

use crate::HarnessError;

/// Environment variable that overrides `seed`; the only one consulted.
pub const SEED_ENV: &str = "BPRE_SEED";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Experiment {
    Tables,
    Verify,
    Selfcheck,
    Theta,
    Simulate,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub alpha: f64,
    pub beta: f64,
    pub c: f64,
    pub family: Family,
    #[serde(default = "no_rule")]
    pub secondary: SecondaryRule,
}

fn no_rule() -> SecondaryRule {
    SecondaryRule::None
}

impl ModelSpec {
    pub fn stable(&self) -> Result<StableParams, HarnessError> {
        Ok(StableParams::new(self.alpha, self.beta, self.c)?)
    }

    pub fn environment(&self) -> Result<EnvironmentModel, HarnessError> {
        Ok(EnvironmentModel::new(self.family, self.stable()?, self.secondary)?)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub lo: f64,
    pub hi: f64,
    pub per_decade: usize,
}

impl GridSpec {
    pub fn points(&self) -> Result<Vec<f64>, HarnessError> {
        Ok(geometric_grid(self.lo, self.hi, self.per_decade)?)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TablesSpec {
    pub u_grid: GridSpec,
    pub v_grid: GridSpec,
    pub n_max: usize,
    pub paths: u64,
    /// Also estimate `V` with the strict constraint `L_n > 0`.
    #[serde(default)]
    pub strict_v: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifySpec {
    pub n_list: Vec<usize>,
    /// Environment paths, shared by every `n`.
    pub paths: u64,
    /// Small-deviation ratio at `x_n = scale · n^eta`.
    pub deviation_paths: u64,
    pub deviation_scale: f64,
    pub deviation_eta: f64,
    /// `E[1 - F_{0,n}(0)^k | S_n ≤ φ(n), L_n ≥ 0]` against `E⁺[1 - F^k]`.
    pub conditioned_n: usize,
    pub conditioned_k: Vec<u64>,
    pub conditioned_paths: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SelfcheckSpec {
    pub rho_n: usize,
    pub rho_paths: u64,
    /// Number of grid abscissae for each harmonicity identity.
    pub harmonicity_points: usize,
    pub harmonicity_draws: u64,
    /// Abscissae are taken from the grid points inside this range.
    pub harmonicity_range: [f64; 2],
    pub tower_n: usize,
    pub tower_paths: u64,
    pub tower_cap: u64,
    pub oracle_environments: u64,
    pub oracle_max_n: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateSpec {
    pub n: usize,
    pub trajectories: u64,
    pub cap: u64,
}

/// Tolerances of the three-state gates. A gate whose decisive estimate has
/// relative standard error above `max_relative_se` is inconclusive.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GateSpec {
    pub flatness_max: f64,
    pub survival_variation_max: f64,
    pub deviation_variation_max: f64,
    pub theta_agreement_se: f64,
    pub conditioned_agreement_se: f64,
    pub structure_se: f64,
    pub harmonicity_se: f64,
    pub strict_v_se: f64,
    pub rho_se: f64,
    pub tower_se: f64,
    pub slope_tolerance: f64,
    pub oracle_tolerance: f64,
    pub density_tolerance: f64,
    pub ci_z: f64,
    pub max_relative_se: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    pub seed: u64,
    #[serde(default = "one")]
    pub workers: usize,
    #[serde(default = "default_out")]
    pub out: PathBuf,
    pub model: ModelSpec,
    pub phi: PhiSpec,
    pub tables: TablesSpec,
    pub verify: VerifySpec,
    pub theta: ThetaBudget,
    pub selfcheck: SelfcheckSpec,
    pub simulate: SimulateSpec,
    pub gates: GateSpec,
}

fn one() -> usize {
    1
}

fn default_out() -> PathBuf {
    PathBuf::from("runs")
}

fn invalid(msg: impl Into<String>) -> HarnessError {
    HarnessError::Validation(msg.into())
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, HarnessError> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| invalid(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads `path` and applies the `BPRE_SEED` override.
    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path)?;
        let mut cfg = Self::from_toml(&text)?;
        if let Ok(seed) = std::env::var(SEED_ENV) {
            cfg.seed = seed
                .trim()
                .parse()
                .map_err(|_| invalid(format!("{SEED_ENV}={seed} is not a u64")))?;
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let stable = self.model.stable()?;
        self.model.environment()?;
        let alpha = stable.alpha();
        self.phi.validate(alpha)?;
        let t = &self.tables;
        let u_grid = t.u_grid.points()?;
        let v_grid = t.v_grid.points()?;
        if t.n_max == 0 || t.paths < 2 {
            return Err(invalid("tables need n_max >= 1 and paths >= 2"));
        }
        let v = &self.verify;
        if v.n_list.is_empty() || v.n_list.contains(&0) || v.n_list.windows(2).any(|w| w[1] <= w[0]) {
            return Err(invalid("verify.n_list must be nonempty, strictly increasing and >= 1"));
        }
        if v.paths < 2 || v.deviation_paths < 2 || v.conditioned_paths < 2 {
            return Err(invalid("verify budgets need at least two paths"));
        }
        let n_top = *v.n_list.last().expect("nonempty");
        let phi_top = self.phi.eval(n_top)?;
        if phi_top > *v_grid.last().expect("grid") {
            return Err(invalid(format!(
                "V grid ends at {} but φ({n_top}) = {phi_top}",
                t.v_grid.hi
            )));
        }
        if !(v.deviation_scale > 0.0 && v.deviation_eta > 0.0) {
            return Err(invalid("deviation_scale and deviation_eta must be positive"));
        }
        let x_top = v.deviation_scale * (n_top as f64).powf(v.deviation_eta);
        if x_top > t.v_grid.hi {
            return Err(invalid(format!("V grid ends at {} but x_{n_top} = {x_top}", t.v_grid.hi)));
        }
        if v.conditioned_n == 0 || v.conditioned_k.iter().any(|&k| k == 0 || k as usize > self.theta.k_max) {
            return Err(invalid("conditioned_n must be >= 1 and every k in 1..=theta.k_max"));
        }
        let th = &self.theta;
        th.m.checkpoints()?;
        if th.k_max == 0 || th.plus_paths < 2 || th.env_paths < 2 || th.cap == 0 {
            return Err(invalid("theta needs k_max >= 1, cap >= 1 and at least two paths"));
        }
        let s = &self.selfcheck;
        let [lo, hi] = s.harmonicity_range;
        if !(lo > 0.0 && hi > lo) || s.harmonicity_points == 0 {
            return Err(invalid("selfcheck.harmonicity_range must satisfy 0 < lo < hi"));
        }
        let inside = |g: &[f64]| g.iter().filter(|&&x| x >= lo && x <= hi).count();
        if inside(&u_grid) < s.harmonicity_points || inside(&v_grid) < s.harmonicity_points {
            return Err(invalid("harmonicity_range holds fewer grid points than harmonicity_points"));
        }
        if s.rho_n == 0 || s.tower_n == 0 || s.oracle_max_n == 0 || s.tower_cap == 0 {
            return Err(invalid("selfcheck sizes must be >= 1"));
        }
        if self.simulate.n == 0 || self.simulate.cap == 0 {
            return Err(invalid("simulate.n and simulate.cap must be >= 1"));
        }
        if self.workers == 0 {
            return Err(invalid("workers must be >= 1"));
        }
        Ok(())
    }

    /// SHA-256 of the configuration with `seed`, `workers` and `out`
    /// cleared: those do not change what is estimated, and the seed is
    /// recorded separately.
    pub fn content_hash(&self) -> String {
        let mut c = self.clone();
        c.seed = 0;
        c.workers = 1;
        c.out = PathBuf::new();
        bpre::content_hash(&c)
    }

    pub fn run_dir(&self) -> PathBuf {
        self.out
            .join(format!("run-{}-s{}", &self.content_hash()[..12], self.seed))
    }
}
