use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "form", rename_all = "snake_case")]
pub enum PhiForm {
    /// `γ n^η`
    Power { eta: f64 },
    /// `γ log n`, defined for `n ≥ 2`.
    Log,
}

/// The moving threshold `φ(n)`: it must grow without bound while staying
/// `o(a_n) = o(n^{1/α})`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhiSpec {
    #[serde(flatten)]
    pub form: PhiForm,
    pub gamma: f64,
}

impl PhiSpec {
    pub fn power(gamma: f64, eta: f64, alpha: f64) -> Result<Self> {
        let p = PhiSpec {
            form: PhiForm::Power { eta },
            gamma,
        };
        p.validate(alpha)?;
        Ok(p)
    }

    pub fn log(gamma: f64) -> Result<Self> {
        let p = PhiSpec {
            form: PhiForm::Log,
            gamma,
        };
        p.validate(1.0)?;
        Ok(p)
    }

    /// `η = min(0.4, 0.8/α)`, `γ = 1`.
    pub fn default_for(alpha: f64) -> Self {
        PhiSpec {
            form: PhiForm::Power {
                eta: f64::min(0.4, 0.8 / alpha),
            },
            gamma: 1.0,
        }
    }

    pub fn validate(&self, alpha: f64) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return Err(Error::Inadmissible(format!("φ needs γ > 0, got {}", self.gamma)));
        }
        if let PhiForm::Power { eta } = self.form {
            if !(eta > 0.0) {
                return Err(Error::Inadmissible(format!("φ(n) = γ n^η needs η > 0 to grow, got η = {eta}")));
            }
            if !(eta < 1.0 / alpha) {
                return Err(Error::Inadmissible(format!(
                    "φ(n) = γ n^{eta} is not o(n^(1/α)) for α = {alpha}; need η < {}",
                    1.0 / alpha
                )));
            }
        }
        Ok(())
    }

    pub fn eval(&self, n: usize) -> Result<f64> {
        match self.form {
            PhiForm::Power { eta } => {
                if n == 0 {
                    return Err(Error::Domain("φ(n) needs n >= 1".into()));
                }
                Ok(self.gamma * (n as f64).powf(eta))
            }
            PhiForm::Log => {
                if n < 2 {
                    return Err(Error::Domain("γ log n needs n >= 2 to stay positive".into()));
                }
                Ok(self.gamma * (n as f64).ln())
            }
        }
    }
}
