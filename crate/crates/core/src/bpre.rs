//! The branching process in a fixed environment: iterated generating
//! functions, quenched survival probabilities and population trajectories.
//!
//! Iteration runs on complements `u = 1 - s` through each law's map
//! `u ↦ 1 - F(1 - u)`, which keeps full relative precision of survival
//! probabilities far below machine epsilon.

use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::env::OffspringLaw;
use crate::error::{Error, Result};

/// A real Möbius map `u ↦ (a u + b)/(c u + d)` acting on complements
/// `u = 1 - s`, stored up to scale. For linear-fractional laws the matrices
/// are lower triangular with nonnegative entries.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mobius {
    pub m: [[f64; 2]; 2],
}

impl Mobius {
    pub const IDENTITY: Mobius = Mobius {
        m: [[1.0, 0.0], [0.0, 1.0]],
    };

    pub fn of(law: &OffspringLaw) -> Option<Mobius> {
        law.complement_mobius().map(|m| Mobius { m })
    }

    /// `self ∘ inner`, rescaled so the largest entry has modulus one.
    pub fn compose(&self, inner: &Mobius) -> Mobius {
        let (a, b) = (self.m, inner.m);
        let mut m = [[0.0; 2]; 2];
        for i in 0..2 {
            for j in 0..2 {
                m[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j];
            }
        }
        let scale = m.iter().flatten().fold(0.0f64, |s, v| s.max(v.abs()));
        if scale > 0.0 && scale.is_finite() {
            for v in m.iter_mut().flatten() {
                *v /= scale;
            }
        }
        Mobius { m }
    }

    pub fn apply_complement(&self, u: f64) -> f64 {
        let [[a, b], [c, d]] = self.m;
        let v = a * u + b;
        if v == 0.0 {
            0.0
        } else {
            v / (c * u + d)
        }
    }

    /// The generating function value at `s`.
    pub fn apply(&self, s: f64) -> f64 {
        1.0 - self.apply_complement(1.0 - s)
    }

    pub fn det(&self) -> f64 {
        let [[a, b], [c, d]] = self.m;
        a * d - b * c
    }
}

/// State of a right-to-left composition `F_{k+1}(...F_n(s))`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenFnState {
    /// `1 - s` for the current value `s`.
    pub complement: f64,
    /// Composed Möbius map, while every law applied so far is
    /// linear-fractional.
    pub mobius: Option<Mobius>,
    pub steps: usize,
}

impl GenFnState {
    pub fn new(s: f64) -> Result<Self> {
        check_unit(s)?;
        Ok(GenFnState {
            complement: 1.0 - s,
            mobius: Some(Mobius::IDENTITY),
            steps: 0,
        })
    }

    pub fn value(&self) -> f64 {
        1.0 - self.complement
    }

    /// Applies `law` on the outside: `s ↦ F(s)`.
    pub fn apply(&mut self, law: &OffspringLaw) {
        self.complement = law.complement(self.complement).clamp(0.0, 1.0);
        self.mobius = match (self.mobius, Mobius::of(law)) {
            (Some(inner), Some(outer)) => Some(outer.compose(&inner)),
            _ => None,
        };
        self.steps += 1;
    }
}

fn check_unit(s: f64) -> Result<()> {
    if (0.0..=1.0).contains(&s) {
        Ok(())
    } else {
        Err(Error::Domain(format!("argument {s} outside [0, 1]")))
    }
}

fn check_range(env: &[OffspringLaw], k: usize, n: usize) -> Result<()> {
    if k <= n && n <= env.len() {
        Ok(())
    } else {
        Err(Error::Domain(format!(
            "need 0 <= k <= n <= {}, got k = {k}, n = {n}",
            env.len()
        )))
    }
}

/// `F_{k,n}(s) = F_{k+1}(F_{k+2}(...F_n(s)))` with `F_{n,n}(s) = s`.
/// `env[i]` is `F_{i+1}`.
pub fn iterate_pgf(env: &[OffspringLaw], k: usize, n: usize, s: f64) -> Result<f64> {
    check_unit(s)?;
    check_range(env, k, n)?;
    if k == n {
        return Ok(s);
    }
    Ok(1.0 - iterate_complement(env, k, n, 1.0 - s)?)
}

/// `1 - F_{k,n}(1 - u)`.
pub fn iterate_complement(env: &[OffspringLaw], k: usize, n: usize, u: f64) -> Result<f64> {
    check_range(env, k, n)?;
    check_unit(u)?;
    let mut u = u;
    for law in env[k..n].iter().rev() {
        u = law.complement(u);
    }
    Ok(u)
}

/// The composed Möbius map of `F_{k,n}`; `None` if a law is not
/// linear-fractional.
pub fn mobius_composition(env: &[OffspringLaw], k: usize, n: usize) -> Result<Option<Mobius>> {
    check_range(env, k, n)?;
    let mut acc = Mobius::IDENTITY;
    for law in env[k..n].iter().rev() {
        match Mobius::of(law) {
            Some(m) => acc = m.compose(&acc),
            None => return Ok(None),
        }
    }
    Ok(Some(acc))
}

/// `1 - F_{0,n}(0)`.
pub fn survival_prob_quenched(env: &[OffspringLaw], n: usize) -> Result<f64> {
    iterate_complement(env, 0, n, 1.0)
}

/// Forward survival for linear-fractional environments:
/// `1/(1 - F_{0,n}(0)) = e^{-S_n} + Σ_{i≤n} κ_i e^{-S_{i-1}}`.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LfSurvival {
    sum: f64,
    kappa_sum: f64,
    steps: usize,
}

impl LfSurvival {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds the next generation with log-mean `x` and parameter `κ`; returns
    /// `1 - F_{0,n}(0)` for the new `n`.
    #[inline]
    pub fn push(&mut self, x: f64, kappa: f64) -> f64 {
        self.kappa_sum += kappa * (-self.sum).exp();
        self.sum += x;
        self.steps += 1;
        self.survival()
    }

    pub fn survival(&self) -> f64 {
        if self.steps == 0 {
            return 1.0;
        }
        1.0 / ((-self.sum).exp() + self.kappa_sum)
    }

    pub fn walk(&self) -> f64 {
        self.sum
    }

    /// `Σ_{i≤n} κ_i e^{-S_{i-1}}`, the `κ` of the composed law of `Z_n`.
    pub fn kappa_sum(&self) -> f64 {
        self.kappa_sum
    }

    /// `1 - F_{0,n}(0)^k`.
    pub fn survival_of(&self, k: u64) -> f64 {
        power_complement(self.survival(), k)
    }
}

/// `1 - (1 - p)^k` without cancellation.
#[inline]
pub fn power_complement(p: f64, k: u64) -> f64 {
    if k == 1 {
        return p;
    }
    -((k as f64) * (-p).ln_1p()).exp_m1()
}

/// `1 - F_{0,n}(0)` for `n = 1..=len`. Linear in `len` for
/// linear-fractional environments, quadratic otherwise.
pub fn survival_curve(env: &[OffspringLaw]) -> Vec<f64> {
    let lf = env.iter().all(|l| l.mobius().is_some());
    if lf {
        let mut s = LfSurvival::new();
        env.iter()
            .map(|l| s.push(l.log_mean(), lf_kappa(l)))
            .collect()
    } else {
        (1..=env.len())
            .map(|n| survival_prob_quenched(env, n).expect("in range"))
            .collect()
    }
}

pub(crate) fn lf_kappa(law: &OffspringLaw) -> f64 {
    match *law {
        OffspringLaw::Geometric { .. } => 1.0,
        OffspringLaw::LinearFractional { kappa, .. } => kappa,
        OffspringLaw::Poisson { .. } => f64::NAN,
    }
}

/// Population sizes `Z_0..Z_n` of one trajectory.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Trajectory {
    pub sizes: Vec<u64>,
    /// Generation at which the size first exceeded the cap; the trajectory
    /// stops there and counts as survived at every later generation.
    pub capped_at: Option<usize>,
}

impl Trajectory {
    /// `Z_n > 0`, with survived-at-cap semantics.
    pub fn survived(&self, n: usize) -> bool {
        match self.capped_at {
            Some(c) if c <= n => true,
            _ => self.sizes.get(n).copied().unwrap_or(0) > 0,
        }
    }
}

/// Samples `Z_0 = z0, ..., Z_n` given the environment.
pub fn simulate_population<R: RngCore + ?Sized>(
    env: &[OffspringLaw],
    z0: u64,
    rng: &mut R,
    cap: u64,
) -> Result<Trajectory> {
    if z0 == 0 || cap < z0 {
        return Err(Error::Domain(format!("need z0 >= 1 and cap >= z0, got z0 = {z0}, cap = {cap}")));
    }
    let mut sizes = Vec::with_capacity(env.len() + 1);
    sizes.push(z0);
    let mut z = z0;
    for (i, law) in env.iter().enumerate() {
        z = law.sample_offspring_sum(z, rng);
        sizes.push(z);
        if z > cap {
            return Ok(Trajectory {
                sizes,
                capped_at: Some(i + 1),
            });
        }
    }
    Ok(Trajectory { sizes, capped_at: None })
}
