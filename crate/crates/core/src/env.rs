//! Offspring laws and random environments driven by a stable log-mean.
//!
//! Every law is parametrized by its log-mean `X = log F'(1)`. Formulas are
//! written in terms of `e^{-X}` so that extreme environment draws neither
//! overflow nor lose the relative precision of small survival factors.

use rand::RngCore;
use rand_distr::{Binomial, Distribution, Gamma, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{open01, run_paths, Merge, Streams};
use crate::stable::{StableParams, StableSampler};
use crate::stats::{MCEstimate, Moments};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Geometric,
    LinearFractional,
    Poisson,
}

/// One generation's reproduction law.
///
/// `LinearFractional` has pgf `a + (1-a)(1-q)s/(1-qs)`; its complement map is
/// `u ↦ m u / (1 + ν u)` with `ν = κ m`. `Geometric` is the case `κ = 1`
/// (mass `p = 1/(1+m)` at zero, then geometric).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum OffspringLaw {
    Geometric { log_mean: f64 },
    LinearFractional { log_mean: f64, kappa: f64 },
    Poisson { log_mean: f64 },
}

/// Pieces of a linear-fractional law: zero mass `a`, ratio `q`.
#[derive(Clone, Copy, Debug)]
struct LfParts {
    a: f64,
    one_minus_a: f64,
    q: f64,
    one_minus_q: f64,
}

impl OffspringLaw {
    pub fn geometric(log_mean: f64) -> Result<Self> {
        check_log_mean(log_mean)?;
        Ok(OffspringLaw::Geometric { log_mean })
    }

    /// Geometric law with mass `p` at zero (mean `(1-p)/p`).
    pub fn geometric_p(p: f64) -> Result<Self> {
        if !(p > 0.0 && p < 1.0) {
            return Err(Error::Domain(format!("geometric p = {p} outside (0, 1)")));
        }
        Self::geometric(((1.0 - p) / p).ln())
    }

    /// Linear-fractional law with mean `e^X` and `ν = κ e^X`. Requires
    /// `e^{-X} + κ ≥ 1` so that the zero mass is nonnegative.
    pub fn linear_fractional(log_mean: f64, kappa: f64) -> Result<Self> {
        check_log_mean(log_mean)?;
        if !(kappa >= 0.0 && kappa.is_finite()) || (-log_mean).exp() + kappa < 1.0 - 1e-15 {
            return Err(Error::Domain(format!(
                "linear-fractional law with log-mean {log_mean} and κ = {kappa} has negative zero mass"
            )));
        }
        Ok(OffspringLaw::LinearFractional { log_mean, kappa })
    }

    pub fn poisson(log_mean: f64) -> Result<Self> {
        check_log_mean(log_mean)?;
        Ok(OffspringLaw::Poisson { log_mean })
    }

    /// Exactly one child.
    pub fn deterministic_one() -> Self {
        OffspringLaw::LinearFractional {
            log_mean: 0.0,
            kappa: 0.0,
        }
    }

    pub fn family(&self) -> Family {
        match self {
            OffspringLaw::Geometric { .. } => Family::Geometric,
            OffspringLaw::LinearFractional { .. } => Family::LinearFractional,
            OffspringLaw::Poisson { .. } => Family::Poisson,
        }
    }

    pub fn log_mean(&self) -> f64 {
        match *self {
            OffspringLaw::Geometric { log_mean }
            | OffspringLaw::LinearFractional { log_mean, .. }
            | OffspringLaw::Poisson { log_mean } => log_mean,
        }
    }

    pub fn mean(&self) -> f64 {
        self.log_mean().exp()
    }

    fn kappa(&self) -> Option<f64> {
        match *self {
            OffspringLaw::Geometric { .. } => Some(1.0),
            OffspringLaw::LinearFractional { kappa, .. } => Some(kappa),
            OffspringLaw::Poisson { .. } => None,
        }
    }

    fn lf_parts(&self) -> Option<LfParts> {
        let kappa = self.kappa()?;
        let e = (-self.log_mean()).exp();
        let d = e + kappa;
        if !d.is_finite() {
            return Some(LfParts {
                a: 1.0,
                one_minus_a: 0.0,
                q: 0.0,
                one_minus_q: 1.0,
            });
        }
        Some(LfParts {
            a: ((d - 1.0) / d).max(0.0),
            one_minus_a: 1.0 / d,
            q: kappa / d,
            one_minus_q: e / d,
        })
    }

    /// `F(s)`; errors outside `[0, 1]`.
    pub fn pgf(&self, s: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&s) {
            return Err(Error::Domain(format!("pgf argument {s} outside [0, 1]")));
        }
        Ok(1.0 - self.complement(1.0 - s))
    }

    /// Complement map `u ↦ 1 - F(1 - u)` on `[0, 1]`.
    #[inline]
    pub fn complement(&self, u: f64) -> f64 {
        match *self {
            OffspringLaw::Geometric { log_mean } => u / ((-log_mean).exp() + u),
            OffspringLaw::LinearFractional { log_mean, kappa } => {
                if u == 0.0 {
                    0.0
                } else {
                    u / ((-log_mean).exp() + kappa * u)
                }
            }
            OffspringLaw::Poisson { log_mean } => -(-log_mean.exp() * u).exp_m1(),
        }
    }

    /// `P(ξ = k)`.
    pub fn pmf(&self, k: u64) -> f64 {
        self.ln_pmf(k).exp()
    }

    fn ln_pmf(&self, k: u64) -> f64 {
        match self.lf_parts() {
            Some(p) => {
                if k == 0 {
                    p.a.ln()
                } else {
                    let geometric = if k == 1 { 0.0 } else { (k - 1) as f64 * p.q.ln() };
                    p.one_minus_a.ln() + p.one_minus_q.ln() + geometric
                }
            }
            None => {
                let x = self.log_mean();
                let kf = k as f64;
                if k == 0 {
                    -x.exp()
                } else {
                    kf * x - x.exp() - ln_factorial(k)
                }
            }
        }
    }

    /// `P(ξ > k)`.
    pub fn tail_mass(&self, k: u64) -> f64 {
        match self.lf_parts() {
            Some(p) => {
                if p.q == 0.0 {
                    if k == 0 {
                        p.one_minus_a
                    } else {
                        0.0
                    }
                } else {
                    p.one_minus_a * (k as f64 * p.q.ln()).exp()
                }
            }
            None => poisson_upper(self.mean(), k + 1),
        }
    }

    /// Composition matrix `[[A, B], [C, D]]` with `F(s) = (As + B)/(Cs + D)`.
    /// `None` for Poisson laws.
    pub fn mobius(&self) -> Option<[[f64; 2]; 2]> {
        let p = self.lf_parts()?;
        Some([
            [p.one_minus_a * p.one_minus_q - p.a * p.q, p.a],
            [-p.q, 1.0],
        ])
    }

    /// Matrix of the complement map `u ↦ u/(e^{-X} + κu)`, i.e.
    /// `[[1, 0], [κ, e^{-X}]]` scaled to unit maximum. Its entries are
    /// nonnegative, so compositions involve no cancellation.
    pub fn complement_mobius(&self) -> Option<[[f64; 2]; 2]> {
        let kappa = self.kappa()?;
        let e = (-self.log_mean()).exp();
        if !e.is_finite() {
            return Some([[0.0, 0.0], [0.0, 1.0]]);
        }
        let scale = e.max(kappa).max(1.0);
        Some([[1.0 / scale, 0.0], [kappa / scale, e / scale]])
    }

    /// `ζ(b) = Σ_{k≥b} k² F({k}) / (Σ_{k≥b} k F({k}))²` in closed form.
    pub fn zeta(&self, b: u64) -> Result<f64> {
        self.log_zeta(b).map(f64::exp)
    }

    /// `log ζ(b)`, finite even where `ζ(b)` overflows.
    pub fn log_zeta(&self, b: u64) -> Result<f64> {
        let b = b.max(1);
        let undefined = || Error::Undefined(format!("truncated mean of {self:?} at b = {b} is zero"));
        if let Some(kappa) = self.kappa() {
            // log d with d = e^{-X} + κ, so that 1 - a = 1/d, q = κ/d, 1 - q = e^{-X}/d
            let x = self.log_mean();
            let ln_d = if kappa > 0.0 {
                let (hi, lo) = if -x > kappa.ln() { (-x, kappa.ln()) } else { (kappa.ln(), -x) };
                hi + (lo - hi).exp().ln_1p()
            } else {
                -x
            };
            let q = if kappa > 0.0 { (kappa.ln() - ln_d).exp() } else { 0.0 };
            let r = (-x - ln_d).exp();
            if b > 1 && q == 0.0 {
                return Err(undefined());
            }
            let bf = b as f64;
            let num = bf * bf * r * r + 2.0 * bf * q * r + q * (1.0 + q);
            let lin = bf * r + q;
            let q_term = if b == 1 { 0.0 } else { (b - 1) as f64 * q.ln() };
            return Ok(num.ln() + ln_d - q_term - 2.0 * lin.ln());
        }
        // Poisson
        let x = self.log_mean();
        if b == 1 {
            // (λ + λ²)/λ² = 1 + e^{-X}
            return Ok(softplus(-x));
        }
        let lambda = x.exp();
        let t1 = poisson_upper(lambda, b - 1);
        let t2 = poisson_upper(lambda, b - 2);
        if !(t1 > 0.0) || !lambda.is_finite() {
            return Err(undefined());
        }
        Ok((lambda * t2 + t1).ln() - x - 2.0 * t1.ln())
    }

    /// `ζ(b)` by direct summation of the mass function. Slow; used to
    /// validate the closed forms.
    pub fn zeta_series(&self, b: u64) -> Result<f64> {
        let (mut s1, mut s2) = (0.0f64, 0.0f64);
        let start = b.max(1);
        let mut k = start;
        loop {
            let p = self.pmf(k);
            let kf = k as f64;
            s1 += kf * p;
            s2 += kf * kf * p;
            if kf > 4.0 * self.mean() + 20.0 && kf * kf * p < 1e-18 * s2.max(f64::MIN_POSITIVE) {
                break;
            }
            if k - start > 50_000_000 {
                return Err(Error::Budget("zeta series did not converge".into()));
            }
            k += 1;
        }
        if s1 == 0.0 {
            return Err(Error::Undefined("zero truncated mean".into()));
        }
        Ok(s2 / (s1 * s1))
    }

    /// Total offspring of `z` independent parents.
    ///
    /// Uses the closed-form convolutions: a geometric sum is negative
    /// binomial (drawn as a Gamma–Poisson mixture), a linear-fractional sum is
    /// `N + NegBin(N)` with `N` binomial, and a Poisson sum is Poisson.
    /// Counts beyond `2^53` are returned as their conditional mean.
    pub fn sample_offspring_sum<R: RngCore + ?Sized>(&self, z: u64, rng: &mut R) -> u64 {
        if z == 0 {
            return 0;
        }
        match *self {
            OffspringLaw::Geometric { log_mean } => {
                gamma_poisson(z as f64, log_mean.exp(), rng)
            }
            OffspringLaw::LinearFractional { .. } => {
                let p = self.lf_parts().expect("linear-fractional");
                let parents = if p.one_minus_a >= 1.0 {
                    z
                } else {
                    Binomial::new(z, p.one_minus_a)
                        .expect("valid binomial")
                        .sample(&mut RngAdapter(rng))
                };
                if parents == 0 || p.q == 0.0 {
                    return parents;
                }
                parents.saturating_add(gamma_poisson(parents as f64, p.q / p.one_minus_q, rng))
            }
            OffspringLaw::Poisson { log_mean } => poisson_draw(z as f64 * log_mean.exp(), rng),
        }
    }
}

const EXACT_COUNT_LIMIT: f64 = 9.007_199_254_740_992e15;

fn gamma_poisson<R: RngCore + ?Sized>(shape: f64, scale: f64, rng: &mut R) -> u64 {
    // extreme environments: the mean underflows or overflows
    if !(scale > 0.0) {
        return 0;
    }
    if !(scale * shape < EXACT_COUNT_LIMIT) {
        return poisson_draw(scale * shape, rng);
    }
    let lambda = Gamma::new(shape, scale)
        .expect("valid gamma")
        .sample(&mut RngAdapter(rng));
    poisson_draw(lambda, rng)
}

fn poisson_draw<R: RngCore + ?Sized>(lambda: f64, rng: &mut R) -> u64 {
    if !(lambda > 0.0) {
        return 0;
    }
    if lambda >= EXACT_COUNT_LIMIT {
        return if lambda >= u64::MAX as f64 { u64::MAX } else { lambda as u64 };
    }
    Poisson::new(lambda)
        .expect("valid poisson")
        .sample(&mut RngAdapter(rng)) as u64
}

/// Lets `rand_distr` samplers draw from an unsized `RngCore`.
struct RngAdapter<'a, R: RngCore + ?Sized>(&'a mut R);

impl<R: RngCore + ?Sized> RngCore for RngAdapter<'_, R> {
    fn next_u32(&mut self) -> u32 {
        self.0.next_u32()
    }
    fn next_u64(&mut self) -> u64 {
        self.0.next_u64()
    }
    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.0.fill_bytes(dst)
    }
}

fn check_log_mean(x: f64) -> Result<()> {
    if x.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!("log-mean {x} is not finite")))
    }
}

fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

fn ln_factorial(k: u64) -> f64 {
    statrs::function::gamma::ln_gamma(k as f64 + 1.0)
}

/// `P(N ≥ j)` for `N ~ Poisson(λ)`.
fn poisson_upper(lambda: f64, j: u64) -> f64 {
    if j == 0 {
        1.0
    } else {
        statrs::function::gamma::gamma_lr(j as f64, lambda)
    }
}

/// How the non-mean parameter `κ` of a linear-fractional law is chosen.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum SecondaryRule {
    /// Geometric and Poisson laws have no free parameter.
    None,
    Fixed { kappa: f64 },
    /// `κ` drawn uniformly from `[lo, hi]`, independently of `X`.
    Uniform { lo: f64, hi: f64 },
}

/// Law of one environment element: family, stable log-mean law and rule for
/// the remaining parameter.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnvironmentModel {
    pub family: Family,
    pub stable: StableParams,
    pub secondary: SecondaryRule,
}

impl EnvironmentModel {
    /// Checks B1-strictness (`|β| < 1`) and the secondary rule. `κ ≥ 1` is
    /// required so that every stable draw yields a valid law.
    pub fn new(family: Family, stable: StableParams, secondary: SecondaryRule) -> Result<Self> {
        let m = EnvironmentModel {
            family,
            stable,
            secondary,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn geometric(stable: StableParams) -> Result<Self> {
        Self::new(Family::Geometric, stable, SecondaryRule::None)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.stable.is_b1_strict() {
            return Err(Error::Inadmissible(format!(
                "environment needs |β| < 1, got β = {}",
                self.stable.beta()
            )));
        }
        match (self.family, self.secondary) {
            (Family::LinearFractional, SecondaryRule::Fixed { kappa }) if kappa >= 1.0 && kappa.is_finite() => Ok(()),
            (Family::LinearFractional, SecondaryRule::Uniform { lo, hi })
                if lo >= 1.0 && hi >= lo && hi.is_finite() =>
            {
                Ok(())
            }
            (Family::LinearFractional, rule) => Err(Error::Inadmissible(format!(
                "linear-fractional environments need κ ≥ 1 for every draw, got {rule:?}"
            ))),
            (_, SecondaryRule::None) => Ok(()),
            (family, rule) => Err(Error::Inadmissible(format!(
                "{family:?} laws take no secondary parameter, got {rule:?}"
            ))),
        }
    }

    pub fn sampler(&self) -> EnvironmentSampler {
        EnvironmentSampler {
            model: *self,
            stable: self.stable.sampler(),
        }
    }

    pub fn model_hash(&self) -> String {
        crate::content_hash(self)
    }
}

/// Draws environment elements; holds the precomputed stable sampler.
#[derive(Clone, Copy, Debug)]
pub struct EnvironmentSampler {
    model: EnvironmentModel,
    stable: StableSampler,
}

impl EnvironmentSampler {
    pub fn model(&self) -> &EnvironmentModel {
        &self.model
    }

    /// Builds the law with log-mean `x`, drawing `κ` if the rule asks for it.
    #[inline]
    pub fn law_for<R: RngCore + ?Sized>(&self, x: f64, rng: &mut R) -> OffspringLaw {
        match (self.model.family, self.model.secondary) {
            (Family::Geometric, _) => OffspringLaw::Geometric { log_mean: x },
            (Family::Poisson, _) => OffspringLaw::Poisson { log_mean: x },
            (Family::LinearFractional, SecondaryRule::Fixed { kappa }) => {
                OffspringLaw::LinearFractional { log_mean: x, kappa }
            }
            (Family::LinearFractional, SecondaryRule::Uniform { lo, hi }) => OffspringLaw::LinearFractional {
                log_mean: x,
                kappa: lo + (hi - lo) * open01(rng),
            },
            (Family::LinearFractional, SecondaryRule::None) => unreachable!("rejected by validate"),
        }
    }

    #[inline]
    pub fn draw<R: RngCore + ?Sized>(&self, rng: &mut R) -> OffspringLaw {
        let x = self.stable.sample(rng);
        self.law_for(x, rng)
    }

    /// Draws only the log-mean. Consumes the same numbers as [`Self::draw`]
    /// when the rule draws nothing else.
    #[inline]
    pub fn draw_log_mean<R: RngCore + ?Sized>(&self, rng: &mut R) -> f64 {
        self.stable.sample(rng)
    }
}

/// `n` i.i.d. environment elements.
pub fn sample_environment<R: RngCore + ?Sized>(
    model: &EnvironmentModel,
    n: usize,
    rng: &mut R,
) -> Result<Vec<OffspringLaw>> {
    if n == 0 {
        return Err(Error::Domain("environment length must be >= 1".into()));
    }
    let s = model.sampler();
    Ok((0..n).map(|_| s.draw(rng)).collect())
}

/// Monte Carlo diagnostic for `E[(log⁺ ζ(b))^{α+ε}]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct B2Report {
    pub b: u64,
    pub epsilon: f64,
    pub estimate: MCEstimate,
    /// Largest summand seen; dominates the sum when the moment is infinite.
    pub max_summand: f64,
    /// Hill estimate of the tail index of the summand from its top order
    /// statistics. Values `≤ 1` indicate an infinite mean.
    pub hill_tail_index: Option<f64>,
    pub note: String,
}

/// The B2 integrand `(log⁺ ζ(b))^{α+ε}` for one law.
pub fn b2_summand(law: &OffspringLaw, b: u64, power: f64) -> Result<f64> {
    Ok(law.log_zeta(b)?.max(0.0).powf(power))
}

#[derive(Default)]
struct B2Acc {
    moments: Moments,
    max: f64,
    top: Vec<f64>,
}

const HILL_KEEP: usize = 64;

impl B2Acc {
    fn push(&mut self, v: f64) {
        self.moments.push(v);
        self.max = self.max.max(v);
        self.top.push(v);
        if self.top.len() > 4 * HILL_KEEP {
            self.trim();
        }
    }

    fn trim(&mut self) {
        self.top.sort_by(|a, b| b.total_cmp(a));
        self.top.truncate(HILL_KEEP + 1);
    }
}

impl Merge for B2Acc {
    fn merge(&mut self, later: Self) {
        self.moments.merge(later.moments);
        self.max = self.max.max(later.max);
        self.top.extend(later.top);
        self.trim();
    }
}

/// Sampling cannot establish finiteness of the moment; the report carries
/// heavy-tail diagnostics alongside the estimate.
pub fn check_b2(
    model: &EnvironmentModel,
    b: u64,
    epsilon: f64,
    n_samples: u64,
    streams: &Streams,
    workers: usize,
) -> Result<B2Report> {
    if n_samples == 0 {
        return Err(Error::Domain("n_samples must be >= 1".into()));
    }
    if !(epsilon > 0.0) {
        return Err(Error::Domain("epsilon must be positive".into()));
    }
    let power = model.stable.alpha() + epsilon;
    let sampler = model.sampler();
    let acc = run_paths(streams, n_samples, workers, B2Acc::default, |acc, rng, _| {
        let law = sampler.draw(rng);
        // ζ(b) is closed-form for every family; an undefined value means
        // zero truncated mass, whose summand is taken as zero
        acc.push(b2_summand(&law, b, power).unwrap_or(0.0));
    });
    let mut acc = acc;
    acc.trim();
    let hill = hill_estimate(&acc.top);
    let note = "finiteness of the moment cannot be established by sampling; \
                a large max summand or a Hill tail index <= 1 indicates an infinite moment"
        .to_string();
    Ok(B2Report {
        b,
        epsilon,
        estimate: MCEstimate::from_moments(acc.moments, streams, n_samples),
        max_summand: acc.max,
        hill_tail_index: hill,
        note,
    })
}

/// Hill estimator from descending order statistics (top `k + 1` values).
fn hill_estimate(desc: &[f64]) -> Option<f64> {
    let k = desc.len().checked_sub(1)?.min(HILL_KEEP);
    if k < 2 || !(desc[k] > 0.0) {
        return None;
    }
    let base = desc[k].ln();
    let mean: f64 = desc[..k].iter().map(|v| v.ln() - base).sum::<f64>() / k as f64;
    (mean > 0.0).then(|| 1.0 / mean)
}
