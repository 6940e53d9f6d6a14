//! Strictly stable laws with characteristic function
//! `exp{-c|w|^α (1 - iβ sgn(w) tan(πα/2))}`.

use std::f64::consts::{FRAC_PI_2, PI};

use num_complex::Complex64;
use rand::RngCore;
use rand_distr::Distribution;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature;
use crate::rng::open01;

/// Relative tolerance of the density-at-zero quadrature.
pub const DENSITY_REL_TOL: f64 = 1e-10;
/// Bound on the neglected tail of the density-at-zero integral.
const DENSITY_TAIL_TOL: f64 = 1e-12;

#[derive(Serialize, Deserialize)]
struct RawStableParams {
    alpha: f64,
    beta: f64,
    c: f64,
}

/// Parameters `(α, β, c)` of a strictly stable law.
///
/// Construction enforces membership in the admissible set
/// `{0<α<1, |β|<1} ∪ {1<α<2, |β|≤1} ∪ {α=1, β=0} ∪ {α=2, β=0}` and `c > 0`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawStableParams", into = "RawStableParams")]
pub struct StableParams {
    alpha: f64,
    beta: f64,
    c: f64,
}

impl TryFrom<RawStableParams> for StableParams {
    type Error = Error;
    fn try_from(raw: RawStableParams) -> Result<Self> {
        StableParams::new(raw.alpha, raw.beta, raw.c)
    }
}

impl From<StableParams> for RawStableParams {
    fn from(p: StableParams) -> Self {
        RawStableParams {
            alpha: p.alpha,
            beta: p.beta,
            c: p.c,
        }
    }
}

impl StableParams {
    pub fn new(alpha: f64, beta: f64, c: f64) -> Result<Self> {
        if !(c > 0.0 && c.is_finite()) {
            return Err(Error::Inadmissible(format!("scale c = {c} must be positive")));
        }
        if !(alpha.is_finite() && beta.is_finite()) {
            return Err(Error::Inadmissible("non-finite parameters".into()));
        }
        let ok = (alpha > 0.0 && alpha < 1.0 && beta.abs() < 1.0)
            || (alpha > 1.0 && alpha < 2.0 && beta.abs() <= 1.0)
            || (alpha == 1.0 && beta == 0.0)
            || (alpha == 2.0 && beta == 0.0);
        if !ok {
            let hint = if alpha == 1.0 {
                " (α = 1 is supported only for β = 0)"
            } else {
                ""
            };
            return Err(Error::Inadmissible(format!(
                "(α, β) = ({alpha}, {beta}) is not admissible{hint}"
            )));
        }
        Ok(StableParams { alpha, beta, c })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn c(&self) -> f64 {
        self.c
    }

    /// `|β| < 1`, required when the law drives an environment.
    pub fn is_b1_strict(&self) -> bool {
        self.beta.abs() < 1.0
    }

    /// `tan(πα/2)`, taken as zero at α = 1 where β is forced to zero.
    fn tan_term(&self) -> f64 {
        if self.alpha == 1.0 {
            0.0
        } else {
            (FRAC_PI_2 * self.alpha).tan()
        }
    }

    /// Positivity parameter `ρ = P(Y₁ > 0)`.
    pub fn rho(&self) -> f64 {
        if self.beta == 0.0 {
            return 0.5;
        }
        0.5 + (self.beta * self.tan_term()).atan() / (PI * self.alpha)
    }

    pub fn char_fn(&self, w: f64) -> Complex64 {
        if w == 0.0 {
            return Complex64::new(1.0, 0.0);
        }
        let modulus = self.c * w.abs().powf(self.alpha);
        let phase = modulus * self.beta * w.signum() * self.tan_term();
        Complex64::from_polar((-modulus).exp(), phase)
    }

    /// Density at zero, `(1/π) ∫₀^∞ exp(-c w^α) cos(cβ tan(πα/2) w^α) dw`.
    pub fn density_at_zero(&self) -> Result<f64> {
        let (alpha, c) = (self.alpha, self.c);
        let k = c * self.beta * self.tan_term();
        // upper cut-off for the neglected tail
        let mut upper = 1.0f64;
        while (-c * upper.powf(alpha)).exp() / (c * alpha * upper.powf(alpha - 1.0))
            >= DENSITY_TAIL_TOL
        {
            upper *= 2.0;
        }
        let integral = if alpha < 1.0 {
            // u = w^α removes the infinite slope of w^α at the origin
            let p = 1.0 / alpha - 1.0;
            quadrature::integrate(
                |u: f64| u.powf(p) * (-c * u).exp() * (k * u).cos() / alpha,
                0.0,
                upper.powf(alpha),
                DENSITY_REL_TOL,
                0.0,
                4000,
            )?
        } else {
            quadrature::integrate(
                |w: f64| {
                    let wa = w.powf(alpha);
                    (-c * wa).exp() * (k * wa).cos()
                },
                0.0,
                upper,
                DENSITY_REL_TOL,
                0.0,
                4000,
            )?
        };
        let g = integral.value / PI;
        if g > 0.0 {
            Ok(g)
        } else {
            Err(Error::Undefined(format!("non-positive density at zero: {g}")))
        }
    }

    /// Normalizing sequences `(a_n, b_n)` with `a_n = n^{1/α}` and
    /// `b_n = 1/(n a_n)`; strict stability gives `S_n / a_n` the law of `Y₁`.
    pub fn normalizers(&self, n: u64) -> Result<(f64, f64)> {
        if n == 0 {
            return Err(Error::Domain("normalizers need n >= 1".into()));
        }
        let nf = n as f64;
        let a = nf.powf(1.0 / self.alpha);
        Ok((a, 1.0 / (nf * a)))
    }

    pub fn sampler(&self) -> StableSampler {
        StableSampler::new(self)
    }

    pub fn model_hash(&self) -> String {
        crate::content_hash(self)
    }
}

/// Chambers–Mallows–Stuck sampler for a fixed [`StableParams`].
#[derive(Clone, Copy, Debug)]
pub struct StableSampler {
    alpha: f64,
    inv_alpha: f64,
    tail_exp: f64,
    shift: f64,
    factor: f64,
    cauchy: bool,
}

impl StableSampler {
    pub fn new(p: &StableParams) -> Self {
        let scale = p.c.powf(1.0 / p.alpha);
        let bt = p.beta * p.tan_term();
        StableSampler {
            alpha: p.alpha,
            inv_alpha: 1.0 / p.alpha,
            tail_exp: (1.0 - p.alpha) / p.alpha,
            shift: bt.atan() / p.alpha,
            factor: scale * (1.0 + bt * bt).powf(0.5 / p.alpha),
            cauchy: p.alpha == 1.0,
        }
    }

    #[inline]
    pub fn sample<R: RngCore + ?Sized>(&self, rng: &mut R) -> f64 {
        loop {
            let v = PI * (open01(rng) - 0.5);
            if self.cauchy {
                return self.factor * v.tan();
            }
            let w = -open01(rng).ln();
            let t = self.alpha * (v + self.shift);
            let log_mag = self.tail_exp * ((v - t).cos().ln() - w.ln()) - self.inv_alpha * v.cos().ln();
            let x = self.factor * t.sin() * log_mag.exp();
            if x.is_finite() {
                return x;
            }
        }
    }
}

impl Distribution<f64> for StableSampler {
    fn sample<R: rand::Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        StableSampler::sample(self, rng)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Streams;
    use proptest::prelude::*;

    fn p(a: f64, b: f64) -> StableParams {
        StableParams::new(a, b, 1.0).unwrap()
    }

    #[test]
    fn admissibility() {
        assert!(StableParams::new(1.0, 0.5, 1.0).is_err());
        assert!(StableParams::new(2.0, 0.1, 1.0).is_err());
        assert!(StableParams::new(0.5, 1.0, 1.0).is_err());
        assert!(StableParams::new(1.5, 1.0, 1.0).is_ok());
        assert!(StableParams::new(1.5, 0.0, 0.0).is_err());
        assert!(StableParams::new(2.5, 0.0, 1.0).is_err());
        assert!(!p(1.5, 1.0).is_b1_strict());
        assert!(p(1.5, 0.3).is_b1_strict());
        let bad: std::result::Result<StableParams, _> =
            serde_json::from_str(r#"{"alpha":1.0,"beta":0.2,"c":1.0}"#);
        assert!(bad.is_err());
    }

    #[test]
    fn rho_values() {
        assert_eq!(p(2.0, 0.0).rho(), 0.5);
        assert_eq!(p(1.0, 0.0).rho(), 0.5);
        assert!((p(1.5, 1.0).rho() - 1.0 / 3.0).abs() < 1e-14);
        // mpmath: 0.401610921566377817216399282517
        assert!((p(1.5, 0.5).rho() - 0.401_610_921_566_377_8).abs() < 1e-14);
    }

    #[test]
    fn char_fn_values() {
        let g = p(2.0, 0.0).char_fn(1.0);
        assert!((g.re - (-1.0f64).exp()).abs() < 1e-15 && g.im.abs() < 1e-15);
        assert_eq!(p(0.7, 0.3).char_fn(0.0), Complex64::new(1.0, 0.0));
        let q = p(1.5, 0.5);
        let (a, b) = (q.char_fn(-2.0), q.char_fn(2.0));
        assert!((a - b.conj()).norm() < 1e-15);
    }

    #[test]
    fn density_at_zero_matches_closed_forms() {
        let cauchy = p(1.0, 0.0).density_at_zero().unwrap();
        assert!((cauchy - 1.0 / PI).abs() < 1e-10);
        let gauss = p(2.0, 0.0).density_at_zero().unwrap();
        assert!((gauss - 0.5 / PI.sqrt()).abs() < 1e-10);
    }

    #[test]
    fn density_at_zero_regression_constants() {
        // independent mpmath quadrature at 30 digits
        let cases = [
            (1.5, 0.0, 0.287_352_751_452_164_45),
            (1.5, 0.5, 0.254_112_686_602_229_45),
            (0.7, 0.3, 0.236_079_014_676_884_76),
            (1.2, -0.4, 0.150_481_976_607_604_54),
        ];
        for (a, b, want) in cases {
            let got = p(a, b).density_at_zero().unwrap();
            assert!(((got - want) / want).abs() < 1e-9, "α={a} β={b}: {got} vs {want}");
        }
    }

    #[test]
    fn density_at_zero_does_not_depend_on_sign_of_beta() {
        for (a, b) in [(1.5, 0.7), (0.6, 0.4), (1.8, -0.9)] {
            let x = p(a, b).density_at_zero().unwrap();
            let y = p(a, -b).density_at_zero().unwrap();
            assert!((x - y).abs() < 1e-13 * x);
        }
    }

    #[test]
    fn normalizer_values() {
        let (a4, b4) = p(2.0, 0.0).normalizers(4).unwrap();
        assert!((a4 - 2.0).abs() < 1e-14);
        assert!((b4 * a4 * 4.0 - 1.0).abs() < 1e-15);
        let (a8, _) = p(1.5, 0.0).normalizers(8).unwrap();
        assert!((a8 - 4.0).abs() < 1e-12);
        assert!(p(1.5, 0.0).normalizers(0).is_err());
    }

    #[test]
    fn gaussian_case_has_variance_two() {
        let s = p(2.0, 0.0).sampler();
        let mut rng = Streams::new(3).rng(0);
        let n = 1_000_000;
        let (mut m1, mut m2) = (0.0, 0.0);
        for _ in 0..n {
            let x = s.sample(&mut rng);
            m1 += x;
            m2 += x * x;
        }
        let var = m2 / n as f64 - (m1 / n as f64).powi(2);
        assert!((var - 2.0).abs() < 0.02, "variance {var}");
    }

    #[test]
    fn symmetric_median_is_zero() {
        let s = p(1.5, 0.0).sampler();
        let mut rng = Streams::new(4).rng(0);
        let n = 1_000_000usize;
        let mut xs: Vec<f64> = (0..n).map(|_| s.sample(&mut rng)).collect();
        xs.sort_by(f64::total_cmp);
        let median = xs[n / 2];
        // se of the median = 1 / (2 g(0) sqrt(n))
        let se = 1.0 / (2.0 * 0.287_352_751 * (n as f64).sqrt());
        assert!(median.abs() < 3.0 * se, "median {median}");
    }

    #[test]
    fn skewed_sampler_has_positivity_rho() {
        for (a, b) in [(1.5, 0.5), (0.7, 0.3)] {
            let q = p(a, b);
            let s = q.sampler();
            let mut rng = Streams::new(5).rng(0);
            let n = 400_000;
            let pos = (0..n).filter(|_| s.sample(&mut rng) > 0.0).count() as f64 / n as f64;
            let se = (q.rho() * (1.0 - q.rho()) / n as f64).sqrt();
            assert!((pos - q.rho()).abs() < 3.0 * se, "α={a}: {pos} vs {}", q.rho());
        }
    }

    proptest! {
        #[test]
        fn char_fn_modulus(a in 0.1f64..2.0, b in -0.99f64..0.99, c in 0.1f64..3.0, w in -20.0f64..20.0) {
            prop_assume!((a - 1.0).abs() > 1e-3);
            let q = StableParams::new(a, b, c).unwrap();
            let g = q.char_fn(w);
            prop_assert!((g.norm() - (-c * w.abs().powf(a)).exp()).abs() < 1e-12);
        }

        #[test]
        fn symmetric_rho_is_half(a in 0.05f64..2.0) {
            prop_assume!(a != 1.0);
            prop_assert_eq!(StableParams::new(a, 0.0, 1.0).unwrap().rho(), 0.5);
        }

        #[test]
        fn normalizers_scale_as_power_law(a in 0.3f64..2.0, n in 1u64..200, m in 1u64..200) {
            let q = StableParams::new(a, 0.0, 1.0).unwrap();
            let (anm, _) = q.normalizers(n * m).unwrap();
            let (an, _) = q.normalizers(n).unwrap();
            prop_assert!((anm - an * (m as f64).powf(1.0 / a)).abs() < 1e-10 * anm);
        }
    }
}
