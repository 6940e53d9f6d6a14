//! Sampler checks against a CDF obtained by inverting the characteristic
//! function with a quadrature independent of the crate's.

use std::f64::consts::PI;

use bpre::stats::{ks_critical_1pct, ks_statistic};
use bpre::{StableParams, Streams};

/// Gil-Pelaez `F(x) = 1/2 - (1/π) ∫_0^∞ Im[e^{-iwx} φ(w)] / w dw`:
/// tanh-sinh on `[0, a]` for the endpoint behaviour `w^{α-1}`, composite
/// Simpson on `[a, W]` where `c W^α = 40`.
fn cdf_with(p: &StableParams, x: f64, base: f64) -> f64 {
    let f = |w: f64| -> f64 {
        let phi = p.char_fn(w);
        let (s, c) = (w * x).sin_cos();
        (c * phi.im - s * phi.re) / w
    };
    let a = f64::min(1.0, 1.0 / x.abs());
    let w_max = (40.0 / p.c()).powf(1.0 / p.alpha());

    let mut head = 0.0;
    let step = 1.0 / 64.0;
    for i in -256..=256 {
        let t = i as f64 * step;
        let sh = 0.5 * PI * t.sinh();
        // a (1 + tanh(sh)) / 2, written to stay accurate at both ends
        let w = if sh < 0.0 {
            a / (1.0 + (-2.0 * sh).exp())
        } else {
            a - a / (1.0 + (2.0 * sh).exp())
        };
        let weight = 0.25 * PI * a * t.cosh() / sh.cosh().powi(2);
        if w > 0.0 && w < a {
            head += weight * f(w);
        }
    }
    head *= step;

    let n = ((base + 20.0 * w_max * x.abs()).min(2e6) as usize) & !1;
    let h = (w_max - a) / n as f64;
    let mut tail = f(a) + f(w_max);
    for i in 1..n {
        tail += if i % 2 == 1 { 4.0 } else { 2.0 } * f(a + i as f64 * h);
    }
    tail *= h / 3.0;
    0.5 - (head + tail) / PI
}

fn cdf(p: &StableParams, x: f64) -> f64 {
    cdf_with(p, x, 20000.0)
}

/// Coarser rule for KS statistics, accurate to about 1e-6.
fn cdf_ks(p: &StableParams, x: f64) -> f64 {
    cdf_with(p, x, 3000.0)
}

fn sample(p: &StableParams, n: usize, seed: u64) -> Vec<f64> {
    let s = Streams::new(seed);
    let sampler = p.sampler();
    (0..n as u64).map(|i| sampler.sample(&mut s.rng(i))).collect()
}

#[test]
fn oracle_cdf_matches_closed_forms() {
    let cauchy = StableParams::new(1.0, 0.0, 1.0).unwrap();
    let normal = StableParams::new(2.0, 0.0, 1.0).unwrap();
    for x in [-7.0, -1.5, -0.2, 0.0, 0.4, 3.0] {
        let c = 0.5 + f64::atan(x) / PI;
        assert!((cdf(&cauchy, x) - c).abs() < 1e-7, "cauchy at {x}");
        // variance 2
        let g = 0.5 * (1.0 + statrs_free_erf(x / 2.0));
        assert!((cdf(&normal, x) - g).abs() < 1e-7, "normal at {x}");
    }
}

/// `erf` via its continued Taylor series; adequate to 1e-12 for `|x| ≤ 4`.
fn statrs_free_erf(x: f64) -> f64 {
    let mut term = x;
    let mut sum = x;
    for n in 1..200 {
        term *= -x * x / n as f64;
        sum += term / (2 * n + 1) as f64;
    }
    2.0 / PI.sqrt() * sum
}

#[test]
fn oracle_cdf_reproduces_frozen_interval_probabilities() {
    // P(0 ≤ X ≤ x) for α = 1.5, β = 0, c = 1 (high-precision reference)
    let p = StableParams::new(1.5, 0.0, 1.0).unwrap();
    let refs = [
        (0.5, 0.139_404_226_481_271_6),
        (1.0, 0.256_342_024_399_270_45),
        (2.0, 0.394_960_170_345_170_84),
    ];
    for (x, want) in refs {
        assert!((cdf(&p, x) - cdf(&p, 0.0) - want).abs() < 1e-8, "x = {x}");
    }
}

#[test]
fn sampler_passes_ks_against_inverted_cdf() {
    let cases = [(1.5, 0.0), (1.5, 0.5), (0.7, 0.3), (1.2, -0.4), (1.0, 0.0), (2.0, 0.0), (1.8, 0.9)];
    for (k, &(alpha, beta)) in cases.iter().enumerate() {
        let p = StableParams::new(alpha, beta, 1.0).unwrap();
        let mut xs = sample(&p, 2000, 100 + k as u64);
        let d = ks_statistic(&mut xs, |x| cdf_ks(&p, x));
        assert!(d < ks_critical_1pct(2000), "α = {alpha}, β = {beta}: D = {d}");
    }
}

#[test]
fn normalized_sums_have_the_same_law() {
    // S_n / n^{1/α} has the law of X_1 for a strictly stable law
    let p = StableParams::new(1.5, 0.5, 1.0).unwrap();
    let sampler = p.sampler();
    let s = Streams::new(7);
    let n = 8;
    let (a, _) = p.normalizers(n).unwrap();
    let mut xs: Vec<f64> = (0..2000u64)
        .map(|i| {
            let mut rng = s.rng(i);
            (0..n).map(|_| sampler.sample(&mut rng)).sum::<f64>() / a
        })
        .collect();
    let d = ks_statistic(&mut xs, |x| cdf_ks(&p, x));
    assert!(d < ks_critical_1pct(2000), "D = {d}");
}

#[test]
fn density_at_zero_matches_oracle_derivative() {
    for &(alpha, beta) in &[(1.5, 0.0), (1.5, 0.5), (0.7, 0.3), (1.2, -0.4)] {
        let p = StableParams::new(alpha, beta, 1.0).unwrap();
        let h = 1e-4;
        let fd = (cdf(&p, h) - cdf(&p, -h)) / (2.0 * h);
        let g = p.density_at_zero().unwrap();
        assert!((fd - g).abs() < 1e-5, "α = {alpha}, β = {beta}: {fd} vs {g}");
    }
}

#[test]
fn positivity_parameter_matches_oracle() {
    for &(alpha, beta) in &[(1.5, 0.5), (0.7, 0.3), (1.2, -0.4)] {
        let p = StableParams::new(alpha, beta, 1.0).unwrap();
        assert!((1.0 - cdf(&p, 0.0) - p.rho()).abs() < 1e-8);
    }
}
