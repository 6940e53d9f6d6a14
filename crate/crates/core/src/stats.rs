//! Mergeable Monte Carlo statistics.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{Merge, StreamRange, Streams};

/// Sufficient statistics of a (possibly weighted) sample `(w_i, h_i)`.
///
/// Unweighted samples use `w = 1`. The self-normalized estimate is
/// `Σ w h / Σ w`; for unit weights it is the sample mean.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Moments {
    pub count: u64,
    pub sum_w: f64,
    pub sum_wh: f64,
    pub sum_w2: f64,
    pub sum_w2h: f64,
    pub sum_w2h2: f64,
}

impl Moments {
    #[inline]
    pub fn push(&mut self, h: f64) {
        self.push_weighted(1.0, h);
    }

    #[inline]
    pub fn push_weighted(&mut self, w: f64, h: f64) {
        let w2 = w * w;
        self.count += 1;
        self.sum_w += w;
        self.sum_wh += w * h;
        self.sum_w2 += w2;
        self.sum_w2h += w2 * h;
        self.sum_w2h2 += w2 * h * h;
    }

    /// Statistics of `trials` unit-weight indicators with `hits` ones.
    pub fn bernoulli(hits: u64, trials: u64) -> Self {
        let h = hits as f64;
        let t = trials as f64;
        Moments {
            count: trials,
            sum_w: t,
            sum_wh: h,
            sum_w2: t,
            sum_w2h: h,
            sum_w2h2: h,
        }
    }

    /// Records `n` samples with `w = 1, h = 0`.
    #[inline]
    pub fn push_zeros(&mut self, n: u64) {
        self.count += n;
        self.sum_w += n as f64;
        self.sum_w2 += n as f64;
    }

    pub fn value(&self) -> f64 {
        if self.sum_w == 0.0 {
            0.0
        } else {
            self.sum_wh / self.sum_w
        }
    }

    /// Delta-method standard error of the self-normalized estimate.
    pub fn std_error(&self) -> f64 {
        if self.count < 2 || self.sum_w == 0.0 {
            return 0.0;
        }
        let v = self.value();
        let num = self.sum_w2h2 - 2.0 * v * self.sum_w2h + v * v * self.sum_w2;
        let n = self.count as f64;
        (num.max(0.0) * n / (n - 1.0)).sqrt() / self.sum_w
    }

    /// Kish effective sample size.
    pub fn ess(&self) -> f64 {
        if self.sum_w2 == 0.0 {
            0.0
        } else {
            self.sum_w * self.sum_w / self.sum_w2
        }
    }

    /// Sample variance of `h` for unit-weight samples.
    pub fn variance(&self) -> f64 {
        if self.count < 2 {
            return 0.0;
        }
        let n = self.count as f64;
        let mean = self.sum_wh / n;
        ((self.sum_w2h2 - n * mean * mean) / (n - 1.0)).max(0.0)
    }
}

impl Merge for Moments {
    fn merge(&mut self, later: Self) {
        self.count += later.count;
        self.sum_w += later.sum_w;
        self.sum_wh += later.sum_wh;
        self.sum_w2 += later.sum_w2;
        self.sum_w2h += later.sum_w2h;
        self.sum_w2h2 += later.sum_w2h2;
    }
}

/// A Monte Carlo point estimate with its provenance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MCEstimate {
    pub value: f64,
    pub std_error: f64,
    pub samples: u64,
    pub seed: u64,
    pub streams: StreamRange,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub ess: Option<f64>,
    pub moments: Moments,
}

impl MCEstimate {
    pub fn from_moments(moments: Moments, streams: &Streams, paths: u64) -> Self {
        MCEstimate {
            value: moments.value(),
            std_error: moments.std_error(),
            samples: moments.count,
            seed: streams.seed,
            streams: streams.range(paths),
            ess: None,
            moments,
        }
    }

    /// Self-normalized weighted estimate; records the effective sample size.
    pub fn weighted(moments: Moments, streams: &Streams, paths: u64) -> Self {
        let mut e = Self::from_moments(moments, streams, paths);
        e.ess = Some(moments.ess());
        e
    }

    /// A structurally exact value: zero variance, no samples.
    pub fn exact(value: f64) -> Self {
        MCEstimate {
            value,
            std_error: 0.0,
            samples: 0,
            seed: 0,
            streams: StreamRange { start: 0, end: 0 },
            ess: None,
            moments: Moments::default(),
        }
    }

    /// A derived quantity (sum, product, ratio of estimates) with a
    /// propagated standard error. Provenance is taken from `like`.
    pub fn derived(value: f64, std_error: f64, like: &MCEstimate) -> Self {
        MCEstimate {
            value,
            std_error,
            samples: like.samples,
            seed: like.seed,
            streams: like.streams,
            ess: None,
            moments: Moments::default(),
        }
    }

    pub fn is_structural(&self) -> bool {
        self.samples == 0
    }

    /// Combines two estimates computed on disjoint stream ranges of the same
    /// seed.
    pub fn merge(&self, other: &MCEstimate) -> Result<MCEstimate> {
        if self.is_structural() || other.is_structural() {
            return Err(Error::Domain("structural estimates cannot be merged".into()));
        }
        if self.seed != other.seed {
            return Err(Error::Domain("estimates come from different seeds".into()));
        }
        if self.streams.overlaps(&other.streams) {
            return Err(Error::Domain("stream ranges overlap".into()));
        }
        let mut moments = self.moments;
        moments.merge(other.moments);
        Ok(MCEstimate {
            value: moments.value(),
            std_error: moments.std_error(),
            samples: moments.count,
            seed: self.seed,
            streams: self.streams.hull(&other.streams),
            ess: self.ess.map(|_| moments.ess()),
            moments,
        })
    }

    pub fn relative_error(&self) -> f64 {
        if self.value == 0.0 {
            f64::INFINITY
        } else {
            self.std_error / self.value.abs()
        }
    }

    /// Two-sided normal confidence interval.
    pub fn ci(&self, z: f64) -> (f64, f64) {
        (self.value - z * self.std_error, self.value + z * self.std_error)
    }
}

/// Joint first and second moments of a vector of unit-weight observations
/// on common paths.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CoMoments {
    pub count: u64,
    pub sum: Vec<f64>,
    /// Row-major `k × k` cross sums `Σ h_i h_j`.
    pub cross: Vec<f64>,
}

impl CoMoments {
    pub fn new(k: usize) -> Self {
        CoMoments {
            count: 0,
            sum: vec![0.0; k],
            cross: vec![0.0; k * k],
        }
    }

    pub fn dim(&self) -> usize {
        self.sum.len()
    }

    pub fn push(&mut self, h: &[f64]) {
        let k = self.dim();
        debug_assert_eq!(h.len(), k);
        self.count += 1;
        for i in 0..k {
            if h[i] == 0.0 {
                continue;
            }
            self.sum[i] += h[i];
            for j in 0..k {
                self.cross[i * k + j] += h[i] * h[j];
            }
        }
    }

    /// Records `n` all-zero observations.
    pub fn push_zeros(&mut self, n: u64) {
        self.count += n;
    }

    pub fn mean(&self, i: usize) -> f64 {
        if self.count == 0 {
            0.0
        } else {
            self.sum[i] / self.count as f64
        }
    }

    /// Covariance of the sample means of components `i` and `j`.
    pub fn mean_cov(&self, i: usize, j: usize) -> f64 {
        if self.count < 2 {
            return 0.0;
        }
        let n = self.count as f64;
        let c = (self.cross[i * self.dim() + j] - n * self.mean(i) * self.mean(j)) / (n - 1.0);
        c / n
    }

    /// Moments of component `i` alone.
    pub fn marginal(&self, i: usize) -> Moments {
        let n = self.count as f64;
        let s = self.sum[i];
        let s2 = self.cross[i * self.dim() + i];
        Moments {
            count: self.count,
            sum_w: n,
            sum_wh: s,
            sum_w2: n,
            sum_w2h: s,
            sum_w2h2: s2,
        }
    }
}

impl Merge for CoMoments {
    fn merge(&mut self, later: Self) {
        self.count += later.count;
        for (a, b) in self.sum.iter_mut().zip(later.sum) {
            *a += b;
        }
        for (a, b) in self.cross.iter_mut().zip(later.cross) {
            *a += b;
        }
    }
}

/// Weighted sufficient statistics of vector observations `(w, h_1..h_k)`
/// sharing one weight, for self-normalized estimates of every component and
/// of linear combinations.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct WeightedCross {
    pub count: u64,
    pub sum_w: f64,
    pub sum_w2: f64,
    pub sum_wh: Vec<f64>,
    pub sum_w2h: Vec<f64>,
    /// Row-major `k × k` sums `Σ w² h_i h_j`.
    pub sum_w2hh: Vec<f64>,
}

impl WeightedCross {
    pub fn new(k: usize) -> Self {
        WeightedCross {
            count: 0,
            sum_w: 0.0,
            sum_w2: 0.0,
            sum_wh: vec![0.0; k],
            sum_w2h: vec![0.0; k],
            sum_w2hh: vec![0.0; k * k],
        }
    }

    pub fn dim(&self) -> usize {
        self.sum_wh.len()
    }

    pub fn push(&mut self, w: f64, h: &[f64]) {
        self.count += 1;
        if w == 0.0 {
            return;
        }
        let k = self.dim();
        let w2 = w * w;
        self.sum_w += w;
        self.sum_w2 += w2;
        for i in 0..k {
            self.sum_wh[i] += w * h[i];
            self.sum_w2h[i] += w2 * h[i];
            for j in i..k {
                self.sum_w2hh[i * k + j] += w2 * h[i] * h[j];
            }
        }
    }

    /// Records `n` zero-weight observations.
    pub fn push_zero_weight(&mut self, n: u64) {
        self.count += n;
    }

    pub fn value(&self, i: usize) -> f64 {
        if self.sum_w == 0.0 {
            0.0
        } else {
            self.sum_wh[i] / self.sum_w
        }
    }

    fn cross(&self, i: usize, j: usize) -> f64 {
        let (a, b) = if i <= j { (i, j) } else { (j, i) };
        self.sum_w2hh[a * self.dim() + b]
    }

    /// `(estimate, standard error)` of `Σ c_i E[h_i]`, delta method.
    pub fn combination(&self, c: &[f64]) -> (f64, f64) {
        let k = self.dim();
        assert_eq!(c.len(), k);
        if self.sum_w == 0.0 || self.count < 2 {
            return (0.0, 0.0);
        }
        let g: f64 = (0..k).map(|i| c[i] * self.value(i)).sum();
        let mut quad = 0.0;
        for i in 0..k {
            if c[i] == 0.0 {
                continue;
            }
            for j in 0..k {
                quad += c[i] * c[j] * self.cross(i, j);
            }
        }
        let lin: f64 = (0..k).map(|i| c[i] * self.sum_w2h[i]).sum();
        let num = quad - 2.0 * g * lin + g * g * self.sum_w2;
        let n = self.count as f64;
        (g, (num.max(0.0) * n / (n - 1.0)).sqrt() / self.sum_w)
    }

    /// Moments of component `i` alone.
    pub fn marginal(&self, i: usize) -> Moments {
        Moments {
            count: self.count,
            sum_w: self.sum_w,
            sum_wh: self.sum_wh[i],
            sum_w2: self.sum_w2,
            sum_w2h: self.sum_w2h[i],
            sum_w2h2: self.cross(i, i),
        }
    }
}

impl Merge for WeightedCross {
    fn merge(&mut self, later: Self) {
        self.count += later.count;
        self.sum_w += later.sum_w;
        self.sum_w2 += later.sum_w2;
        for (a, b) in self.sum_wh.iter_mut().zip(later.sum_wh) {
            *a += b;
        }
        for (a, b) in self.sum_w2h.iter_mut().zip(later.sum_w2h) {
            *a += b;
        }
        for (a, b) in self.sum_w2hh.iter_mut().zip(later.sum_w2hh) {
            *a += b;
        }
    }
}

/// Standard error of a difference of independent estimates.
pub fn merged_se(a: f64, b: f64) -> f64 {
    a.hypot(b)
}

/// Pool-adjacent-violators fit of a nondecreasing sequence.
pub fn isotonic(values: &[f64], weights: &[f64]) -> Vec<f64> {
    assert_eq!(values.len(), weights.len());
    // blocks of (mean, weight, length)
    let mut blocks: Vec<(f64, f64, usize)> = Vec::with_capacity(values.len());
    for (&v, &w) in values.iter().zip(weights) {
        let w = if w > 0.0 { w } else { f64::MIN_POSITIVE };
        blocks.push((v, w, 1));
        while blocks.len() > 1 {
            let (m2, w2, l2) = blocks[blocks.len() - 1];
            let (m1, w1, l1) = blocks[blocks.len() - 2];
            if m1 <= m2 {
                break;
            }
            blocks.pop();
            let w = w1 + w2;
            *blocks.last_mut().unwrap() = ((m1 * w1 + m2 * w2) / w, w, l1 + l2);
        }
    }
    blocks
        .into_iter()
        .flat_map(|(m, _, l)| std::iter::repeat_n(m, l))
        .collect()
}

/// Least-squares line `y = intercept + slope x`.
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> Option<(f64, f64)> {
    let n = xs.len();
    if n < 2 || n != ys.len() {
        return None;
    }
    let nf = n as f64;
    let mx = xs.iter().sum::<f64>() / nf;
    let my = ys.iter().sum::<f64>() / nf;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    Some((slope, my - slope * mx))
}

/// Slope of `log y` against `log x` over the points with `x, y > 0`.
pub fn loglog_slope(xs: &[f64], ys: &[f64]) -> Option<f64> {
    let (lx, ly): (Vec<f64>, Vec<f64>) = xs
        .iter()
        .zip(ys)
        .filter(|(x, y)| **x > 0.0 && **y > 0.0)
        .map(|(x, y)| (x.ln(), y.ln()))
        .unzip();
    linear_fit(&lx, &ly).map(|(s, _)| s)
}

/// Fitted power-law tail `a n^{-p}` and its extrapolated sum beyond `n_last`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PowerTail {
    pub exponent: f64,
    pub prefactor: f64,
    /// `Σ_{n > n_last} a n^{-p}`, infinite when `p <= 1`.
    pub tail_sum: f64,
}

pub fn fit_power_tail(ns: &[f64], terms: &[f64], n_last: f64) -> Option<PowerTail> {
    let (lx, ly): (Vec<f64>, Vec<f64>) = ns
        .iter()
        .zip(terms)
        .filter(|(n, t)| **n > 0.0 && **t > 0.0)
        .map(|(n, t)| (n.ln(), t.ln()))
        .unzip();
    let (slope, intercept) = linear_fit(&lx, &ly)?;
    let p = -slope;
    let a = intercept.exp();
    let tail_sum = if p > 1.0 {
        a * (n_last + 0.5).powf(1.0 - p) / (p - 1.0)
    } else {
        f64::INFINITY
    };
    Some(PowerTail {
        exponent: p,
        prefactor: a,
        tail_sum,
    })
}

/// Kolmogorov–Smirnov statistic of a sample against a continuous CDF.
pub fn ks_statistic<F: Fn(f64) -> f64>(sample: &mut [f64], cdf: F) -> f64 {
    sample.sort_by(f64::total_cmp);
    let n = sample.len() as f64;
    sample
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).max((i + 1) as f64 / n - f)
        })
        .fold(0.0, f64::max)
}

/// Two-sample Kolmogorov–Smirnov statistic.
pub fn ks_two_sample(a: &mut [f64], b: &mut [f64]) -> f64 {
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j, mut d) = (0usize, 0usize, 0.0f64);
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    d
}

/// Asymptotic 1% critical value of the one-sample KS statistic.
pub fn ks_critical_1pct(n: usize) -> f64 {
    1.6276 / (n as f64).sqrt()
}

/// Asymptotic 1% critical value of the two-sample KS statistic.
pub fn ks_two_sample_critical_1pct(n: usize, m: usize) -> f64 {
    let (n, m) = (n as f64, m as f64);
    1.6276 * ((n + m) / (n * m)).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn weighted_cross_marginals_match_moments() {
        let mut wc = WeightedCross::new(2);
        let mut m0 = Moments::default();
        let data = [(0.5, 0.2, 0.9), (0.0, 0.0, 0.0), (2.0, 0.7, 0.1), (1.3, 0.4, 0.4), (0.8, 0.0, 1.0)];
        for &(w, a, b) in &data {
            wc.push(w, &[a, b]);
            m0.push_weighted(w, a);
        }
        let (v, se) = wc.combination(&[1.0, 0.0]);
        assert!((v - m0.value()).abs() < 1e-15);
        assert!((se - m0.std_error()).abs() < 1e-15);
        assert_eq!(wc.marginal(0).value(), m0.value());
        // a combination of identical columns doubles the standard error
        let mut twin = WeightedCross::new(2);
        for &(w, a, _) in &data {
            twin.push(w, &[a, a]);
        }
        let (_, se2) = twin.combination(&[1.0, 1.0]);
        assert!((se2 - 2.0 * m0.std_error()).abs() < 1e-14);
    }

    #[test]
    fn comoments_covariance() {
        let mut c = CoMoments::new(2);
        for i in 0..10 {
            let x = i as f64;
            c.push(&[x, 2.0 * x]);
        }
        let var = c.marginal(0).variance() / 10.0;
        assert!((c.mean_cov(0, 0) - var).abs() < 1e-12);
        assert!((c.mean_cov(0, 1) - 2.0 * var).abs() < 1e-12);
    }

    #[test]
    fn unit_weight_moments_match_sample_mean() {
        let mut m = Moments::default();
        for h in [1.0, 2.0, 3.0, 4.0] {
            m.push(h);
        }
        assert_eq!(m.value(), 2.5);
        // sd = sqrt(5/3), se = sd / 2
        assert!((m.std_error() - (5.0f64 / 3.0).sqrt() / 2.0).abs() < 1e-12);
        assert!((m.variance() - 5.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn isotonic_pools_violators() {
        let out = isotonic(&[1.0, 3.0, 2.0, 4.0], &[1.0; 4]);
        assert_eq!(out, vec![1.0, 2.5, 2.5, 4.0]);
        let sorted = [0.0, 1.0, 1.0, 2.0];
        assert_eq!(isotonic(&sorted, &[1.0; 4]), sorted.to_vec());
    }

    #[test]
    fn power_tail_recovers_exponent() {
        let ns: Vec<f64> = (100..200).map(|n| n as f64).collect();
        let ts: Vec<f64> = ns.iter().map(|n| 3.0 * n.powf(-1.5)).collect();
        let fit = fit_power_tail(&ns, &ts, 199.0).unwrap();
        assert!((fit.exponent - 1.5).abs() < 1e-10);
        assert!((fit.prefactor - 3.0).abs() < 1e-8);
    }

    #[test]
    fn merge_rejects_overlap_and_structural() {
        let s = Streams::new(1);
        let mut m = Moments::default();
        m.push(1.0);
        m.push(0.0);
        let a = MCEstimate::from_moments(m, &s, 10);
        assert!(a.merge(&a).is_err());
        assert!(a.merge(&MCEstimate::exact(1.0)).is_err());
        let b = MCEstimate::from_moments(m, &s.offset(10), 10);
        let ab = a.merge(&b).unwrap();
        assert_eq!(ab.samples, 4);
        assert_eq!(ab.streams, StreamRange { start: 0, end: 20 });
    }

    fn estimate_from(hs: &[(f64, f64)], streams: Streams) -> MCEstimate {
        let mut m = Moments::default();
        for &(w, h) in hs {
            m.push_weighted(w, h);
        }
        MCEstimate::weighted(m, &streams, hs.len() as u64)
    }

    proptest! {
        #[test]
        fn merge_is_commutative_and_associative(
            a in prop::collection::vec((0.0f64..4.0, -3.0f64..3.0), 2..20),
            b in prop::collection::vec((0.0f64..4.0, -3.0f64..3.0), 2..20),
            c in prop::collection::vec((0.0f64..4.0, -3.0f64..3.0), 2..20),
        ) {
            let s = Streams::new(9);
            let ea = estimate_from(&a, s);
            let eb = estimate_from(&b, s.offset(100));
            let ec = estimate_from(&c, s.offset(200));
            let ab = ea.merge(&eb).unwrap();
            let ba = eb.merge(&ea).unwrap();
            prop_assert_eq!(&ab, &ba);
            let left = ab.merge(&ec).unwrap();
            let right = ea.merge(&eb.merge(&ec).unwrap()).unwrap();
            prop_assert_eq!(left.moments.count, right.moments.count);
            let close = |x: f64, y: f64| (x - y).abs() <= 1e-12 * (1.0 + x.abs().max(y.abs()));
            prop_assert!(close(left.moments.sum_w, right.moments.sum_w));
            prop_assert!(close(left.moments.sum_wh, right.moments.sum_wh));
            prop_assert!(close(left.moments.sum_w2h2, right.moments.sum_w2h2));
            prop_assert!(close(left.value, right.value));
            // pooled sample equals merged sample
            let all: Vec<_> = a.iter().chain(&b).chain(&c).copied().collect();
            let pooled = estimate_from(&all, s);
            prop_assert!(close(pooled.value, left.value));
            prop_assert!(close(pooled.std_error, left.std_error));
        }

        #[test]
        fn isotonic_output_is_monotone(v in prop::collection::vec(-10.0f64..10.0, 1..40)) {
            let w = vec![1.0; v.len()];
            let out = isotonic(&v, &w);
            prop_assert!(out.windows(2).all(|p| p[0] <= p[1] + 1e-12));
            let (s1, s2): (f64, f64) = (v.iter().sum(), out.iter().sum());
            prop_assert!((s1 - s2).abs() < 1e-9);
        }
    }
}
