//! The constant `Θ = Σ_j Θ(j)` with
//! `Θ(j) = Σ_k P(Z_j = k, τ_j = j) E⁺[1 - F_{0,∞}(0)^k]`.
//!
//! The factor `E⁺[1 - F_{0,∞}(0)^k]` is shared by every `j`; it is
//! estimated once under `P⁺` (weights `Û(S_m) I{L_m ≥ 0}`) at a finite
//! horizon `m` chosen by doubling. `P(Z_j = k, τ_j = j)` is computed exactly
//! given the environment for linear-fractional families and by population
//! simulation otherwise.

use serde::{Deserialize, Serialize};

use super::survival::QuenchedWalk;
use crate::bpre::{power_complement, simulate_population};
use crate::env::{EnvironmentModel, Family};
use crate::error::{Error, Result};
use crate::rng::{run_paths, Merge, Streams};
use crate::stats::{fit_power_tail, MCEstimate, Moments, PowerTail, WeightedCross};
use crate::walk::{RenewalKind, RenewalTable};

/// Doubling schedule for the horizon `m` approximating `F_{0,∞}`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MPolicy {
    pub m_start: usize,
    pub m_max: usize,
    /// Stop doubling once no `E⁺[1 - F_{0,m}(0)^k]` moves by more than this.
    pub tol: f64,
}

impl Default for MPolicy {
    fn default() -> Self {
        MPolicy {
            m_start: 16,
            m_max: 1024,
            tol: 1e-3,
        }
    }
}

impl MPolicy {
    pub fn checkpoints(&self) -> Result<Vec<usize>> {
        if self.m_start == 0 || self.m_max < self.m_start || !(self.tol > 0.0) {
            return Err(Error::Domain(format!("invalid m policy {self:?}")));
        }
        let mut out = vec![self.m_start];
        while *out.last().expect("nonempty") * 2 <= self.m_max {
            out.push(out.last().expect("nonempty") * 2);
        }
        Ok(out)
    }
}

/// `E⁺[1 - F_{0,m}(0)^k]` for `k = 1..=K` at each checkpoint `m`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlusFactor {
    pub k_max: usize,
    pub checkpoints: Vec<usize>,
    /// `values[c][k-1]` at checkpoint `c`.
    pub values: Vec<Vec<f64>>,
    /// Raw mean weight per checkpoint; `≈ 1` by harmonicity of `U`.
    pub mean_weight: Vec<MCEstimate>,
    /// Selected horizon.
    pub m: usize,
    /// Largest change over `k` between the selected and the previous
    /// checkpoint.
    pub bracket: f64,
    pub converged: bool,
    pub stats: WeightedCross,
    pub extended: u64,
    pub paths: u64,
    pub seed: u64,
    #[serde(skip)]
    streams: Option<Streams>,
}

impl PlusFactor {
    /// `E⁺[1 - F_{0,m}(0)^k]` at the selected horizon.
    pub fn estimate(&self, k: usize) -> MCEstimate {
        let streams = self.streams.unwrap_or(Streams::new(self.seed));
        MCEstimate::weighted(self.stats.marginal(k - 1), &streams, self.paths)
    }

    /// `(Σ_k c_k E⁺[...], standard error)`, with `c` indexed from `k = 1`.
    pub fn combination(&self, c: &[f64]) -> (f64, f64) {
        self.stats.combination(c)
    }
}

struct PlusAcc {
    cross: Vec<WeightedCross>,
    weights: Vec<Moments>,
    extended: u64,
}

impl Merge for PlusAcc {
    fn merge(&mut self, later: Self) {
        self.cross.merge(later.cross);
        self.weights.merge(later.weights);
        self.extended += later.extended;
    }
}

pub fn estimate_plus_factor(
    model: &EnvironmentModel,
    u_table: &RenewalTable,
    k_max: usize,
    policy: &MPolicy,
    paths: u64,
    streams: &Streams,
    workers: usize,
) -> Result<PlusFactor> {
    if u_table.kind != RenewalKind::U {
        return Err(Error::Domain("the P⁺ weights need a U table".into()));
    }
    if k_max == 0 || paths < 2 {
        return Err(Error::Domain("need K >= 1 and at least two paths".into()));
    }
    let cps = policy.checkpoints()?;
    let m_max = *cps.last().expect("nonempty");
    let sampler = model.sampler();
    let acc = run_paths(
        streams,
        paths,
        workers,
        || PlusAcc {
            cross: vec![WeightedCross::new(k_max); cps.len()],
            weights: vec![Moments::default(); cps.len()],
            extended: 0,
        },
        |acc, rng, _| {
            let mut walk = QuenchedWalk::new(model);
            let mut h = vec![0.0; k_max];
            let mut c = 0;
            for m in 1..=m_max {
                walk.step(sampler.draw(rng));
                if walk.s < 0.0 {
                    for i in c..cps.len() {
                        acc.cross[i].push_zero_weight(1);
                        acc.weights[i].push(0.0);
                    }
                    return;
                }
                if m == cps[c] {
                    let (w, ext) = u_table.eval(walk.s);
                    acc.extended += ext as u64;
                    let surv = walk.survival();
                    for (k, v) in h.iter_mut().enumerate() {
                        *v = power_complement(surv, k as u64 + 1);
                    }
                    acc.cross[c].push(w, &h);
                    acc.weights[c].push(w);
                    c += 1;
                }
            }
        },
    );
    if acc.cross.iter().any(|c| c.sum_w == 0.0) {
        return Err(Error::Budget("no path stayed nonnegative up to a checkpoint".into()));
    }
    let values: Vec<Vec<f64>> = acc
        .cross
        .iter()
        .map(|c| (0..k_max).map(|k| c.value(k)).collect())
        .collect();
    let change = |c: usize| -> f64 {
        (0..k_max)
            .map(|k| (values[c][k] - values[c - 1][k]).abs())
            .fold(0.0, f64::max)
    };
    let selected = (1..cps.len()).find(|&c| change(c) < policy.tol);
    let (sel, converged) = match selected {
        Some(c) => (c, true),
        None => (cps.len() - 1, false),
    };
    let bracket = if sel == 0 { f64::INFINITY } else { change(sel) };
    Ok(PlusFactor {
        k_max,
        checkpoints: cps.clone(),
        mean_weight: acc
            .weights
            .iter()
            .map(|w| MCEstimate::from_moments(*w, streams, paths))
            .collect(),
        values,
        m: cps[sel],
        bracket,
        converged,
        stats: acc.cross[sel].clone(),
        extended: acc.extended,
        paths,
        seed: streams.seed,
        streams: Some(*streams),
    })
}

/// One term `Θ̂(j)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThetaTerm {
    pub j: usize,
    pub value: MCEstimate,
    /// Standard error from the environment paths of this `j` alone.
    pub env_se: f64,
    /// Standard error inherited from the shared `E⁺` factor.
    pub plus_se: f64,
    /// `P̂(τ_j = j)`.
    pub p_tau: MCEstimate,
    /// `P̂(Z_j > K, τ_j = j)`: mass left out of the `k ≤ K` sum.
    pub tail_mass: MCEstimate,
    /// `P̂(Z_j = k, τ_j = j)` for `k = 1..=K`.
    pub p_k: Vec<f64>,
    pub capped: u64,
}

struct TermAcc {
    h: Moments,
    tau: Moments,
    tail: Moments,
    p_k: Vec<f64>,
    capped: u64,
}

impl Merge for TermAcc {
    fn merge(&mut self, later: Self) {
        self.h.merge(later.h);
        self.tau.merge(later.tau);
        self.tail.merge(later.tail);
        for (a, b) in self.p_k.iter_mut().zip(later.p_k) {
            *a += b;
        }
        self.capped += later.capped;
    }
}

/// `Θ̂(j)` from `paths` environment paths of length `j`, combined with the
/// shared factor `plus`. `cap` bounds populations when `Z_j` has to be
/// simulated.
pub fn estimate_theta_j(
    model: &EnvironmentModel,
    j: usize,
    plus: &PlusFactor,
    paths: u64,
    cap: u64,
    streams: &Streams,
    workers: usize,
) -> Result<ThetaTerm> {
    let k_max = plus.k_max;
    if j == 0 {
        // Z_0 = 1 and τ_0 = 0
        let value = plus.estimate(1);
        let mut p_k = vec![0.0; k_max];
        p_k[0] = 1.0;
        return Ok(ThetaTerm {
            j,
            env_se: 0.0,
            plus_se: value.std_error,
            value,
            p_tau: MCEstimate::exact(1.0),
            tail_mass: MCEstimate::exact(0.0),
            p_k,
            capped: 0,
        });
    }
    if paths < 2 {
        return Err(Error::Domain("need at least two paths".into()));
    }
    let e_plus: Vec<f64> = (1..=k_max).map(|k| plus.stats.value(k - 1)).collect();
    let sampler = model.sampler();
    let exact = model.family != Family::Poisson;
    let acc = run_paths(
        streams,
        paths,
        workers,
        || TermAcc {
            h: Moments::default(),
            tau: Moments::default(),
            tail: Moments::default(),
            p_k: vec![0.0; k_max],
            capped: 0,
        },
        |acc, rng, _| {
            let mut walk = QuenchedWalk::new(model);
            let mut env = Vec::new();
            let mut prev_min = 0.0f64;
            for step in 0..j {
                if step > 0 {
                    prev_min = prev_min.min(walk.s);
                }
                let law = sampler.draw(rng);
                if !exact {
                    env.push(law);
                }
                walk.step(law);
            }
            // τ_j = j: S_j strictly below S_0, ..., S_{j-1}
            if !(walk.s < prev_min) {
                acc.h.push(0.0);
                acc.tau.push(0.0);
                acc.tail.push(0.0);
                return;
            }
            acc.tau.push(1.0);
            let mut h = 0.0;
            if exact {
                let law = walk.composed_law().expect("linear-fractional environment");
                for k in 1..=k_max {
                    let p = law.pmf(k as u64);
                    acc.p_k[k - 1] += p;
                    h += p * e_plus[k - 1];
                }
                acc.tail.push(law.tail_mass(k_max as u64));
            } else {
                let traj = simulate_population(&env, 1, rng, cap).expect("valid population arguments");
                acc.capped += traj.capped_at.is_some() as u64;
                let z = if traj.capped_at.is_some() { u64::MAX } else { traj.sizes[j] };
                if z >= 1 && z <= k_max as u64 {
                    acc.p_k[z as usize - 1] += 1.0;
                    h = e_plus[z as usize - 1];
                }
                acc.tail.push(if z > k_max as u64 { 1.0 } else { 0.0 });
            }
            acc.h.push(h);
        },
    );
    let n = paths as f64;
    let p_k: Vec<f64> = acc.p_k.iter().map(|s| s / n).collect();
    let env_se = acc.h.std_error();
    let (v, plus_se) = plus.combination(&p_k);
    debug_assert!((v - acc.h.value()).abs() <= 1e-9 * v.abs().max(1e-300) + 1e-15);
    let like = MCEstimate::from_moments(acc.h, streams, paths);
    Ok(ThetaTerm {
        j,
        value: MCEstimate::derived(acc.h.value(), env_se.hypot(plus_se), &like),
        env_se,
        plus_se,
        p_tau: MCEstimate::from_moments(acc.tau, streams, paths),
        tail_mass: MCEstimate::from_moments(acc.tail, streams, paths),
        p_k,
        capped: acc.capped,
    })
}

/// Budgets and truncation for [`estimate_theta`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThetaBudget {
    pub j_max: usize,
    pub k_max: usize,
    pub m: MPolicy,
    pub plus_paths: u64,
    pub env_paths: u64,
    pub cap: u64,
}

impl Default for ThetaBudget {
    fn default() -> Self {
        ThetaBudget {
            j_max: 8,
            k_max: 32,
            m: MPolicy::default(),
            plus_paths: 1_000_000,
            env_paths: 1_000_000,
            cap: 1_000_000,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThetaReport {
    pub budget: ThetaBudget,
    pub plus: PlusFactor,
    pub terms: Vec<ThetaTerm>,
    /// `Σ_{i≤j} Θ̂(i)` for `j = 0..=J`.
    pub partial_sums: Vec<f64>,
    /// `Σ_{j≤J} Θ̂(j)`; the standard error accounts for the `E⁺` factor
    /// shared by all terms.
    pub value: MCEstimate,
    /// Power law fitted to `Θ̂(j)` over `j ∈ [4, J]`; diagnostic only.
    pub tail_fit: Option<PowerTail>,
    /// Extrapolated `Σ_{j>J} Θ̂(j)` from the fit.
    pub epsilon_j: Option<f64>,
    /// `value + epsilon_j`.
    pub tail_corrected: Option<f64>,
}

pub fn estimate_theta(
    model: &EnvironmentModel,
    u_table: &RenewalTable,
    budget: &ThetaBudget,
    streams: &Streams,
    workers: usize,
) -> Result<ThetaReport> {
    let plus = estimate_plus_factor(
        model,
        u_table,
        budget.k_max,
        &budget.m,
        budget.plus_paths,
        &streams.child(0),
        workers,
    )?;
    let terms: Vec<ThetaTerm> = (0..=budget.j_max)
        .map(|j| {
            estimate_theta_j(
                model,
                j,
                &plus,
                budget.env_paths,
                budget.cap,
                &streams.child(1 + j as u64),
                workers,
            )
        })
        .collect::<Result<_>>()?;

    let mut c = vec![0.0; budget.k_max];
    for t in &terms {
        for (a, p) in c.iter_mut().zip(&t.p_k) {
            *a += p;
        }
    }
    let (value, plus_se) = plus.combination(&c);
    let env_var: f64 = terms.iter().map(|t| t.env_se * t.env_se).sum();
    let mut partial = 0.0;
    let partial_sums = terms
        .iter()
        .map(|t| {
            partial += t.value.value;
            partial
        })
        .collect();

    let (js, vs): (Vec<f64>, Vec<f64>) = terms
        .iter()
        .filter(|t| t.j >= 4)
        .map(|t| (t.j as f64, t.value.value))
        .unzip();
    let tail_fit = if js.len() >= 2 {
        fit_power_tail(&js, &vs, budget.j_max as f64)
    } else {
        None
    };
    let epsilon_j = tail_fit.map(|f| f.tail_sum).filter(|t| t.is_finite());
    let like = plus.estimate(1);
    Ok(ThetaReport {
        budget: *budget,
        value: MCEstimate::derived(value, (env_var + plus_se * plus_se).sqrt(), &like),
        tail_corrected: epsilon_j.map(|e| value + e),
        plus,
        terms,
        partial_sums,
        tail_fit,
        epsilon_j,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stable::StableParams;
    use crate::walk::{estimate_u, geometric_grid};

    fn setup() -> (EnvironmentModel, RenewalTable) {
        let p = StableParams::new(1.5, 0.0, 1.0).unwrap();
        let grid = geometric_grid(0.01, 1e4, 8).unwrap();
        let u = estimate_u(&p, &grid, 4096, 20_000, &Streams::new(1), 1).unwrap();
        (EnvironmentModel::geometric(p).unwrap(), u)
    }

    #[test]
    fn checkpoints_double() {
        assert_eq!(MPolicy::default().checkpoints().unwrap(), vec![16, 32, 64, 128, 256, 512, 1024]);
        let bad = MPolicy { m_start: 0, ..MPolicy::default() };
        assert!(bad.checkpoints().is_err());
    }

    #[test]
    fn plus_factor_is_monotone_in_k() {
        let (model, u) = setup();
        let policy = MPolicy { m_start: 8, m_max: 64, tol: 1e-3 };
        let f = estimate_plus_factor(&model, &u, 6, &policy, 20_000, &Streams::new(2), 1).unwrap();
        for row in &f.values {
            assert!(row.windows(2).all(|w| w[1] >= w[0]));
            assert!(row.iter().all(|v| (0.0..=1.0).contains(v)));
        }
    }

    #[test]
    fn theta_terms_respect_structure() {
        let (model, u) = setup();
        let budget = ThetaBudget {
            j_max: 3,
            k_max: 8,
            m: MPolicy { m_start: 8, m_max: 32, tol: 1e-2 },
            plus_paths: 20_000,
            env_paths: 20_000,
            cap: 1_000_000,
        };
        let r = estimate_theta(&model, &u, &budget, &Streams::new(3), 1).unwrap();
        assert_eq!(r.terms[0].value.value, r.plus.estimate(1).value);
        assert!(r.partial_sums.windows(2).all(|w| w[1] >= w[0]));
        let total: f64 = r.terms.iter().map(|t| t.value.value).sum();
        assert!((total - r.value.value).abs() < 1e-12);
        for t in &r.terms {
            assert!(t.value.value <= t.p_tau.value + 3.0 * t.p_tau.std_error + 1e-12);
        }
    }
}
