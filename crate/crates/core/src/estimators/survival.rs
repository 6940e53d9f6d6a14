//! Rao-Blackwellized survival estimators: the quenched probability
//! `1 - F_{0,n}(0)` replaces the survival indicator on every environment
//! path.

use serde::{Deserialize, Serialize};

use super::phi::PhiSpec;
use crate::bpre::{lf_kappa, simulate_population, survival_prob_quenched, LfSurvival};
use crate::env::{EnvironmentModel, Family, OffspringLaw};
use crate::error::{Error, Result};
use crate::rng::{run_paths, Merge, Streams};
use crate::stats::{merged_se, CoMoments, MCEstimate, Moments};

/// The walk and quenched survival probability of one environment path.
pub(crate) struct QuenchedWalk {
    tracker: Option<LfSurvival>,
    laws: Vec<OffspringLaw>,
    pub s: f64,
    pub min: f64,
    pub n: usize,
}

impl QuenchedWalk {
    pub fn new(model: &EnvironmentModel) -> Self {
        QuenchedWalk {
            tracker: (model.family != Family::Poisson).then(LfSurvival::new),
            laws: Vec::new(),
            s: 0.0,
            min: f64::INFINITY,
            n: 0,
        }
    }

    #[inline]
    pub fn step(&mut self, law: OffspringLaw) {
        let x = law.log_mean();
        self.s += x;
        self.min = self.min.min(self.s);
        self.n += 1;
        match &mut self.tracker {
            Some(t) => {
                t.push(x, lf_kappa(&law));
            }
            None => self.laws.push(law),
        }
    }

    /// `1 - F_{0,n}(0)`.
    pub fn survival(&self) -> f64 {
        match &self.tracker {
            Some(t) => t.survival(),
            None => survival_prob_quenched(&self.laws, self.n).expect("in range"),
        }
    }

    /// The composed law of `Z_n` given the environment, for
    /// linear-fractional environments.
    pub fn composed_law(&self) -> Option<OffspringLaw> {
        self.tracker.map(|t| OffspringLaw::LinearFractional {
            log_mean: t.walk(),
            kappa: t.kappa_sum(),
        })
    }
}

fn check_ns(ns: &[usize]) -> Result<()> {
    if ns.is_empty() || ns.contains(&0) || ns.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Domain("n list must be nonempty, strictly increasing and >= 1".into()));
    }
    Ok(())
}

/// Per `n`: `(1-F_{0,n}(0)) I{S_n ≤ φ(n)}`, `1-F_{0,n}(0)` and `I{L_n ≥ 0}`
/// on one set of environment paths.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SurvivalPass {
    pub ns: Vec<usize>,
    pub phi: Vec<f64>,
    pub paths: u64,
    pub moments: CoMoments,
    #[serde(skip)]
    streams: Option<Streams>,
}

impl SurvivalPass {
    fn estimate(&self, component: usize) -> MCEstimate {
        let streams = self.streams.unwrap_or(Streams::new(0));
        MCEstimate::from_moments(self.moments.marginal(component), &streams, self.paths)
    }

    pub fn joint(&self, i: usize) -> MCEstimate {
        self.estimate(3 * i)
    }

    pub fn survival(&self, i: usize) -> MCEstimate {
        self.estimate(3 * i + 1)
    }

    pub fn stay_positive(&self, i: usize) -> MCEstimate {
        self.estimate(3 * i + 2)
    }

    /// Covariance of the joint estimates at `n_i` and `n_j`.
    pub fn joint_cov(&self, i: usize, j: usize) -> f64 {
        self.moments.mean_cov(3 * i, 3 * j)
    }
}

pub fn survival_pass(
    model: &EnvironmentModel,
    ns: &[usize],
    phi: &PhiSpec,
    paths: u64,
    streams: &Streams,
    workers: usize,
) -> Result<SurvivalPass> {
    check_ns(ns)?;
    phi.validate(model.stable.alpha())?;
    if paths < 2 {
        return Err(Error::Domain("need at least two paths".into()));
    }
    let phis: Vec<f64> = ns.iter().map(|&n| phi.eval(n)).collect::<Result<_>>()?;
    let n_max = *ns.last().expect("nonempty");
    let sampler = model.sampler();
    let k = ns.len();
    let moments = run_paths(streams, paths, workers, || CoMoments::new(3 * k), |acc, rng, _| {
        let mut walk = QuenchedWalk::new(model);
        let mut h = vec![0.0; 3 * k];
        let mut next = 0;
        for n in 1..=n_max {
            walk.step(sampler.draw(rng));
            if n == ns[next] {
                let surv = walk.survival();
                h[3 * next] = if walk.s <= phis[next] { surv } else { 0.0 };
                h[3 * next + 1] = surv;
                h[3 * next + 2] = if walk.min >= 0.0 { 1.0 } else { 0.0 };
                next += 1;
            }
        }
        acc.push(&h);
    });
    Ok(SurvivalPass {
        ns: ns.to_vec(),
        phi: phis,
        paths,
        moments,
        streams: Some(*streams),
    })
}

/// `P(Z_n > 0; S_n ≤ φ(n))` as `E[(1 - F_{0,n}(0)) I{S_n ≤ φ(n)}]`.
pub fn joint_probability(
    model: &EnvironmentModel,
    n: usize,
    phi: &PhiSpec,
    paths: u64,
    streams: &Streams,
    workers: usize,
) -> Result<MCEstimate> {
    Ok(survival_pass(model, &[n], phi, paths, streams, workers)?.joint(0))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SurvivalRow {
    pub n: usize,
    pub survival: MCEstimate,
    pub stay_positive: MCEstimate,
    pub ratio: f64,
    pub ratio_se: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SurvivalReport {
    pub rows: Vec<SurvivalRow>,
    /// `max_n r_n / min_n r_n - 1`.
    pub flatness: f64,
}

/// Delta-method standard error of `a/b` from the covariance of the means.
fn ratio_se(a: f64, b: f64, var_a: f64, var_b: f64, cov: f64) -> f64 {
    let r = a / b;
    ((var_a - 2.0 * r * cov + r * r * var_b).max(0.0)).sqrt() / b
}

/// `r_n = P(Z_n > 0) / P(L_n ≥ 0)` from a survival pass.
pub fn verify_survival(pass: &SurvivalPass) -> SurvivalReport {
    let rows: Vec<SurvivalRow> = pass
        .ns
        .iter()
        .enumerate()
        .map(|(i, &n)| {
            let s = pass.survival(i);
            let l = pass.stay_positive(i);
            let c = &pass.moments;
            let (a, b) = (3 * i + 1, 3 * i + 2);
            SurvivalRow {
                n,
                ratio: s.value / l.value,
                ratio_se: ratio_se(s.value, l.value, c.mean_cov(a, a), c.mean_cov(b, b), c.mean_cov(a, b)),
                survival: s,
                stay_positive: l,
            }
        })
        .collect();
    let max = rows.iter().map(|r| r.ratio).fold(f64::NEG_INFINITY, f64::max);
    let min = rows.iter().map(|r| r.ratio).fold(f64::INFINITY, f64::min);
    SurvivalReport {
        rows,
        flatness: max / min - 1.0,
    }
}

/// Direct population simulation against the Rao-Blackwellized estimator of
/// `P(Z_n > 0; S_n ≤ φ(n))` on the same environments.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TowerReport {
    pub n: usize,
    pub phi: f64,
    pub direct: MCEstimate,
    pub rao_blackwell: MCEstimate,
    pub diff: f64,
    /// `sqrt(se_direct² + se_rb²)`.
    pub merged_se: f64,
    /// Standard error of the mean paired difference.
    pub paired_se: f64,
    pub var_direct: f64,
    pub var_rao_blackwell: f64,
    /// Trajectories stopped at the population cap (counted as surviving).
    pub capped: u64,
}

#[derive(Default)]
struct TowerAcc {
    direct: Moments,
    rb: Moments,
    diff: Moments,
    capped: u64,
}

impl Merge for TowerAcc {
    fn merge(&mut self, later: Self) {
        self.direct.merge(later.direct);
        self.rb.merge(later.rb);
        self.diff.merge(later.diff);
        self.capped += later.capped;
    }
}

pub fn tower_comparison(
    model: &EnvironmentModel,
    n: usize,
    phi: &PhiSpec,
    cap: u64,
    paths: u64,
    streams: &Streams,
    workers: usize,
) -> Result<TowerReport> {
    if n == 0 || paths < 2 {
        return Err(Error::Domain("need n >= 1 and at least two paths".into()));
    }
    phi.validate(model.stable.alpha())?;
    let x = phi.eval(n)?;
    let sampler = model.sampler();
    let acc = run_paths(streams, paths, workers, TowerAcc::default, |acc, rng, _| {
        let mut walk = QuenchedWalk::new(model);
        let mut env = Vec::with_capacity(n);
        for _ in 0..n {
            let law = sampler.draw(rng);
            env.push(law);
            walk.step(law);
        }
        let inside = walk.s <= x;
        let rb = if inside { walk.survival() } else { 0.0 };
        let traj = simulate_population(&env, 1, rng, cap).expect("valid population arguments");
        acc.capped += traj.capped_at.is_some() as u64;
        let direct = if inside && traj.survived(n) { 1.0 } else { 0.0 };
        acc.direct.push(direct);
        acc.rb.push(rb);
        acc.diff.push(direct - rb);
    });
    let direct = MCEstimate::from_moments(acc.direct, streams, paths);
    let rao_blackwell = MCEstimate::from_moments(acc.rb, streams, paths);
    Ok(TowerReport {
        n,
        phi: x,
        diff: direct.value - rao_blackwell.value,
        merged_se: merged_se(direct.std_error, rao_blackwell.std_error),
        paired_se: acc.diff.std_error(),
        var_direct: acc.direct.variance(),
        var_rao_blackwell: acc.rb.variance(),
        capped: acc.capped,
        direct,
        rao_blackwell,
    })
}

/// `E[H_n; S_n ≤ φ(n), L_n ≥ 0] / P(S_n ≤ φ(n), L_n ≥ 0)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConditionedRatio {
    pub n: usize,
    pub estimate: MCEstimate,
    pub denominator_hits: u64,
    pub needs_larger_budget: bool,
}

/// [`conditioned_ratio_with`] for `H_n = 1 - F_{0,n}(0)^k`.
pub fn conditioned_ratio(
    model: &EnvironmentModel,
    n: usize,
    phi: &PhiSpec,
    k: u64,
    paths: u64,
    streams: &Streams,
    workers: usize,
) -> Result<ConditionedRatio> {
    if k == 0 {
        return Err(Error::Domain("need k >= 1".into()));
    }
    conditioned_ratio_with(model, n, phi, paths, streams, workers, |s| {
        crate::bpre::power_complement(s, k)
    })
}

/// Ratio estimator on a common path set; `h` maps the quenched survival
/// probability `1 - F_{0,n}(0)` to `H_n`.
pub fn conditioned_ratio_with<H>(
    model: &EnvironmentModel,
    n: usize,
    phi: &PhiSpec,
    paths: u64,
    streams: &Streams,
    workers: usize,
    h: H,
) -> Result<ConditionedRatio>
where
    H: Fn(f64) -> f64 + Sync,
{
    if n == 0 || paths < 2 {
        return Err(Error::Domain("need n >= 1 and at least two paths".into()));
    }
    phi.validate(model.stable.alpha())?;
    let x = phi.eval(n)?;
    let sampler = model.sampler();
    let m = run_paths(streams, paths, workers, Moments::default, |acc, rng, _| {
        let mut walk = QuenchedWalk::new(model);
        for _ in 0..n {
            walk.step(sampler.draw(rng));
            if walk.s < 0.0 {
                acc.push_weighted(0.0, 0.0);
                return;
            }
        }
        if walk.s <= x {
            acc.push_weighted(1.0, h(walk.survival()));
        } else {
            acc.push_weighted(0.0, 0.0);
        }
    });
    let hits = m.sum_w as u64;
    Ok(ConditionedRatio {
        n,
        estimate: MCEstimate::weighted(m, streams, paths),
        denominator_hits: hits,
        needs_larger_budget: hits == 0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stable::StableParams;

    fn model() -> EnvironmentModel {
        EnvironmentModel::geometric(StableParams::new(1.5, 0.0, 1.0).unwrap()).unwrap()
    }

    #[test]
    fn pass_components_are_consistent() {
        let phi = PhiSpec::default_for(1.5);
        let p = survival_pass(&model(), &[4, 8, 16], &phi, 20_000, &Streams::new(1), 1).unwrap();
        for i in 0..3 {
            assert!(p.joint(i).value <= p.survival(i).value);
            assert!((0.0..=1.0).contains(&p.stay_positive(i).value));
        }
        // survival is monotone in n on common paths
        assert!(p.survival(0).value >= p.survival(1).value);
        assert!(p.survival(1).value >= p.survival(2).value);
        let rep = verify_survival(&p);
        assert!(rep.rows.iter().all(|r| r.ratio > 0.0 && r.ratio_se > 0.0));
        assert!(survival_pass(&model(), &[8, 4], &phi, 10, &Streams::new(1), 1).is_err());
    }

    #[test]
    fn unit_integrand_gives_ratio_one() {
        let phi = PhiSpec::default_for(1.5);
        let r = conditioned_ratio_with(&model(), 16, &phi, 20_000, &Streams::new(2), 1, |_| 1.0).unwrap();
        assert_eq!(r.estimate.value, 1.0);
        let r = conditioned_ratio(&model(), 16, &phi, 3, 20_000, &Streams::new(2), 1).unwrap();
        assert!((0.0..=1.0).contains(&r.estimate.value) && r.denominator_hits > 0);
    }

    #[test]
    fn poisson_and_geometric_paths_run() {
        let s = StableParams::new(1.5, 0.0, 1.0).unwrap();
        let pm = EnvironmentModel::new(Family::Poisson, s, crate::env::SecondaryRule::None).unwrap();
        let phi = PhiSpec::default_for(1.5);
        let p = survival_pass(&pm, &[4, 8], &phi, 2000, &Streams::new(3), 1).unwrap();
        assert!(p.survival(1).value > 0.0);
    }
}
