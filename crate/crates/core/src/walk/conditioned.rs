//! h-transforms of the walk: `P⁺` weights `U(S_m) I{L_m ≥ 0}` and `P⁻`
//! weights `V(S_m) I{M_m < 0}`, plus the harmonicity identities behind
//! them.

use serde::{Deserialize, Serialize};

use super::renewal::{RenewalKind, RenewalTable};
use super::WalkPath;
use crate::error::{Error, Result};
use crate::rng::{run_paths, Merge, Streams};
use crate::stable::StableParams;
use crate::stats::{merged_se, MCEstimate, Moments};

/// Paths with their h-transform weights.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightedSample {
    pub paths: Vec<WalkPath>,
    pub weights: Vec<f64>,
    /// Number of weights that used the linear extension beyond the table.
    pub extended: u64,
}

impl WeightedSample {
    pub fn mean_weight(&self) -> f64 {
        self.weights.iter().sum::<f64>() / self.weights.len() as f64
    }

    /// Self-normalized `Σ w H / Σ w`.
    pub fn expectation<H: Fn(&WalkPath) -> f64>(&self, h: H) -> f64 {
        let (mut num, mut den) = (0.0, 0.0);
        for (p, &w) in self.paths.iter().zip(&self.weights) {
            if w > 0.0 {
                num += w * h(p);
                den += w;
            }
        }
        num / den
    }
}

fn require_kind(table: &RenewalTable, want_u: bool) -> Result<()> {
    let ok = matches!((table.kind, want_u), (RenewalKind::U, true) | (RenewalKind::V { .. }, false));
    if ok {
        Ok(())
    } else {
        Err(Error::Domain(format!("wrong table kind {:?}", table.kind)))
    }
}

/// Weight `Û(S_m) I{L_m ≥ 0}` for each of `paths` walks of length `m`.
pub fn simulate_plus(
    params: &StableParams,
    m: usize,
    u_table: &RenewalTable,
    paths: u64,
    streams: &Streams,
) -> Result<WeightedSample> {
    require_kind(u_table, true)?;
    weighted(params, m, paths, streams, |p| {
        if p.functionals().map(|f| f.min >= 0.0).unwrap_or(false) {
            u_table.eval(p.end())
        } else {
            (0.0, false)
        }
    })
}

/// Weight `V̂(S_m) I{M_m < 0}`.
pub fn simulate_minus(
    params: &StableParams,
    m: usize,
    v_table: &RenewalTable,
    paths: u64,
    streams: &Streams,
) -> Result<WeightedSample> {
    require_kind(v_table, false)?;
    weighted(params, m, paths, streams, |p| {
        if p.functionals().map(|f| f.max < 0.0).unwrap_or(false) {
            v_table.eval(-p.end())
        } else {
            (0.0, false)
        }
    })
}

fn weighted<W: Fn(&WalkPath) -> (f64, bool)>(
    params: &StableParams,
    m: usize,
    paths: u64,
    streams: &Streams,
    weight: W,
) -> Result<WeightedSample> {
    if m == 0 || paths == 0 {
        return Err(Error::Domain("need m >= 1 and at least one path".into()));
    }
    let sampler = params.sampler();
    let mut out = WeightedSample {
        paths: Vec::with_capacity(paths as usize),
        weights: Vec::with_capacity(paths as usize),
        extended: 0,
    };
    for i in 0..paths {
        let mut rng = streams.rng(i);
        let p = WalkPath::simulate(&sampler, m, &mut rng);
        let (w, ext) = weight(&p);
        out.extended += ext as u64;
        out.paths.push(p);
        out.weights.push(w);
    }
    if out.weights.iter().all(|&w| w == 0.0) {
        return Err(Error::Budget("every h-transform weight is zero".into()));
    }
    Ok(out)
}

/// `E⁺[H]` estimated by self-normalized weighting, with the raw mean weight.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlusEstimate {
    pub expectation: MCEstimate,
    pub mean_weight: MCEstimate,
    pub extended: u64,
}

#[derive(Default)]
struct PlusAcc {
    h: Moments,
    w: Moments,
    extended: u64,
}

impl Merge for PlusAcc {
    fn merge(&mut self, later: Self) {
        self.h.merge(later.h);
        self.w.merge(later.w);
        self.extended += later.extended;
    }
}

/// Streams `paths` walks of length `m`; `h` sees the increments of paths
/// with `L_m ≥ 0` only.
pub fn plus_expectation<H>(
    params: &StableParams,
    m: usize,
    u_table: &RenewalTable,
    paths: u64,
    streams: &Streams,
    workers: usize,
    h: H,
) -> Result<PlusEstimate>
where
    H: Fn(&[f64]) -> f64 + Sync,
{
    require_kind(u_table, true)?;
    if m == 0 || paths < 2 {
        return Err(Error::Domain("need m >= 1 and at least two paths".into()));
    }
    let sampler = params.sampler();
    let acc = run_paths(streams, paths, workers, PlusAcc::default, |acc, rng, _| {
        let mut xs = Vec::with_capacity(m);
        let mut s = 0.0;
        for _ in 0..m {
            let x = sampler.sample(rng);
            s += x;
            if s < 0.0 {
                acc.w.push(0.0);
                acc.h.push_weighted(0.0, 0.0);
                return;
            }
            xs.push(x);
        }
        let (w, ext) = u_table.eval(s);
        acc.extended += ext as u64;
        acc.w.push(w);
        acc.h.push_weighted(w, h(&xs));
    });
    if acc.w.sum_wh == 0.0 {
        return Err(Error::Budget("every h-transform weight is zero".into()));
    }
    Ok(PlusEstimate {
        expectation: MCEstimate::weighted(acc.h, streams, paths),
        mean_weight: MCEstimate::from_moments(acc.w, streams, paths),
        extended: acc.extended,
    })
}

/// One harmonicity comparison `E[h(x + X); constraint] = h(x)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HarmonicityCheck {
    pub x: f64,
    pub lhs: MCEstimate,
    pub rhs: f64,
    pub rhs_se: f64,
    pub diff: f64,
    pub merged_se: f64,
    pub extended: u64,
}

impl HarmonicityCheck {
    pub fn within(&self, k: f64) -> bool {
        self.diff.abs() <= k * self.merged_se
    }
}

#[derive(Default)]
struct HarmAcc {
    m: Moments,
    extended: u64,
}

impl Merge for HarmAcc {
    fn merge(&mut self, later: Self) {
        self.m.merge(later.m);
        self.extended += later.extended;
    }
}

fn harmonicity<F>(
    params: &StableParams,
    x: f64,
    rhs: (f64, f64),
    draws: u64,
    streams: &Streams,
    workers: usize,
    f: F,
) -> Result<HarmonicityCheck>
where
    F: Fn(f64) -> (f64, bool) + Sync,
{
    if draws < 2 {
        return Err(Error::Domain("need at least two draws".into()));
    }
    let sampler = params.sampler();
    let acc = run_paths(streams, draws, workers, HarmAcc::default, |acc, rng, _| {
        let (v, ext) = f(x + sampler.sample(rng));
        acc.extended += ext as u64;
        acc.m.push(v);
    });
    let lhs = MCEstimate::from_moments(acc.m, streams, draws);
    Ok(HarmonicityCheck {
        x,
        diff: lhs.value - rhs.0,
        merged_se: merged_se(lhs.std_error, rhs.1),
        lhs,
        rhs: rhs.0,
        rhs_se: rhs.1,
        extended: acc.extended,
    })
}

/// `E[Û(x + X); x + X ≥ 0]` against `Û(x)` for `x ≥ 0`.
pub fn harmonicity_u(
    params: &StableParams,
    u_table: &RenewalTable,
    x: f64,
    draws: u64,
    streams: &Streams,
    workers: usize,
) -> Result<HarmonicityCheck> {
    require_kind(u_table, true)?;
    if !(x >= 0.0) {
        return Err(Error::Domain("U harmonicity is checked at x >= 0".into()));
    }
    let rhs = (u_table.eval(x).0, u_table.std_error_at(x));
    harmonicity(params, x, rhs, draws, streams, workers, |y| {
        if y >= 0.0 {
            u_table.eval(y)
        } else {
            (0.0, false)
        }
    })
}

/// `E[V̂(x + X); x + X < 0]` against `V̂(x)` for `x < 0`. At `x = 0` the
/// convention `V(0) = 0` breaks the identity, so it is rejected.
pub fn harmonicity_v(
    params: &StableParams,
    v_table: &RenewalTable,
    x: f64,
    draws: u64,
    streams: &Streams,
    workers: usize,
) -> Result<HarmonicityCheck> {
    require_kind(v_table, false)?;
    if !(x < 0.0) {
        return Err(Error::Domain("V harmonicity is checked at x < 0".into()));
    }
    let rhs = (v_table.eval(-x).0, v_table.std_error_at(-x));
    harmonicity(params, x, rhs, draws, streams, workers, |y| {
        if y < 0.0 {
            v_table.eval(-y)
        } else {
            (0.0, false)
        }
    })
}
