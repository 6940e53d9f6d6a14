//! Ratio-stabilization checks of the asymptotics
//! `P(Z_n > 0; S_n ≤ φ(n)) ∼ Θ g(0) b_n ∫_0^{φ(n)} V(-z) dz` and
//! `P(S_n ≤ x, L_n ≥ 0) ∼ g(0) b_n ∫_0^x V(-w) dw`.

use serde::{Deserialize, Serialize};

use super::survival::SurvivalPass;
use crate::env::EnvironmentModel;
use crate::error::{Error, Result};
use crate::rng::Streams;
use crate::stable::StableParams;
use crate::stats::{merged_se, MCEstimate};
use crate::walk::{prob_small_deviation_multi, EventEstimate, RenewalKind, RenewalTable};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RatioRow {
    pub n: usize,
    /// Upper limit `φ(n)` or `x` of the integral.
    pub x: f64,
    pub numerator: MCEstimate,
    pub integral_v: f64,
    pub integral_v_se: f64,
    /// `g(0) b_n ∫_0^x V̂(-z) dz`.
    pub normalizer: f64,
    pub ratio: f64,
    pub ratio_se: f64,
}

impl RatioRow {
    pub fn ci(&self, z: f64) -> (f64, f64) {
        (self.ratio - z * self.ratio_se, self.ratio + z * self.ratio_se)
    }

    pub fn ci_excludes_zero(&self, z: f64) -> bool {
        self.ci(z).0 > 0.0
    }

    fn relative_integral_se(&self) -> f64 {
        self.integral_v_se / self.integral_v
    }
}

fn ratio_row(params: &StableParams, v: &RenewalTable, n: usize, x: f64, numerator: MCEstimate) -> Result<RatioRow> {
    let g0 = params.density_at_zero()?;
    let (_, b) = params.normalizers(n as u64)?;
    let integral_v = v.integral_v(x)?;
    let integral_v_se = v.integral_v_se(x)?;
    let normalizer = g0 * b * integral_v;
    let ratio = numerator.value / normalizer;
    let rel = integral_v_se / integral_v;
    Ok(RatioRow {
        n,
        x,
        ratio_se: (numerator.std_error / normalizer).hypot(ratio * rel),
        ratio,
        numerator,
        integral_v,
        integral_v_se,
        normalizer,
    })
}

fn require_v(v: &RenewalTable) -> Result<()> {
    if matches!(v.kind, RenewalKind::V { .. }) {
        Ok(())
    } else {
        Err(Error::Domain("the normalizer needs a V table".into()))
    }
}

fn flatness(rows: &[RatioRow]) -> f64 {
    let max = rows.iter().map(|r| r.ratio).fold(f64::NEG_INFINITY, f64::max);
    let min = rows.iter().map(|r| r.ratio).fold(f64::INFINITY, f64::min);
    max / min
}

fn consecutive_variation(rows: &[RatioRow]) -> f64 {
    rows.windows(2)
        .map(|w| (w[1].ratio / w[0].ratio - 1.0).abs())
        .fold(0.0, f64::max)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TheoremReport {
    pub rows: Vec<RatioRow>,
    /// `max_n r_n / min_n r_n`.
    pub flatness: f64,
    pub consecutive_variation: f64,
    /// Mean of the `r_n`; the standard error uses the covariance of the
    /// joint estimates, which share environment paths.
    pub mean_ratio: f64,
    pub mean_ratio_se: f64,
    pub theta: Option<MCEstimate>,
    /// `r̄ - Θ̂`.
    pub diff: Option<f64>,
    pub merged_se: Option<f64>,
}

impl TheoremReport {
    /// `|r̄ - Θ̂| < k` merged standard errors.
    pub fn agrees_with_theta(&self, k: f64) -> Option<bool> {
        Some(self.diff?.abs() < k * self.merged_se?)
    }
}

/// `r_n = P̂(Z_n > 0; S_n ≤ φ(n)) / (g(0) b_n ∫_0^{φ(n)} V̂(-z) dz)` for the
/// `n` of `pass`, compared with `theta` when given.
pub fn verify_theorem(
    model: &EnvironmentModel,
    pass: &SurvivalPass,
    v_table: &RenewalTable,
    theta: Option<&MCEstimate>,
) -> Result<TheoremReport> {
    require_v(v_table)?;
    let rows: Vec<RatioRow> = pass
        .ns
        .iter()
        .enumerate()
        .map(|(i, &n)| ratio_row(&model.stable, v_table, n, pass.phi[i], pass.joint(i)))
        .collect::<Result<_>>()?;
    let k = rows.len() as f64;
    let mean_ratio = rows.iter().map(|r| r.ratio).sum::<f64>() / k;
    let mut var = 0.0;
    for (i, ri) in rows.iter().enumerate() {
        for (j, rj) in rows.iter().enumerate() {
            var += pass.joint_cov(i, j) / (ri.normalizer * rj.normalizer);
        }
    }
    var /= k * k;
    // the V table is common to every row, so its errors add coherently
    let table = rows.iter().map(|r| r.ratio * r.relative_integral_se()).sum::<f64>() / k;
    let mean_ratio_se = (var.max(0.0) + table * table).sqrt();
    let (diff, merged) = match theta {
        Some(t) => (Some(mean_ratio - t.value), Some(merged_se(mean_ratio_se, t.std_error))),
        None => (None, None),
    };
    Ok(TheoremReport {
        flatness: flatness(&rows),
        consecutive_variation: consecutive_variation(&rows),
        rows,
        mean_ratio,
        mean_ratio_se,
        theta: theta.cloned(),
        diff,
        merged_se: merged,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorollaryReport {
    pub rows: Vec<RatioRow>,
    pub events: Vec<EventEstimate>,
    /// `max_i |r_{i+1}/r_i - 1|` over consecutive `n`.
    pub consecutive_variation: f64,
    pub flatness: f64,
}

/// `P̂(S_n ≤ x_n, L_n ≥ 0) / (g(0) b_n ∫_0^{x_n} V̂(-w) dw)` with
/// `x_n = scale · n^eta`, all `n` on one path set.
#[allow(clippy::too_many_arguments)]
pub fn small_deviation_ratio(
    params: &StableParams,
    ns: &[usize],
    scale: f64,
    eta: f64,
    v_table: &RenewalTable,
    paths: u64,
    streams: &Streams,
    workers: usize,
) -> Result<CorollaryReport> {
    require_v(v_table)?;
    if !(scale > 0.0) {
        return Err(Error::Domain(format!("need a positive scale, got {scale}")));
    }
    let queries: Vec<(usize, f64)> = ns.iter().map(|&n| (n, scale * (n as f64).powf(eta))).collect();
    let events = prob_small_deviation_multi(params, &queries, paths, streams, workers)?;
    let rows: Vec<RatioRow> = queries
        .iter()
        .zip(&events)
        .map(|(&(n, x), e)| ratio_row(params, v_table, n, x, e.estimate.clone()))
        .collect::<Result<_>>()?;
    Ok(CorollaryReport {
        consecutive_variation: consecutive_variation(&rows),
        flatness: flatness(&rows),
        rows,
        events,
    })
}
