//! Monte Carlo renewal functions
//! `U(x) = I{x≥0} + Σ_n P(S_n ≥ -x, M_n < 0)` and
//! `V(-z) = I{z>0} + Σ_n P(S_n < z, L_n ≥ 0)` (or `L_n > 0`).
//!
//! One ensemble of paths of length `N_max` serves every grid point and
//! every series term. A path stops as soon as it leaves the constraint set
//! (`M_n ≥ 0` for `U`, `L_n < 0` for `V`), because no later term can count
//! it.

use std::io::{self, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{run_paths, Merge, StreamRange, Streams};
use crate::stable::StableParams;
use crate::stats::{fit_power_tail, isotonic, MCEstimate, Moments, PowerTail};

pub const CSV_SCHEMA: &str = "renewal-table/1";
pub const CSV_HEADER: &str = "abscissa,raw_estimate,std_error,isotonic_estimate,n_terms,paths";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "function", rename_all = "snake_case")]
pub enum RenewalKind {
    /// Abscissa `x ≥ 0`, value `U(x)`.
    U,
    /// Abscissa `z ≥ 0`, value `V(-z)`; `strict` uses `L_n > 0`.
    V { strict: bool },
}

/// `{0}` followed by geometrically spaced points from `lo` to `hi`.
pub fn geometric_grid(lo: f64, hi: f64, per_decade: usize) -> Result<Vec<f64>> {
    if !(lo > 0.0 && hi > lo && per_decade > 0) {
        return Err(Error::Domain(format!(
            "grid needs 0 < lo < hi and per_decade > 0, got ({lo}, {hi}, {per_decade})"
        )));
    }
    let steps = ((hi / lo).log10() * per_decade as f64 - 1e-9).ceil() as usize;
    let mut grid = vec![0.0];
    grid.extend((0..=steps).map(|i| {
        if i == steps {
            hi
        } else {
            lo * 10f64.powf(i as f64 / per_decade as f64)
        }
    }));
    Ok(grid)
}

/// Mean series term over `n ∈ [n_lo, n_hi]`, at the largest abscissa.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TermBin {
    pub n_lo: usize,
    pub n_hi: usize,
    pub mean_term: f64,
}

/// Truncation-tail heuristics. The fitted tail is an extrapolation, not a
/// bound.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TruncationDiagnostics {
    pub n_max: usize,
    /// Log2 bins of series terms at the largest abscissa.
    pub bins: Vec<TermBin>,
    /// Mean term over the last bin, at the largest abscissa.
    pub last_term: f64,
    /// Power law fitted over `n ∈ [N_max/8, N_max]` at the largest abscissa.
    pub tail_fit: Option<PowerTail>,
    /// Per grid point: extrapolated `Σ_{n>N_max}` of the fitted tail.
    pub tail_estimate: Vec<Option<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RenewalTable {
    pub kind: RenewalKind,
    pub grid: Vec<f64>,
    /// Raw per-point estimates. The moments are those of the series part
    /// only; `value` includes the indicator term.
    pub estimates: Vec<MCEstimate>,
    pub isotonic: Vec<f64>,
    pub n_max: usize,
    pub paths: u64,
    pub model_hash: String,
    pub seed: u64,
    pub streams: StreamRange,
    pub mean_steps: f64,
    pub truncation: TruncationDiagnostics,
}

/// JSON sidecar written next to the CSV table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TableSidecar {
    pub schema: String,
    pub kind: RenewalKind,
    pub model_hash: String,
    pub seed: u64,
    pub streams: StreamRange,
    pub n_max: usize,
    pub paths: u64,
    pub grid_points: usize,
    pub mean_steps: f64,
    pub truncation: TruncationDiagnostics,
    pub note: String,
}

struct Acc {
    h: Vec<Moments>,
    zero_paths: u64,
    terms: Vec<u64>,
    steps: u64,
    scratch: Vec<u64>,
}

impl Merge for Acc {
    fn merge(&mut self, later: Self) {
        self.h.merge(later.h);
        self.zero_paths += later.zero_paths;
        for (a, b) in self.terms.iter_mut().zip(later.terms) {
            *a += b;
        }
        self.steps += later.steps;
    }
}

#[inline]
fn log2_bin(n: usize) -> usize {
    (usize::BITS - 1 - n.leading_zeros()) as usize
}

fn validate_grid(grid: &[f64]) -> Result<()> {
    if grid.len() < 2 || grid[0] != 0.0 {
        return Err(Error::Domain("grid must start at 0 and have at least two points".into()));
    }
    if grid.windows(2).any(|w| !(w[1] > w[0])) || !grid.iter().all(|g| g.is_finite()) {
        return Err(Error::Domain("grid must be finite and strictly increasing".into()));
    }
    Ok(())
}

pub fn estimate_u(
    params: &StableParams,
    grid: &[f64],
    n_max: usize,
    paths: u64,
    streams: &Streams,
    workers: usize,
) -> Result<RenewalTable> {
    estimate(RenewalKind::U, params, grid, n_max, paths, streams, workers)
}

/// The table stores `V(-z)` on a grid of `z ≥ 0`.
pub fn estimate_v(
    params: &StableParams,
    grid: &[f64],
    n_max: usize,
    paths: u64,
    streams: &Streams,
    workers: usize,
    strict: bool,
) -> Result<RenewalTable> {
    estimate(RenewalKind::V { strict }, params, grid, n_max, paths, streams, workers)
}

fn estimate(
    kind: RenewalKind,
    params: &StableParams,
    grid: &[f64],
    n_max: usize,
    paths: u64,
    streams: &Streams,
    workers: usize,
) -> Result<RenewalTable> {
    validate_grid(grid)?;
    if n_max == 0 || paths < 2 {
        return Err(Error::Domain("need N_max >= 1 and at least two paths".into()));
    }
    let g = grid.len();
    let nbins = log2_bin(n_max) + 1;
    let sampler = params.sampler();

    let acc = run_paths(
        streams,
        paths,
        workers,
        || Acc {
            h: vec![Moments::default(); g],
            zero_paths: 0,
            terms: vec![0; nbins * g],
            steps: 0,
            scratch: vec![0; g],
        },
        |acc, rng, _| {
            acc.scratch.fill(0);
            let mut touched = false;
            let mut s = 0.0;
            for n in 1..=n_max {
                s += sampler.sample(rng);
                acc.steps += 1;
                let idx = match kind {
                    RenewalKind::U => {
                        if s >= 0.0 {
                            break;
                        }
                        // first x with x ≥ -S_n
                        grid.partition_point(|&x| x < -s)
                    }
                    RenewalKind::V { strict } => {
                        if s < 0.0 || (strict && s == 0.0) {
                            break;
                        }
                        // first z with z > S_n
                        grid.partition_point(|&z| z <= s)
                    }
                };
                if idx < g {
                    acc.scratch[idx] += 1;
                    acc.terms[log2_bin(n) * g + idx] += 1;
                    touched = true;
                }
            }
            if touched {
                let mut c = 0u64;
                for i in 0..g {
                    c += acc.scratch[i];
                    acc.h[i].push(c as f64);
                }
            } else {
                acc.zero_paths += 1;
            }
        },
    );

    let mut h = acc.h;
    for m in &mut h {
        m.push_zeros(acc.zero_paths);
    }
    let estimates: Vec<MCEstimate> = grid
        .iter()
        .zip(&h)
        .map(|(&x, m)| {
            let offset = match kind {
                RenewalKind::U => 1.0,
                RenewalKind::V { .. } => {
                    if x > 0.0 {
                        1.0
                    } else {
                        0.0
                    }
                }
            };
            if x == 0.0 {
                // no path can contribute at the origin
                debug_assert_eq!(m.sum_wh, 0.0);
                MCEstimate::exact(offset)
            } else {
                let mut e = MCEstimate::from_moments(*m, streams, paths);
                e.value += offset;
                e
            }
        })
        .collect();

    let raw: Vec<f64> = estimates.iter().map(|e| e.value).collect();
    let weights: Vec<f64> = estimates
        .iter()
        .map(|e| {
            if e.std_error > 0.0 {
                1.0 / (e.std_error * e.std_error)
            } else {
                1e300
            }
        })
        .collect();
    let mut iso = isotonic(&raw[1..], &weights[1..]);
    iso.insert(0, raw[0]);

    let truncation = truncation_diagnostics(&acc.terms, g, n_max, paths);

    Ok(RenewalTable {
        kind,
        grid: grid.to_vec(),
        estimates,
        isotonic: iso,
        n_max,
        paths,
        model_hash: params.model_hash(),
        seed: streams.seed,
        streams: streams.range(paths),
        mean_steps: acc.steps as f64 / paths as f64,
        truncation,
    })
}

fn truncation_diagnostics(terms: &[u64], g: usize, n_max: usize, paths: u64) -> TruncationDiagnostics {
    let nbins = terms.len() / g;
    let pf = paths as f64;
    let ranges: Vec<(usize, usize)> = (0..nbins)
        .map(|b| (1usize << b, ((1usize << (b + 1)) - 1).min(n_max)))
        .collect();
    // mean term by (bin, grid point), cumulative over the grid
    let mean_terms = |i: usize| -> Vec<f64> {
        (0..nbins)
            .map(|b| {
                let hits: u64 = terms[b * g..b * g + i + 1].iter().sum();
                let (lo, hi) = ranges[b];
                hits as f64 / (pf * (hi - lo + 1) as f64)
            })
            .collect()
    };
    let fit_at = |i: usize| -> Option<PowerTail> {
        let t = mean_terms(i);
        let (ns, ts): (Vec<f64>, Vec<f64>) = (0..nbins)
            .filter(|&b| ranges[b].0 * 8 >= n_max && ranges[b].1 > ranges[b].0)
            .map(|b| (((ranges[b].0 * ranges[b].1) as f64).sqrt(), t[b]))
            .unzip();
        if ns.len() < 2 {
            return None;
        }
        fit_power_tail(&ns, &ts, n_max as f64)
    };
    let top = mean_terms(g - 1);
    TruncationDiagnostics {
        n_max,
        bins: ranges
            .iter()
            .zip(&top)
            .map(|(&(n_lo, n_hi), &mean_term)| TermBin { n_lo, n_hi, mean_term })
            .collect(),
        last_term: *top.last().unwrap_or(&0.0),
        tail_fit: fit_at(g - 1),
        tail_estimate: (0..g)
            .map(|i| fit_at(i).map(|f| f.tail_sum).filter(|t| t.is_finite()))
            .collect(),
    }
}

/// `y0 (x/x0)^s` through `(x0, y0)` and `(x1, y1)`; linear if either value
/// is not positive.
fn power_segment(x0: f64, y0: f64, x1: f64, y1: f64, x: f64) -> f64 {
    if y0 > 0.0 && y1 > 0.0 {
        let s = (y1 / y0).ln() / (x1 / x0).ln();
        y0 * (x / x0).powf(s)
    } else {
        y0 + (x - x0) / (x1 - x0) * (y1 - y0)
    }
}

/// `∫_{x0}^{x} ` of [`power_segment`].
fn power_segment_integral(x0: f64, y0: f64, x1: f64, y1: f64, x: f64) -> f64 {
    if y0 > 0.0 && y1 > 0.0 {
        let s = (y1 / y0).ln() / (x1 / x0).ln();
        let r = x / x0;
        let e = (s + 1.0) * r.ln();
        // (r^{s+1} - 1) / (s + 1), stable for s near -1
        let growth = if e.abs() < 1e-12 { r.ln() } else { e.exp_m1() / (s + 1.0) };
        y0 * x0 * growth
    } else {
        let yx = power_segment(x0, y0, x1, y1, x);
        0.5 * (y0 + yx) * (x - x0)
    }
}

impl RenewalTable {
    pub fn max_abscissa(&self) -> f64 {
        *self.grid.last().expect("validated grid")
    }

    /// The isotonic estimate at `x` (`U(x)` or `V(-x)` by kind). Between
    /// positive grid points the interpolant is a power law, which follows
    /// the regularly varying shape; on `(0, x_1]` it is linear from the
    /// right limit `1` at the origin. Beyond the grid the last segment is
    /// extended linearly and the flag is set.
    pub fn eval(&self, x: f64) -> (f64, bool) {
        if x < 0.0 {
            return (0.0, false);
        }
        if x == 0.0 {
            return (self.isotonic[0], false);
        }
        let g = &self.grid;
        let y = &self.isotonic;
        let last = g.len() - 1;
        if x > g[last] {
            let (x0, y0) = if last == 1 { (0.0, 1.0) } else { (g[last - 1], y[last - 1]) };
            let slope = (y[last] - y0) / (g[last] - x0);
            return (y[last] + slope * (x - g[last]), true);
        }
        let i = g.partition_point(|&v| v < x);
        if i == 1 {
            return (1.0 + x / g[1] * (y[1] - 1.0), false);
        }
        (power_segment(g[i - 1], y[i - 1], g[i], y[i], x), false)
    }

    /// Raw standard error at `x`, interpolated like [`Self::eval`] (zero at
    /// the origin, last grid value beyond the grid).
    pub fn std_error_at(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return 0.0;
        }
        let g = &self.grid;
        let last = g.len() - 1;
        if x >= g[last] {
            return self.estimates[last].std_error;
        }
        let i = g.partition_point(|&v| v < x);
        let (x0, s0) = if i == 1 { (0.0, 0.0) } else { (g[i - 1], self.estimates[i - 1].std_error) };
        let t = (x - x0) / (g[i] - x0);
        s0 + t * (self.estimates[i].std_error - s0)
    }

    /// `∫_0^y V(-z) dz` of the interpolant of [`Self::eval`], in closed form.
    pub fn integral_v(&self, y: f64) -> Result<f64> {
        if !matches!(self.kind, RenewalKind::V { .. }) {
            return Err(Error::Domain("integral_v needs a V table".into()));
        }
        if !(y >= 0.0) {
            return Err(Error::Domain(format!("integral_v needs y >= 0, got {y}")));
        }
        if y > self.max_abscissa() {
            return Err(Error::Range(format!(
                "integral_v upper limit {y} exceeds the table range {}",
                self.max_abscissa()
            )));
        }
        let g = &self.grid;
        let v = &self.isotonic;
        let mut total = 0.0;
        for i in 1..g.len() {
            let x0 = if i == 1 { 0.0 } else { g[i - 1] };
            if y <= x0 {
                break;
            }
            let x1 = g[i].min(y);
            total += if i == 1 {
                let y1 = self.eval(x1).0;
                0.5 * (1.0 + y1) * x1
            } else {
                power_segment_integral(g[i - 1], v[i - 1], g[i], v[i], x1)
            };
        }
        Ok(total)
    }

    /// Standard error of [`Self::integral_v`], taking the per-point errors
    /// as fully correlated (the table rows share paths).
    pub fn integral_v_se(&self, y: f64) -> Result<f64> {
        self.integral_v(y)?;
        let g = &self.grid;
        let mut total = 0.0;
        for i in 1..g.len() {
            let x0 = g[i - 1];
            if y <= x0 {
                break;
            }
            let x1 = g[i].min(y);
            total += 0.5 * (self.std_error_at(x0) + self.std_error_at(x1)) * (x1 - x0);
        }
        Ok(total)
    }

    pub fn sidecar(&self) -> TableSidecar {
        TableSidecar {
            schema: CSV_SCHEMA.into(),
            kind: self.kind,
            model_hash: self.model_hash.clone(),
            seed: self.seed,
            streams: self.streams,
            n_max: self.n_max,
            paths: self.paths,
            grid_points: self.grid.len(),
            mean_steps: self.mean_steps,
            truncation: self.truncation.clone(),
            note: "all grid points share one path ensemble; standard errors are per point \
                   and estimates at different points are correlated"
                .into(),
        }
    }

    /// Writes `preamble` verbatim, then the header and one row per grid
    /// point.
    pub fn write_csv<W: Write>(&self, mut w: W, preamble: &str) -> io::Result<()> {
        w.write_all(preamble.as_bytes())?;
        writeln!(w, "{CSV_HEADER}")?;
        for ((x, e), iso) in self.grid.iter().zip(&self.estimates).zip(&self.isotonic) {
            let n_terms = if e.is_structural() { 0 } else { self.n_max };
            let paths = if e.is_structural() { 0 } else { self.paths };
            writeln!(w, "{x},{},{},{iso},{n_terms},{paths}", e.value, e.std_error)?;
        }
        Ok(())
    }
}
