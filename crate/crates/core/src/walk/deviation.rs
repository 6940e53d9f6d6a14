//! Direct Monte Carlo for endpoint events of the walk kept nonnegative.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{run_paths, Merge, Streams};
use crate::stable::StableParams;
use crate::stats::{MCEstimate, Moments};

/// Indicator estimate; `needs_larger_budget` is set when no path hit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EventEstimate {
    pub estimate: MCEstimate,
    pub hits: u64,
    pub needs_larger_budget: bool,
}

impl EventEstimate {
    fn new(hits: u64, paths: u64, streams: &Streams) -> Self {
        EventEstimate {
            estimate: MCEstimate::from_moments(Moments::bernoulli(hits, paths), streams, paths),
            hits,
            needs_larger_budget: hits == 0,
        }
    }
}

struct Hits(Vec<u64>);

impl Merge for Hits {
    fn merge(&mut self, later: Self) {
        for (a, b) in self.0.iter_mut().zip(later.0) {
            *a += b;
        }
    }
}

fn check_budget(paths: u64) -> Result<()> {
    if paths == 0 {
        Err(Error::Domain("need at least one path".into()))
    } else {
        Ok(())
    }
}

/// `P(S_n ≤ x, L_n ≥ 0)`.
pub fn prob_small_deviation(
    params: &StableParams,
    n: usize,
    x: f64,
    paths: u64,
    streams: &Streams,
    workers: usize,
) -> Result<EventEstimate> {
    Ok(prob_small_deviation_multi(params, &[(n, x)], paths, streams, workers)?.remove(0))
}

/// `P(S_n ≤ x, L_n ≥ 0)` for every `(n, x)` query, all on one path set.
pub fn prob_small_deviation_multi(
    params: &StableParams,
    queries: &[(usize, f64)],
    paths: u64,
    streams: &Streams,
    workers: usize,
) -> Result<Vec<EventEstimate>> {
    check_budget(paths)?;
    if queries.is_empty() {
        return Err(Error::Domain("no queries".into()));
    }
    if let Some(&(n, x)) = queries.iter().find(|(n, x)| *n == 0 || !(*x > 0.0)) {
        return Err(Error::Domain(format!("need n >= 1 and x > 0, got ({n}, {x})")));
    }
    let n_max = queries.iter().map(|q| q.0).max().unwrap_or(0);
    let mut by_n: Vec<Vec<usize>> = vec![Vec::new(); n_max + 1];
    for (i, q) in queries.iter().enumerate() {
        by_n[q.0].push(i);
    }
    let sampler = params.sampler();
    let hits = run_paths(streams, paths, workers, || Hits(vec![0; queries.len()]), |acc, rng, _| {
        let mut s = 0.0;
        for idx in by_n.iter().skip(1) {
            s += sampler.sample(rng);
            if s < 0.0 {
                break;
            }
            for &i in idx {
                if s <= queries[i].1 {
                    acc.0[i] += 1;
                }
            }
        }
    });
    Ok(hits.0.into_iter().map(|h| EventEstimate::new(h, paths, streams)).collect())
}

/// `P(S_n ∈ [e_i, e_{i+1}), L_n ≥ 0)` for consecutive edges, on one path
/// set.
pub fn local_probability_partition(
    params: &StableParams,
    n: usize,
    edges: &[f64],
    paths: u64,
    streams: &Streams,
    workers: usize,
) -> Result<Vec<EventEstimate>> {
    check_budget(paths)?;
    if n == 0 || edges.len() < 2 || edges[0] < 0.0 || edges.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::Domain("need n >= 1 and increasing edges starting at y >= 0".into()));
    }
    let bins = edges.len() - 1;
    let sampler = params.sampler();
    let hits = run_paths(streams, paths, workers, || Hits(vec![0; bins]), |acc, rng, _| {
        let mut s = 0.0;
        for _ in 0..n {
            s += sampler.sample(rng);
            if s < 0.0 {
                return;
            }
        }
        let i = edges.partition_point(|&e| e <= s);
        if i >= 1 && i <= bins {
            acc.0[i - 1] += 1;
        }
    });
    Ok(hits.0.into_iter().map(|h| EventEstimate::new(h, paths, streams)).collect())
}

/// `P(S_n ∈ [y, y + Δ), L_n ≥ 0)`.
pub fn local_probability(
    params: &StableParams,
    n: usize,
    y: f64,
    delta: f64,
    paths: u64,
    streams: &Streams,
    workers: usize,
) -> Result<EventEstimate> {
    if !(y >= 0.0 && delta > 0.0) {
        return Err(Error::Domain(format!("need y >= 0 and Δ > 0, got ({y}, {delta})")));
    }
    Ok(local_probability_partition(params, n, &[y, y + delta], paths, streams, workers)?.remove(0))
}

/// `P(S_n > 0)`.
pub fn prob_positive(
    params: &StableParams,
    n: usize,
    paths: u64,
    streams: &Streams,
    workers: usize,
) -> Result<EventEstimate> {
    check_budget(paths)?;
    if n == 0 {
        return Err(Error::Domain("need n >= 1".into()));
    }
    let sampler = params.sampler();
    let hits = run_paths(streams, paths, workers, || Hits(vec![0]), |acc, rng, _| {
        let mut s = 0.0;
        for _ in 0..n {
            s += sampler.sample(rng);
        }
        if s > 0.0 {
            acc.0[0] += 1;
        }
    });
    Ok(EventEstimate::new(hits.0[0], paths, streams))
}
