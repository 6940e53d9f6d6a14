//! Counter-based random streams and the deterministic path runner.
//!
//! A path is identified by `(seed, stream id)`. Its random numbers come from
//! a ChaCha8 generator keyed by the seed and positioned on that stream, so a
//! path is reproducible in isolation. Paths are grouped into fixed-size
//! batches; batches are processed in parallel and their accumulators are
//! folded in batch order, which makes every result independent of the worker
//! count.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub type PathRng = ChaCha8Rng;

/// Paths per work item. Fixed so that the fold order never depends on the
/// thread count.
pub const BATCH_PATHS: u64 = 4096;

/// Bits reserved for the path index inside a stream id.
const PATH_BITS: u32 = 40;

/// A family of streams `base, base + 1, ...` under one seed.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Streams {
    pub seed: u64,
    pub base: u64,
}

impl Streams {
    pub fn new(seed: u64) -> Self {
        Streams { seed, base: 0 }
    }

    /// A disjoint sub-family. Tags must be distinct within one pipeline and
    /// below 2^24; each sub-family holds 2^40 path ids.
    pub fn child(&self, tag: u64) -> Self {
        debug_assert!(tag < (1 << (64 - PATH_BITS)));
        Streams {
            seed: self.seed,
            base: self.base.wrapping_add(tag << PATH_BITS),
        }
    }

    /// Streams shifted by `offset` path ids. Used to split one budget across
    /// independent runs.
    pub fn offset(&self, offset: u64) -> Self {
        Streams {
            seed: self.seed,
            base: self.base.wrapping_add(offset),
        }
    }

    pub fn stream_id(&self, index: u64) -> u64 {
        self.base.wrapping_add(index)
    }

    /// Generator for path `index`.
    pub fn rng(&self, index: u64) -> PathRng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream_id(index));
        rng
    }

    /// Stream ids `[start, end)` consumed by `paths` paths.
    pub fn range(&self, paths: u64) -> StreamRange {
        StreamRange {
            start: self.base,
            end: self.base.wrapping_add(paths),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StreamRange {
    pub start: u64,
    pub end: u64,
}

impl StreamRange {
    pub fn overlaps(&self, other: &StreamRange) -> bool {
        self.start < other.end && other.start < self.end
    }

    pub fn hull(&self, other: &StreamRange) -> StreamRange {
        StreamRange {
            start: self.start.min(other.start),
            end: self.end.max(other.end),
        }
    }
}

/// Uniform draw on the open interval (0, 1).
#[inline]
pub fn open01<R: RngCore + ?Sized>(rng: &mut R) -> f64 {
    ((rng.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
}

/// Accumulators that can absorb a later batch.
pub trait Merge {
    fn merge(&mut self, later: Self);
}

impl Merge for () {
    fn merge(&mut self, _later: Self) {}
}

impl<T: Merge> Merge for Vec<T> {
    fn merge(&mut self, later: Self) {
        assert_eq!(self.len(), later.len(), "accumulator shapes differ");
        for (a, b) in self.iter_mut().zip(later) {
            a.merge(b);
        }
    }
}

/// Runs `body` once per path `0..paths`, each with its own stream.
///
/// `init` builds an empty accumulator for a batch; batch accumulators are
/// merged in ascending batch order.
pub fn run_paths<A, I, F>(streams: &Streams, paths: u64, workers: usize, init: I, body: F) -> A
where
    A: Merge + Send,
    I: Fn() -> A + Sync,
    F: Fn(&mut A, &mut PathRng, u64) + Sync,
{
    let batches = paths.div_ceil(BATCH_PATHS);
    let run_batch = |b: u64| -> A {
        let mut acc = init();
        let mut rng = ChaCha8Rng::seed_from_u64(streams.seed);
        let lo = b * BATCH_PATHS;
        let hi = (lo + BATCH_PATHS).min(paths);
        for index in lo..hi {
            rng.set_stream(streams.stream_id(index));
            rng.set_word_pos(0);
            body(&mut acc, &mut rng, index);
        }
        acc
    };

    let parts: Vec<A> = if workers <= 1 || batches <= 1 {
        (0..batches).map(run_batch).collect()
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .expect("failed to build worker pool");
        pool.install(|| (0..batches).into_par_iter().map(run_batch).collect())
    };

    let mut iter = parts.into_iter();
    let mut total = iter.next().unwrap_or_else(&init);
    for part in iter {
        total.merge(part);
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[derive(Default)]
    struct Collect(Vec<(u64, u64)>);

    impl Merge for Collect {
        fn merge(&mut self, later: Self) {
            self.0.extend(later.0);
        }
    }

    #[test]
    fn path_output_depends_only_on_seed_and_stream() {
        let s = Streams::new(7).child(3);
        let run = |workers| {
            run_paths(&s, 10_000, workers, Collect::default, |acc, rng, i| {
                acc.0.push((i, rng.random::<u64>()))
            })
            .0
        };
        let one = run(1);
        assert_eq!(one, run(4));
        assert_eq!(one.len(), 10_000);
        let mut direct = s.rng(1234);
        assert_eq!(one[1234].1, direct.random::<u64>());
    }

    #[test]
    fn children_are_disjoint() {
        let s = Streams::new(1);
        let a = s.child(1).range(1 << 30);
        let b = s.child(2).range(1 << 30);
        assert!(!a.overlaps(&b));
        assert_ne!(s.child(1).rng(0).random::<u64>(), s.child(2).rng(0).random::<u64>());
    }

    #[test]
    fn open01_stays_inside() {
        let mut rng = Streams::new(0).rng(0);
        for _ in 0..100_000 {
            let u = open01(&mut rng);
            assert!(u > 0.0 && u < 1.0);
        }
    }
}
