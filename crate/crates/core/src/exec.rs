//! Worker-count-invariant parallel loops over sample indices.
//!
//! Work is cut into fixed-size chunks independent of the thread count, and
//! per-chunk results are merged in chunk order, so floating-point reductions
//! are bit-identical for any number of workers.

use std::ops::Range;
use std::sync::Arc;

use rayon::prelude::*;
use rayon::ThreadPool;

/// Samples per chunk.
pub const CHUNK: u64 = 256;

/// Chunks evaluated per round by [`Exec::scan_until`].
const ROUND: u64 = 64;

#[derive(Clone, Default)]
pub struct Exec {
    pool: Option<Arc<ThreadPool>>,
    workers: usize,
}

impl std::fmt::Debug for Exec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Exec").field("workers", &self.workers).finish()
    }
}

impl Exec {
    /// `workers = 0` uses the global rayon pool.
    pub fn new(workers: usize) -> Self {
        if workers == 0 {
            return Self::default();
        }
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .expect("thread pool");
        Self {
            pool: Some(Arc::new(pool)),
            workers,
        }
    }

    pub fn workers(&self) -> usize {
        self.workers
    }

    pub fn install<R: Send>(&self, f: impl FnOnce() -> R + Send) -> R {
        match &self.pool {
            Some(p) => p.install(f),
            None => f(),
        }
    }

    /// Applies `f` to every chunk of `range`; results in chunk order.
    pub fn map_chunks<T, F>(&self, range: Range<u64>, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(Range<u64>) -> T + Sync + Send,
    {
        let chunks = chunk_list(range);
        self.install(|| chunks.into_par_iter().map(|c| f(c)).collect())
    }

    /// Like [`Exec::map_chunks`] but folds results in chunk order and stops
    /// after the first chunk at which `done` holds. Returns the end of the
    /// last chunk consumed.
    pub fn scan_until<T, A, F>(
        &self,
        range: Range<u64>,
        f: F,
        acc: &mut A,
        mut fold: impl FnMut(&mut A, T),
        done: impl Fn(&A) -> bool,
    ) -> u64
    where
        T: Send,
        F: Fn(Range<u64>) -> T + Sync + Send,
    {
        let chunks = chunk_list(range.clone());
        let mut consumed = range.start;
        for round in chunks.chunks(ROUND as usize) {
            if done(acc) {
                break;
            }
            let results: Vec<T> = self.install(|| round.par_iter().map(|c| f(c.clone())).collect());
            for (c, r) in round.iter().zip(results) {
                fold(acc, r);
                consumed = c.end;
                if done(acc) {
                    return consumed;
                }
            }
        }
        consumed
    }
}

fn chunk_list(range: Range<u64>) -> Vec<Range<u64>> {
    let mut out = Vec::new();
    let mut s = range.start;
    while s < range.end {
        let e = (s + CHUNK).min(range.end);
        out.push(s..e);
        s = e;
    }
    out
}
