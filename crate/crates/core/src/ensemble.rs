//! Embarrassingly parallel replica loops with deterministic merging.

use crate::estimators::Merge;

/// Worker count: `BKL_THREADS` if set and positive, else the machine's
/// available parallelism.
pub fn default_threads() -> usize {
    std::env::var("BKL_THREADS")
        .ok()
        .and_then(|s| s.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

/// Folds `body` over replica indices `0..n` into accumulators created by
/// `init`, merging partial accumulators with [`Merge`].
///
/// The result does not depend on `threads` as long as merging is exact.
pub fn fold_replicas<A, I, B>(n: u64, threads: usize, init: I, body: B) -> A
where
    A: Merge + Send,
    I: Fn() -> A + Sync + Send,
    B: Fn(&mut A, u64) + Sync + Send,
{
    fold_range(0, n, threads, init, body)
}

/// As [`fold_replicas`] over replica indices `start..end`.
pub fn fold_range<A, I, B>(start: u64, end: u64, threads: usize, init: I, body: B) -> A
where
    A: Merge + Send,
    I: Fn() -> A + Sync + Send,
    B: Fn(&mut A, u64) + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        if threads > 1 && end > start + 1 {
            use rayon::prelude::*;
            if let Ok(pool) = rayon::ThreadPoolBuilder::new().num_threads(threads).build() {
                return pool.install(|| {
                    (start..end)
                        .into_par_iter()
                        .fold(&init, |mut acc, i| {
                            body(&mut acc, i);
                            acc
                        })
                        .reduce(&init, |mut a, b| {
                            a.merge_from(b);
                            a
                        })
                });
            }
        }
    }
    let _ = threads;
    let mut acc = init();
    for i in start..end {
        body(&mut acc, i);
    }
    acc
}
