//! Data-parallel execution helper.
//!
//! Heavy loops (Monte Carlo permutations, per-user training sweeps, donation
//! rounds) are expressed as index-keyed maps. Results are collected in index
//! order and reduced sequentially, so the outcome never depends on thread
//! scheduling. With the `parallel` feature disabled the same code runs on a
//! plain iterator.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Maps `f` over `0..n` and collects results in index order.
///
/// Runs on the rayon pool when the `parallel` feature is enabled, otherwise
/// sequentially.
pub fn indexed_map<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        (0..n).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..n).map(f).collect()
    }
}

/// Sequential twin of [`indexed_map`], available regardless of features.
///
/// Used by the benchmark suite to compare both execution paths and by tests
/// asserting that they agree.
pub fn indexed_map_seq<T, F>(n: usize, f: F) -> Vec<T>
where
    F: Fn(usize) -> T,
{
    (0..n).map(f).collect()
}
