//! Parallel execution of independent indexed tasks (restarts, trials).
//!
//! With the `parallel` feature (default) the work runs on the rayon pool;
//! without it everything is sequential. Results always come back in index
//! order and downstream reductions fold sequentially, so outputs are
//! identical under either mode and any scheduling.

/// Run `f(0..n)` and collect results in index order.
#[cfg(feature = "parallel")]
pub fn run_indexed<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    use rayon::prelude::*;
    (0..n).into_par_iter().map(f).collect()
}

/// Run `f(0..n)` and collect results in index order.
#[cfg(not(feature = "parallel"))]
pub fn run_indexed<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    run_indexed_seq(n, f)
}

/// Always-sequential variant, kept available for benchmarking against the
/// parallel path.
pub fn run_indexed_seq<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    (0..n).map(f).collect()
}
