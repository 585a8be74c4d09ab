//! Batch execution helpers.
//!
//! All data-parallel loops in the crate go through [`map_ordered`], which
//! preserves input order in its output. Reductions over the results are done
//! serially by the caller in that fixed order, so results are bit-identical
//! regardless of worker count or whether the `parallel` feature is enabled.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Maps `f` over `items`, returning results in input order.
///
/// Runs on the current rayon pool when the `parallel` feature is enabled,
/// sequentially otherwise.
pub fn map_ordered<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        items.par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        items.iter().map(f).collect()
    }
}

/// Runs `f` inside a thread pool of `workers` threads (0 = library default).
///
/// Without the `parallel` feature this just calls `f`; the `workers` value is
/// ignored and everything runs sequentially.
pub fn run_with_workers<R, F>(workers: usize, f: F) -> R
where
    R: Send,
    F: FnOnce() -> R + Send,
{
    #[cfg(feature = "parallel")]
    {
        if workers == 0 {
            return f();
        }
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .expect("failed to build worker pool");
        pool.install(f)
    }
    #[cfg(not(feature = "parallel"))]
    {
        let _ = workers;
        f()
    }
}
