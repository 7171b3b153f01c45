//! Index-ordered parallel map.
//!
//! With the `parallel` feature the work runs on rayon; without it everything
//! is sequential. Results always come back in index order, so any reduction
//! over them is independent of scheduling.

/// Maps `f` over `0..count` on the ambient pool.
pub fn map_indices<T, F>(count: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        (0..count).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..count).map(f).collect()
    }
}

/// Maps `f` over `0..count` with at most `threads` workers.
///
/// `threads == 1` always takes the plain sequential path.
pub fn map_indices_with_threads<T, F>(count: usize, threads: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    if threads <= 1 {
        return (0..count).map(f).collect();
    }
    #[cfg(feature = "parallel")]
    {
        match rayon::ThreadPoolBuilder::new().num_threads(threads).build() {
            Ok(pool) => pool.install(|| map_indices(count, f)),
            Err(_) => (0..count).map(f).collect(),
        }
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..count).map(f).collect()
    }
}

/// Whether this build can run trials concurrently.
pub const fn is_parallel_build() -> bool {
    cfg!(feature = "parallel")
}
