//! Data-parallel execution with an order-fixed sequential fallback.
//!
//! Every helper here returns results in index order, and callers reduce them
//! sequentially, so `Parallel` and `Sequential` produce bitwise-identical
//! output. Without the `parallel` feature, `Parallel` runs sequentially.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Execution {
    Sequential,
    #[default]
    Parallel,
}

/// Evaluate `f(0), f(1), ..., f(n - 1)` and collect in index order.
pub fn map_indexed<T, F>(n: usize, exec: Execution, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    match exec {
        #[cfg(feature = "parallel")]
        Execution::Parallel => (0..n).into_par_iter().map(f).collect(),
        _ => (0..n).map(f).collect(),
    }
}

/// Split `0..len` into consecutive chunks of at most `chunk` items and map
/// each `(start, end)` range, collecting in chunk order.
pub fn map_chunks<T, F>(len: usize, chunk: usize, exec: Execution, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize, usize) -> T + Sync + Send,
{
    let chunk = chunk.max(1);
    let count = len.div_ceil(chunk);
    map_indexed(count, exec, |c| {
        let start = c * chunk;
        f(start, (start + chunk).min(len))
    })
}

/// Configure the global worker pool. `0` keeps the library default
/// (one worker per logical CPU). Returns false if the pool was already built.
pub fn configure_threads(threads: usize) -> bool {
    #[cfg(feature = "parallel")]
    {
        if threads == 0 {
            return true;
        }
        rayon::ThreadPoolBuilder::new().num_threads(threads).build_global().is_ok()
    }
    #[cfg(not(feature = "parallel"))]
    {
        let _ = threads;
        true
    }
}
