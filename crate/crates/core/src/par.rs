//! Data-parallel helpers.
//!
//! Every parallel loop in the crate goes through [`map_indices`]. Each index is
//! computed independently and results are collected in index order, so output
//! never depends on the worker count or on scheduling. With the `parallel`
//! feature disabled, or with [`Execution::Sequential`], the same closures run
//! on the calling thread.

/// How an index-parallel loop is executed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Execution {
    Sequential,
    /// Uses the rayon global pool when the `parallel` feature is enabled,
    /// otherwise falls back to [`Execution::Sequential`].
    #[default]
    Parallel,
}

impl Execution {
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Execution::Parallel
    }
}

/// `(0..n).map(f).collect()`, fanned out over the pool when `exec` allows it.
pub fn map_indices<T, F>(exec: Execution, n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if exec.is_parallel() {
        use rayon::prelude::*;
        return (0..n).into_par_iter().map(f).collect();
    }
    let _ = exec;
    (0..n).map(f).collect()
}

/// Like [`map_indices`] with the default execution mode.
pub fn par_map<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    map_indices(Execution::default(), n, f)
}
