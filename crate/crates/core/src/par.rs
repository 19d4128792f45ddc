//! Execution-mode switch between rayon and plain iteration.
//!
//! Compute-heavy loops (Monte-Carlo sampling, candidate sweeps, oracle
//! enumeration, per-client training) go through these helpers. With the
//! `parallel` feature enabled (the default) `ExecMode::Parallel` fans
//! work out over rayon; without it, or with `ExecMode::Sequential`,
//! everything runs on the calling thread. Results are identical either
//! way: outputs are collected in index order and reductions fold in a
//! fixed order, never in completion order.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ExecMode {
    /// Use rayon if the `parallel` feature is compiled in; otherwise
    /// fall back to sequential execution.
    #[default]
    Parallel,
    Sequential,
}

/// Map `f` over `0..n`, preserving index order in the output.
pub fn map_indexed<U, F>(mode: ExecMode, n: usize, f: F) -> Vec<U>
where
    U: Send,
    F: Fn(usize) -> U + Sync + Send,
{
    match mode {
        ExecMode::Sequential => (0..n).map(f).collect(),
        ExecMode::Parallel => {
            #[cfg(feature = "parallel")]
            {
                (0..n).into_par_iter().map(f).collect()
            }
            #[cfg(not(feature = "parallel"))]
            {
                (0..n).map(f).collect()
            }
        }
    }
}

/// Map `f` over a slice, preserving index order in the output.
pub fn map_slice<T, U, F>(mode: ExecMode, items: &[T], f: F) -> Vec<U>
where
    T: Sync,
    U: Send,
    F: Fn(&T) -> U + Sync + Send,
{
    match mode {
        ExecMode::Sequential => items.iter().map(f).collect(),
        ExecMode::Parallel => {
            #[cfg(feature = "parallel")]
            {
                items.par_iter().map(f).collect()
            }
            #[cfg(not(feature = "parallel"))]
            {
                items.iter().map(f).collect()
            }
        }
    }
}
