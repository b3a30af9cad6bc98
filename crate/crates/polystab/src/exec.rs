//! Execution-mode plumbing: data-parallel maps with a sequential fallback.
//!
//! Embarrassingly parallel stages (certificate batteries, crease scans,
//! per-piece verification, sweep items) go through [`map_collect`] so the
//! same code runs under rayon or sequentially.  Results are collected in
//! input order and reduced sequentially afterwards, so outputs are identical
//! bit for bit regardless of mode or thread count.

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExecMode {
    Parallel,
    Sequential,
}

impl Default for ExecMode {
    fn default() -> Self {
        if cfg!(feature = "parallel") {
            ExecMode::Parallel
        } else {
            ExecMode::Sequential
        }
    }
}

#[cfg(feature = "parallel")]
pub fn map_collect<T, R, F>(mode: ExecMode, items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    use rayon::prelude::*;
    match mode {
        ExecMode::Parallel => items.par_iter().map(&f).collect(),
        ExecMode::Sequential => items.iter().map(&f).collect(),
    }
}

#[cfg(not(feature = "parallel"))]
pub fn map_collect<T, R, F>(_mode: ExecMode, items: &[T], f: F) -> Vec<R>
where
    F: Fn(&T) -> R,
{
    items.iter().map(&f).collect()
}

/// Maps over indices `0..n`; same ordering guarantees as [`map_collect`].
pub fn map_indices<R, F>(mode: ExecMode, n: usize, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(usize) -> R + Sync + Send,
{
    let idx: Vec<usize> = (0..n).collect();
    map_collect(mode, &idx, |&i| f(i))
}
