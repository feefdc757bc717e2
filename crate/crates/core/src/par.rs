//! Data-parallel helpers with a sequential fallback.
//!
//! With the `parallel` feature (default) [`Exec::Parallel`] fans work out on
//! the rayon pool. Without it, or with [`Exec::Sequential`], the same closures
//! run in order on the calling thread. Results always come back in input
//! order, so reductions over them are deterministic in either mode.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Exec {
    Sequential,
    #[default]
    Parallel,
}

impl Exec {
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Exec::Parallel
    }
}

/// Maps `f` over `items`, preserving order.
pub fn map<T, R, F>(exec: Exec, items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if exec.is_parallel() {
        return items.par_iter().map(f).collect();
    }
    let _ = exec;
    items.iter().map(f).collect()
}

/// Maps a fallible `f` over `items`; the first error in input order wins.
pub fn try_map<T, R, E, F>(exec: Exec, items: &[T], f: F) -> Result<Vec<R>, E>
where
    T: Sync,
    R: Send,
    E: Send,
    F: Fn(&T) -> Result<R, E> + Sync + Send,
{
    map(exec, items, f).into_iter().collect()
}

/// Sum of `f` over `items` with a fixed left-to-right summation order.
pub fn sum<T, F>(exec: Exec, items: &[T], f: F) -> f64
where
    T: Sync,
    F: Fn(&T) -> f64 + Sync + Send,
{
    map(exec, items, f).into_iter().sum()
}
