//! Data-parallel loops over particles, with a sequential fallback.
//!
//! With the `parallel` feature, [`Execution::Parallel`] runs on the current
//! rayon pool; otherwise both variants run sequentially. Every closure
//! receives the particle index, so results are identical either way.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Execution {
    Sequential,
    #[default]
    Parallel,
}

impl Execution {
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Execution::Parallel
    }
}

/// Calls `f(k, row_a, row_b)` for the `k`-th rows of `a` and `b`, of widths
/// `wa` and `wb`.
pub(crate) fn for_each_row_pair<F>(exec: Execution, a: &mut [f64], b: &mut [f64], wa: usize, wb: usize, f: F)
where
    F: Fn(usize, &mut [f64], &mut [f64]) + Sync + Send,
{
    if wa == 0 || wb == 0 {
        return;
    }
    debug_assert_eq!(a.len().div_ceil(wa), b.len().div_ceil(wb));
    #[cfg(feature = "parallel")]
    if exec.is_parallel() {
        a.par_chunks_mut(wa)
            .zip(b.par_chunks_mut(wb))
            .enumerate()
            .for_each(|(k, (ra, rb))| f(k, ra, rb));
        return;
    }
    let _ = exec;
    a.chunks_mut(wa)
        .zip(b.chunks_mut(wb))
        .enumerate()
        .for_each(|(k, (ra, rb))| f(k, ra, rb));
}

/// Calls `f(k, row)` for the `k`-th `width`-sized row of `a`.
pub(crate) fn for_each_row<F>(exec: Execution, a: &mut [f64], width: usize, f: F)
where
    F: Fn(usize, &mut [f64]) + Sync + Send,
{
    if width == 0 {
        return;
    }
    #[cfg(feature = "parallel")]
    if exec.is_parallel() {
        a.par_chunks_mut(width).enumerate().for_each(|(k, r)| f(k, r));
        return;
    }
    let _ = exec;
    a.chunks_mut(width).enumerate().for_each(|(k, r)| f(k, r));
}
