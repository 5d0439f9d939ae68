//! Data-parallel helpers over quadrature nodes.
//!
//! With the `parallel` feature the maps run on the rayon pool; without it
//! (or while [`force_sequential`] is set) they run on the calling thread.
//! Reductions never depend on the schedule: values are collected in node
//! order and summed with a fixed pairwise tree.

use std::sync::atomic::{AtomicBool, Ordering};

static FORCE_SEQUENTIAL: AtomicBool = AtomicBool::new(false);

/// Route every map through the sequential path. Used by the benches.
pub fn force_sequential(on: bool) {
    FORCE_SEQUENTIAL.store(on, Ordering::SeqCst);
}

pub fn is_parallel() -> bool {
    cfg!(feature = "parallel") && !FORCE_SEQUENTIAL.load(Ordering::Relaxed)
}

/// `(0..len).map(f).collect()`, possibly in parallel, order preserved.
pub fn map_range<T, F>(len: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        if is_parallel() {
            use rayon::prelude::*;
            return (0..len).into_par_iter().map(f).collect();
        }
    }
    (0..len).map(f).collect()
}

/// Fallible variant of [`map_range`]; the first error in node order wins.
pub fn try_map_range<T, E, F>(len: usize, f: F) -> Result<Vec<T>, E>
where
    T: Send,
    E: Send,
    F: Fn(usize) -> Result<T, E> + Sync + Send,
{
    map_range(len, f).into_iter().collect()
}

/// Pairwise (tree) summation in fixed order.
pub fn tree_sum(values: &[f64]) -> f64 {
    const LEAF: usize = 16;
    if values.len() <= LEAF {
        let mut s = 0.0;
        for v in values {
            s += v;
        }
        return s;
    }
    let mid = values.len() / 2;
    tree_sum(&values[..mid]) + tree_sum(&values[mid..])
}

/// Sum `f(i)` for `i in 0..len` with a deterministic tree reduction.
pub fn sum_range<F>(len: usize, f: F) -> f64
where
    F: Fn(usize) -> f64 + Sync + Send,
{
    tree_sum(&map_range(len, f))
}
