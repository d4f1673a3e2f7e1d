//! Fan-out helpers for independent work items.
//!
//! Every caller derives each item's generator from stable labels, and results
//! land in their input slot, so `map` and `map_seq` are interchangeable
//! bit-for-bit. With the `parallel` feature (default) `map` runs on the rayon
//! pool; without it both are plain loops.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Apply `f` to every item, parallel when available. Output order matches
/// input order.
#[cfg(feature = "parallel")]
pub fn map<T, U, F>(items: Vec<T>, f: F) -> Vec<U>
where
    T: Send,
    U: Send,
    F: Fn(T) -> U + Sync + Send,
{
    items.into_par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub fn map<T, U, F>(items: Vec<T>, f: F) -> Vec<U>
where
    F: Fn(T) -> U,
{
    items.into_iter().map(f).collect()
}

/// Sequential reference path, always available. The bench suite compares
/// this against `map` on the same workload.
pub fn map_seq<T, U, F>(items: Vec<T>, f: F) -> Vec<U>
where
    F: Fn(T) -> U,
{
    items.into_iter().map(f).collect()
}

/// `map` over `0..count`.
pub fn map_indexed<U, F>(count: usize, f: F) -> Vec<U>
where
    U: Send,
    F: Fn(usize) -> U + Sync + Send,
{
    map((0..count).collect(), f)
}

/// Caps the worker pool at `n` threads. Must run before the first `map`
/// call; later calls are ignored. A no-op without the `parallel` feature.
pub fn set_jobs(n: usize) {
    #[cfg(feature = "parallel")]
    {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global();
    }
    #[cfg(not(feature = "parallel"))]
    let _ = n;
}
