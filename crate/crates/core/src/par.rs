//! Data-parallel helpers with a sequential fallback.
//!
//! With the `parallel` feature (default) maps run on the rayon pool; without
//! it they run on the calling thread. Results always come back in input
//! order, and reductions go through [`pairwise_sum`] over that order, so
//! output is bit-identical for any thread count.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Maps `f` over `items`, preserving order.
#[cfg(feature = "parallel")]
pub fn map<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    items.par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub fn map<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    items.iter().map(f).collect()
}

/// Maps `f` over `0..n`, preserving order.
#[cfg(feature = "parallel")]
pub fn map_range<R, F>(n: usize, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(usize) -> R + Sync + Send,
{
    (0..n).into_par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub fn map_range<R, F>(n: usize, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(usize) -> R + Sync + Send,
{
    (0..n).map(f).collect()
}

/// Collects `Result`s from an ordered map, returning the first error by index.
pub fn try_map_range<R, E, F>(n: usize, f: F) -> Result<Vec<R>, E>
where
    R: Send,
    E: Send,
    F: Fn(usize) -> Result<R, E> + Sync + Send,
{
    map_range(n, f).into_iter().collect()
}

/// Configures the global pool. `0` keeps the default; a no-op without the
/// `parallel` feature. Returns `false` if the pool was already initialised.
pub fn set_threads(threads: usize) -> bool {
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

/// Whether the crate was built with the rayon backend.
pub const fn is_parallel() -> bool {
    cfg!(feature = "parallel")
}

/// Pairwise (cascade) summation in a fixed tree shape.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    match xs.len() {
        0 => 0.0,
        1 => xs[0],
        2 => xs[0] + xs[1],
        n => {
            let (l, r) = xs.split_at(n / 2);
            pairwise_sum(l) + pairwise_sum(r)
        }
    }
}

/// Pairwise summation of owned values with a fixed tree shape.
pub fn pairwise_reduce<T: Clone, F: Fn(&T, &T) -> T>(xs: &[T], add: &F) -> Option<T> {
    match xs.len() {
        0 => None,
        1 => Some(xs[0].clone()),
        n => {
            let (l, r) = xs.split_at(n / 2);
            Some(add(&pairwise_reduce(l, add)?, &pairwise_reduce(r, add)?))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn map_keeps_order() {
        let out = map_range(1000, |i| i * 2);
        assert!(out.iter().enumerate().all(|(i, &v)| v == 2 * i));
    }

    #[test]
    fn pairwise_matches_exact_sum_on_integers() {
        let xs: Vec<f64> = (1..=1000).map(|i| i as f64).collect();
        assert_eq!(pairwise_sum(&xs), 500_500.0);
        assert_eq!(pairwise_reduce(&xs, &|a, b| a + b), Some(500_500.0));
        assert_eq!(pairwise_sum(&[]), 0.0);
    }
}
