//! Data-parallel map with a sequential fallback.
//!
//! With the `parallel` feature (default), [`par_map`] fans work out over the
//! rayon pool; without it, the same call compiles to a plain sequential map.
//! Both paths return results in input order, so anything reduced from the
//! output in index order is bitwise-identical regardless of feature flag or
//! thread count. [`seq_map`] is always available for direct comparison (used
//! by the benchmark suite).

/// Maps `f` over `items`, in parallel when the `parallel` feature is on.
/// Output order matches input order.
#[cfg(feature = "parallel")]
pub fn par_map<T, U, F>(items: &[T], f: F) -> Vec<U>
where
    T: Sync,
    U: Send,
    F: Fn(&T) -> U + Sync + Send,
{
    use rayon::prelude::*;
    items.par_iter().map(|t| f(t)).collect()
}

/// Maps `f` over `items` sequentially (the `parallel` feature is off).
#[cfg(not(feature = "parallel"))]
pub fn par_map<T, U, F>(items: &[T], f: F) -> Vec<U>
where
    T: Sync,
    U: Send,
    F: Fn(&T) -> U + Sync + Send,
{
    items.iter().map(|t| f(t)).collect()
}

/// Sequential map with the same signature as [`par_map`].
pub fn seq_map<T, U, F>(items: &[T], f: F) -> Vec<U>
where
    T: Sync,
    U: Send,
    F: Fn(&T) -> U + Sync + Send,
{
    items.iter().map(|t| f(t)).collect()
}

/// Caps the worker pool at `threads` for the rest of the process. Must be
/// called before the first parallel map; later calls fail. A no-op without
/// the `parallel` feature.
#[cfg(feature = "parallel")]
pub fn configure_threads(threads: usize) -> crate::error::Result<()> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| crate::error::Error::config(format!("thread pool setup failed: {e}")))
}

/// Caps the worker pool at `threads` for the rest of the process. Must be
/// called before the first parallel map; later calls fail. A no-op without
/// the `parallel` feature.
#[cfg(not(feature = "parallel"))]
pub fn configure_threads(_threads: usize) -> crate::error::Result<()> {
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn par_map_preserves_order() {
        let items: Vec<usize> = (0..257).collect();
        let out = par_map(&items, |&x| x * 3);
        let expect: Vec<usize> = items.iter().map(|&x| x * 3).collect();
        assert_eq!(out, expect);
    }

    #[test]
    fn par_and_seq_agree_bitwise_on_floats() {
        let items: Vec<f64> = (0..100).map(|i| i as f64 * 0.37).collect();
        let p = par_map(&items, |&x| (x.sin() * x.exp()).to_bits());
        let s = seq_map(&items, |&x| (x.sin() * x.exp()).to_bits());
        assert_eq!(p, s);
    }
}
