//! Data-parallel helpers with a sequential fallback.
//!
//! With the `parallel` feature (default) batch work fans out over a rayon
//! pool; without it every helper runs on the calling thread. Results are
//! always returned in index order, so output never depends on the worker
//! count.

/// Execution strategy for batch loops.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Parallelism {
    Sequential,
    Parallel,
}

impl Default for Parallelism {
    fn default() -> Self {
        if cfg!(feature = "parallel") {
            Parallelism::Parallel
        } else {
            Parallelism::Sequential
        }
    }
}

/// Evaluates `f(0..n)` and collects the results in index order.
pub fn map_range<T, F>(n: usize, mode: Parallelism, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    match mode {
        #[cfg(feature = "parallel")]
        Parallelism::Parallel => {
            use rayon::prelude::*;
            (0..n).into_par_iter().map(f).collect()
        }
        _ => (0..n).map(f).collect(),
    }
}

/// Maps over a slice, preserving order.
pub fn map_slice<'a, S, T, F>(items: &'a [S], mode: Parallelism, f: F) -> Vec<T>
where
    S: Sync,
    T: Send,
    F: Fn(&'a S) -> T + Sync + Send,
{
    map_range(items.len(), mode, |i| f(&items[i]))
}

/// Runs `op` with at most `jobs` worker threads (`jobs <= 1` runs inline).
pub fn with_jobs<R: Send>(jobs: usize, op: impl FnOnce(Parallelism) -> R + Send) -> R {
    if jobs <= 1 {
        return op(Parallelism::Sequential);
    }
    #[cfg(feature = "parallel")]
    {
        match rayon::ThreadPoolBuilder::new().num_threads(jobs).build() {
            Ok(pool) => pool.install(|| op(Parallelism::Parallel)),
            Err(_) => op(Parallelism::Parallel),
        }
    }
    #[cfg(not(feature = "parallel"))]
    {
        op(Parallelism::Sequential)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn order_is_stable_across_modes() {
        let seq = map_range(1000, Parallelism::Sequential, |i| i * i);
        let par = map_range(1000, Parallelism::Parallel, |i| i * i);
        assert_eq!(seq, par);
        let doubled = with_jobs(3, |mode| map_slice(&seq, mode, |v| v * 2));
        assert_eq!(doubled[10], 200);
    }
}
