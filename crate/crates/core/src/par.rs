//! Order-preserving indexed map, parallel when the `parallel` feature is on.
//!
//! Results are collected by index, so output never depends on scheduling.

use crate::error::Result;

/// Worker pool handle. `workers == 1` (or the feature being disabled) means
/// plain sequential iteration on the calling thread.
pub struct Executor {
    #[cfg(feature = "parallel")]
    pool: Option<rayon::ThreadPool>,
}

impl Executor {
    /// `workers == 0` uses rayon's default thread count.
    pub fn new(workers: usize) -> Result<Self> {
        #[cfg(feature = "parallel")]
        {
            let pool = if workers == 1 {
                None
            } else {
                Some(
                    rayon::ThreadPoolBuilder::new()
                        .num_threads(workers)
                        .build()
                        .map_err(|e| crate::Error::InvalidArgument(format!("thread pool: {e}")))?,
                )
            };
            Ok(Executor { pool })
        }
        #[cfg(not(feature = "parallel"))]
        {
            let _ = workers;
            Ok(Executor {})
        }
    }

    pub fn sequential() -> Self {
        #[cfg(feature = "parallel")]
        {
            Executor { pool: None }
        }
        #[cfg(not(feature = "parallel"))]
        {
            Executor {}
        }
    }

    pub fn is_parallel(&self) -> bool {
        #[cfg(feature = "parallel")]
        {
            self.pool.is_some()
        }
        #[cfg(not(feature = "parallel"))]
        {
            false
        }
    }

    /// `(0..n).map(f)` collected in index order.
    pub fn map<T, F>(&self, n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        #[cfg(feature = "parallel")]
        if let Some(pool) = &self.pool {
            use rayon::prelude::*;
            return pool.install(|| (0..n).into_par_iter().map(&f).collect());
        }
        (0..n).map(f).collect()
    }

    /// Like [`Executor::map`] but stops at the first error (by index).
    pub fn try_map<T, F>(&self, n: usize, f: F) -> Result<Vec<T>>
    where
        T: Send,
        F: Fn(usize) -> Result<T> + Sync + Send,
    {
        self.map(n, f).into_iter().collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn map_preserves_order_for_any_worker_count() {
        let seq = Executor::sequential().map(100, |i| i * i);
        for w in [0, 1, 2, 4] {
            assert_eq!(Executor::new(w).unwrap().map(100, |i| i * i), seq);
        }
    }
}
