//! Execution policy for the embarrassingly parallel loops (table rows, grid
//! points, sweep values, Monte Carlo replicates).

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum ExecPolicy {
    Sequential,
    #[default]
    Parallel,
}

impl ExecPolicy {
    /// `Parallel` silently degrades to sequential without the `parallel` feature.
    pub fn map<T, R, F>(self, items: Vec<T>, f: F) -> Vec<R>
    where
        T: Send,
        R: Send,
        F: Fn(T) -> R + Sync + Send,
    {
        match self {
            #[cfg(feature = "parallel")]
            ExecPolicy::Parallel => {
                use rayon::prelude::*;
                items.into_par_iter().map(f).collect()
            }
            _ => items.into_iter().map(f).collect(),
        }
    }

    pub fn map_range<R, F>(self, n: usize, f: F) -> Vec<R>
    where
        R: Send,
        F: Fn(usize) -> R + Sync + Send,
    {
        self.map((0..n).collect(), f)
    }

    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == ExecPolicy::Parallel
    }
}

/// Run `f` inside a pool of `workers` threads when parallelism is available.
pub fn with_workers<R: Send>(workers: Option<usize>, f: impl FnOnce() -> R + Send) -> R {
    #[cfg(feature = "parallel")]
    if let Some(n) = workers {
        if let Ok(pool) = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build() {
            return pool.install(f);
        }
    }
    let _ = workers;
    f()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn policies_agree_and_keep_order() {
        let seq = ExecPolicy::Sequential.map_range(100, |i| i * i);
        let par = ExecPolicy::Parallel.map_range(100, |i| i * i);
        assert_eq!(seq, par);
        assert_eq!(seq[7], 49);
    }

    #[test]
    fn worker_pool_runs_closure() {
        assert_eq!(with_workers(Some(2), || ExecPolicy::Parallel.map_range(4, |i| i).len()), 4);
    }
}
