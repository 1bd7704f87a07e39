//! Data-parallel helpers with a sequential fallback.
//!
//! Every helper returns results in index order, so reductions performed by the
//! caller are independent of the thread count. With the `parallel` feature
//! disabled, [`Execution::Parallel`] silently runs sequentially.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Execution {
    Sequential,
    Parallel,
}

impl Default for Execution {
    fn default() -> Self {
        if cfg!(feature = "parallel") {
            Execution::Parallel
        } else {
            Execution::Sequential
        }
    }
}

impl Execution {
    /// True when work will actually be spread over the rayon pool.
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Execution::Parallel
    }

    /// Evaluates `f(0..n)` and returns the results in index order.
    pub fn map_range<T, F>(self, n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        #[cfg(feature = "parallel")]
        if self == Execution::Parallel {
            use rayon::prelude::*;
            return (0..n).into_par_iter().with_min_len(16).map(f).collect();
        }
        (0..n).map(f).collect()
    }

    /// Like [`map_range`](Self::map_range) but with no minimum chunk length,
    /// for coarse-grained jobs such as whole solver runs.
    pub fn map_jobs<T, F>(self, n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        #[cfg(feature = "parallel")]
        if self == Execution::Parallel {
            use rayon::prelude::*;
            return (0..n).into_par_iter().map(f).collect();
        }
        (0..n).map(f).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn order_is_preserved() {
        for exec in [Execution::Sequential, Execution::Parallel] {
            let v = exec.map_range(1000, |i| i * 3);
            assert!(v.iter().enumerate().all(|(i, &x)| x == i * 3));
            let w = exec.map_jobs(7, |i| i);
            assert_eq!(w, (0..7).collect::<Vec<_>>());
        }
    }
}
