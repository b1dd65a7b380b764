//! Execution policy for the data-parallel loops (clients within a round,
//! seeds within an experiment, Monte Carlo batches).
//!
//! Results never depend on the policy: work items own their random
//! substreams and results are collected in index order.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Exec {
    Sequential,
    #[default]
    Parallel,
}

impl Exec {
    /// `true` when `Parallel` was requested and the `parallel` feature is on.
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Exec::Parallel
    }

    /// Map `f` over `0..len`, returning results in index order.
    pub fn map_indexed<T, F>(self, len: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        #[cfg(feature = "parallel")]
        if self.is_parallel() {
            use rayon::prelude::*;
            return (0..len).into_par_iter().map(f).collect();
        }
        (0..len).map(f).collect()
    }

    /// Apply `f` to each element of `items` mutably, returning results in order.
    pub fn map_mut<S, T, F>(self, items: &mut [S], f: F) -> Vec<T>
    where
        S: Send,
        T: Send,
        F: Fn(usize, &mut S) -> T + Sync + Send,
    {
        #[cfg(feature = "parallel")]
        if self.is_parallel() {
            use rayon::prelude::*;
            return items
                .par_iter_mut()
                .enumerate()
                .map(|(i, s)| f(i, s))
                .collect();
        }
        items.iter_mut().enumerate().map(|(i, s)| f(i, s)).collect()
    }
}

/// Run `f` inside a thread pool capped by `POWEREF_THREADS` when it is set.
pub fn with_thread_cap<R: Send>(f: impl FnOnce() -> R + Send) -> R {
    #[cfg(feature = "parallel")]
    if let Some(n) = std::env::var("POWEREF_THREADS")
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)
    {
        if let Ok(pool) = rayon::ThreadPoolBuilder::new().num_threads(n).build() {
            return pool.install(f);
        }
    }
    f()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn policies_agree() {
        let seq = Exec::Sequential.map_indexed(100, |i| i * i);
        let par = Exec::Parallel.map_indexed(100, |i| i * i);
        assert_eq!(seq, par);
    }

    #[test]
    fn map_mut_preserves_order() {
        let mut items: Vec<u32> = (0..50).collect();
        let out = Exec::Parallel.map_mut(&mut items, |i, s| {
            *s += 1;
            i as u32 + *s
        });
        assert_eq!(out, (0..50).map(|i| 2 * i + 1).collect::<Vec<_>>());
        assert_eq!(items[49], 50);
    }
}
