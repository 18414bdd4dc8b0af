//! Execution strategy for embarrassingly parallel loops.
//!
//! With the `parallel` feature disabled every strategy runs sequentially.
//! Results are always returned in index order, so callers that reduce them
//! sequentially get the same answer under any strategy.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Execution {
    Sequential,
    /// Global rayon pool.
    #[default]
    Parallel,
    Workers { workers: usize },
}

impl Execution {
    /// `Sequential` for one worker, a dedicated pool otherwise.
    pub fn with_workers(workers: usize) -> Self {
        match workers {
            0 | 1 => Execution::Sequential,
            w => Execution::Workers { workers: w },
        }
    }

    /// Evaluates `f(0), ..., f(len - 1)` and returns the results in order.
    pub fn map<T, F>(self, len: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        match self {
            Execution::Sequential => (0..len).map(f).collect(),
            Execution::Parallel => parallel_map(len, f),
            Execution::Workers { workers } => pooled_map(workers, len, f),
        }
    }
}

#[cfg(feature = "parallel")]
fn parallel_map<T, F>(len: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    use rayon::prelude::*;
    (0..len).into_par_iter().map(f).collect()
}

#[cfg(feature = "parallel")]
fn pooled_map<T, F>(workers: usize, len: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    match rayon::ThreadPoolBuilder::new().num_threads(workers).build() {
        Ok(pool) => pool.install(|| parallel_map(len, f)),
        Err(err) => {
            log::warn!("could not build a {workers}-thread pool ({err}); running sequentially");
            (0..len).map(f).collect()
        }
    }
}

#[cfg(not(feature = "parallel"))]
fn parallel_map<T, F>(len: usize, f: F) -> Vec<T>
where
    F: Fn(usize) -> T,
{
    (0..len).map(f).collect()
}

#[cfg(not(feature = "parallel"))]
fn pooled_map<T, F>(_workers: usize, len: usize, f: F) -> Vec<T>
where
    F: Fn(usize) -> T,
{
    (0..len).map(f).collect()
}
