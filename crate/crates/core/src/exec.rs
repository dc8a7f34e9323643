//! Sequential / data-parallel execution of independent work items.
//!
//! Every parallel map here collects results in index order, so the output of
//! a run does not depend on thread scheduling. Without the `parallel` feature
//! [`Execution::Parallel`] silently runs sequentially.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Execution {
    Sequential,
    #[default]
    Parallel,
}

impl Execution {
    /// Maps `f` over `0..len`, returning results in index order.
    pub fn map<T, F>(self, len: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        match self {
            Execution::Sequential => (0..len).map(f).collect(),
            Execution::Parallel => par_map(len, f),
        }
    }

    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Execution::Parallel
    }
}

#[cfg(feature = "parallel")]
fn par_map<T, F>(len: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    use rayon::prelude::*;
    (0..len).into_par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
fn par_map<T, F>(len: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    (0..len).map(f).collect()
}

/// Configures the global worker pool. A no-op without the `parallel` feature.
///
/// Safe to call more than once; only the first successful call takes effect.
pub fn init_thread_pool(threads: Option<usize>) {
    #[cfg(feature = "parallel")]
    {
        let threads = threads.or_else(|| {
            std::env::var("PAIC_THREADS")
                .ok()
                .and_then(|v| v.parse::<usize>().ok())
        });
        if let Some(t) = threads.filter(|&t| t > 0) {
            let _ = rayon::ThreadPoolBuilder::new().num_threads(t).build_global();
        }
    }
    #[cfg(not(feature = "parallel"))]
    let _ = threads;
}
