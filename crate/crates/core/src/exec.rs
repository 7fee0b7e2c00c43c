//! Data-parallel map over independent work items.
//!
//! With the `parallel` feature (default) work fans out over a rayon pool;
//! without it, or with one worker, items run sequentially. Results are
//! always returned in index order, so reductions over them do not depend
//! on the worker count.

/// How many workers a batch of independent items may use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Exec {
    Sequential,
    /// Rayon's global pool.
    #[default]
    Parallel,
    Workers(usize),
}

impl Exec {
    pub fn from_workers(n: Option<usize>) -> Self {
        match n {
            None => Exec::Parallel,
            Some(0) | Some(1) => Exec::Sequential,
            Some(n) => Exec::Workers(n),
        }
    }

    /// `(0..n).map(f)` collected in order.
    pub fn map<T, F>(&self, n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        match self {
            Exec::Sequential => (0..n).map(f).collect(),
            #[cfg(feature = "parallel")]
            Exec::Parallel => {
                use rayon::prelude::*;
                (0..n).into_par_iter().map(f).collect()
            }
            #[cfg(feature = "parallel")]
            Exec::Workers(w) => {
                use rayon::prelude::*;
                match rayon::ThreadPoolBuilder::new().num_threads(*w).build() {
                    Ok(pool) => pool.install(|| (0..n).into_par_iter().map(f).collect()),
                    Err(_) => (0..n).map(f).collect(),
                }
            }
            #[cfg(not(feature = "parallel"))]
            _ => (0..n).map(f).collect(),
        }
    }
}
