//! Worker pool with ordered, deterministic reductions.
//!
//! Every parallel step in the crate goes through [`Executor`]. Task results
//! are buffered and folded in task-index order, so floating-point reductions
//! come out bit-identical whatever the worker count or completion order.

use std::ops::Range;
use std::sync::atomic::{AtomicBool, Ordering};

use rayon::prelude::*;

use crate::error::{HgpError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ExecutorConfig {
    pub workers: usize,
    /// Minimum number of consecutive tasks handed to a worker at once.
    pub chunking: usize,
}

impl Default for ExecutorConfig {
    fn default() -> Self {
        Self { workers: std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1), chunking: 1 }
    }
}

impl ExecutorConfig {
    pub fn with_workers(workers: usize) -> Self {
        Self { workers, ..Self::default() }
    }
}

/// Which workers serve each node of a tree, level by level.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WorkerGroups {
    /// `levels[0]` is the root; the last level holds the leaves in depth-first order.
    pub levels: Vec<Vec<Range<usize>>>,
}

impl WorkerGroups {
    pub fn leaf_workers(&self) -> &[Range<usize>] {
        self.levels.last().map(Vec::as_slice).unwrap_or(&[])
    }

    /// Leaves grouped by the worker that runs them; each leaf goes to the
    /// first worker of its group. Workers without leaves get an empty list.
    pub fn dispatch_units(&self, workers: usize) -> Vec<Vec<usize>> {
        let mut units = vec![Vec::new(); workers.max(1)];
        for (leaf, range) in self.leaf_workers().iter().enumerate() {
            units[range.start].push(leaf);
        }
        units
    }
}

/// Splits `num_workers` into nearly equal contiguous groups, one per child,
/// recursively down the tree. Once a node has a single worker, its whole
/// subtree runs on that worker.
pub fn assign_groups(num_workers: usize, branching: &[usize]) -> WorkerGroups {
    let w = num_workers.max(1);
    let mut levels = vec![vec![0..w]];
    for &c in branching {
        let c = c.max(1);
        let parent = levels.last().unwrap();
        let mut level = Vec::with_capacity(parent.len() * c);
        for range in parent {
            let (a, n) = (range.start, range.len());
            for i in 0..c {
                let start = a + i * n / c;
                let end = (a + (i + 1) * n / c).max(start + 1);
                level.push(start..end);
            }
        }
        levels.push(level);
    }
    WorkerGroups { levels }
}

/// Fixed-size worker pool, created once and reused.
pub struct Executor {
    pool: rayon::ThreadPool,
    config: ExecutorConfig,
}

impl std::fmt::Debug for Executor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Executor").field("config", &self.config).finish()
    }
}

impl Executor {
    pub fn new(config: ExecutorConfig) -> Result<Self> {
        if config.workers == 0 {
            return Err(HgpError::Config("workers must be at least 1".into()));
        }
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(config.workers)
            .thread_name(|i| format!("hgp-worker-{i}"))
            .build()
            .map_err(|e| HgpError::Config(e.to_string()))?;
        Ok(Self { pool, config: ExecutorConfig { chunking: config.chunking.max(1), ..config } })
    }

    pub fn with_workers(workers: usize) -> Result<Self> {
        Self::new(ExecutorConfig::with_workers(workers))
    }

    pub fn workers(&self) -> usize {
        self.config.workers
    }

    pub fn config(&self) -> ExecutorConfig {
        self.config
    }

    /// Runs `task(0..n)` and returns the results in index order.
    ///
    /// After the first failure no further tasks start; the failure with the
    /// lowest index among those that ran is returned, wrapped with its index.
    pub fn map<T, F>(&self, n: usize, task: F) -> Result<Vec<T>>
    where
        T: Send,
        F: Fn(usize) -> Result<T> + Sync,
    {
        let cancelled = AtomicBool::new(false);
        let run = |i: usize| -> Option<Result<T>> {
            if cancelled.load(Ordering::Acquire) {
                return None;
            }
            let r = task(i);
            if r.is_err() {
                cancelled.store(true, Ordering::Release);
            }
            Some(r)
        };
        let slots: Vec<Option<Result<T>>> =
            self.pool.install(|| (0..n).into_par_iter().with_min_len(self.config.chunking).map(run).collect());
        collect_ordered(slots)
    }

    /// Like [`Executor::map`] but dispatches one unit per worker following
    /// `groups`: the leaves of a unit run serially on one worker.
    pub fn map_grouped<T, F>(&self, groups: &WorkerGroups, task: F) -> Result<Vec<T>>
    where
        T: Send,
        F: Fn(usize) -> Result<T> + Sync,
    {
        let n = groups.leaf_workers().len();
        let units = groups.dispatch_units(self.config.workers);
        let cancelled = AtomicBool::new(false);
        let done: Vec<Vec<(usize, Option<Result<T>>)>> = self.pool.install(|| {
            units
                .par_iter()
                .with_max_len(1)
                .map(|unit| {
                    unit.iter()
                        .map(|&i| {
                            if cancelled.load(Ordering::Acquire) {
                                return (i, None);
                            }
                            let r = task(i);
                            if r.is_err() {
                                cancelled.store(true, Ordering::Release);
                            }
                            (i, Some(r))
                        })
                        .collect()
                })
                .collect()
        });
        let mut slots: Vec<Option<Result<T>>> = (0..n).map(|_| None).collect();
        for (i, r) in done.into_iter().flatten() {
            slots[i] = r;
        }
        collect_ordered(slots)
    }

    /// Maps in parallel, then folds the buffered results in index order.
    pub fn map_reduce<T, A, F, R>(&self, n: usize, task: F, init: A, fold: R) -> Result<A>
    where
        T: Send,
        F: Fn(usize) -> Result<T> + Sync,
        R: FnMut(A, T) -> A,
    {
        Ok(self.map(n, task)?.into_iter().fold(init, fold))
    }

    /// Runs `f` inside the pool.
    pub fn install<R: Send>(&self, f: impl FnOnce() -> R + Send) -> R {
        self.pool.install(f)
    }
}

fn collect_ordered<T>(slots: Vec<Option<Result<T>>>) -> Result<Vec<T>> {
    let mut out = Vec::with_capacity(slots.len());
    let mut skipped = false;
    let mut first_err = None;
    for (i, slot) in slots.into_iter().enumerate() {
        match slot {
            Some(Ok(v)) => out.push(v),
            Some(Err(e)) => {
                first_err = Some(HgpError::Task { index: i, source: Box::new(e) });
                break;
            }
            None => skipped = true,
        }
    }
    match first_err {
        Some(e) => Err(e),
        None if skipped => Err(HgpError::Config("task skipped without a recorded failure".into())),
        None => Ok(out),
    }
}
