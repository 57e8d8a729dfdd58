//! Independent jobs (seeds, modes, Monte Carlo replicas) over a thread pool
//! or in order on the calling thread.

use crate::error::Result;
use crate::harness::config::ScenarioConfig;
use crate::harness::sim::{run_episode, EpisodeTrace};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Execution {
    Sequential,
    /// Data-parallel over jobs; identical to `Sequential` without the `parallel` feature.
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

/// `jobs.map(f)`, results in job order whatever the execution.
pub fn map_jobs<I, T, F>(jobs: Vec<I>, exec: Execution, f: F) -> Vec<T>
where
    I: Send,
    T: Send,
    F: Fn(I) -> T + Sync + Send,
{
    match exec {
        #[cfg(feature = "parallel")]
        Execution::Parallel => {
            use rayon::prelude::*;
            jobs.into_par_iter().map(f).collect()
        }
        _ => jobs.into_iter().map(f).collect(),
    }
}

pub fn run_episodes(cfgs: &[ScenarioConfig], exec: Execution) -> Vec<Result<EpisodeTrace>> {
    map_jobs(cfgs.iter().collect(), exec, run_episode)
}
