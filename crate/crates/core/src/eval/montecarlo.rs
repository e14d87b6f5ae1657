use super::Aggregate;
use crate::error::{Error, Result};
use crate::scenarios::RunOutput;

/// Environment variable holding the worker thread count.
pub const THREADS_ENV: &str = "FGDDF_THREADS";

/// How Monte-Carlo runs are scheduled.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Execution {
    Sequential,
    /// Work pool over seeds; falls back to sequential without the `parallel`
    /// feature.
    #[default]
    Parallel,
}

/// Runs completed in flight before being folded into the aggregate.
const CHUNK: usize = 32;

/// Thread count from [`THREADS_ENV`], if set to a positive integer.
pub fn threads_from_env() -> Result<Option<usize>> {
    match std::env::var(THREADS_ENV) {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => Err(Error::Config(format!("{THREADS_ENV}={v:?} is not a positive integer"))),
        },
        Err(_) => Ok(None),
    }
}

/// Runs `run_one` for every seed and folds the outputs in seed order, so the
/// aggregate is the same for any schedule or thread count.
pub fn monte_carlo<F>(seeds: &[u64], execution: Execution, threads: Option<usize>, run_one: F) -> Result<Aggregate>
where
    F: Fn(u64) -> Result<RunOutput> + Sync,
{
    let mut sorted = seeds.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    if sorted.is_empty() {
        return Err(Error::Config("no Monte-Carlo runs requested".into()));
    }
    let mut agg: Option<Aggregate> = None;
    for chunk in sorted.chunks(CHUNK) {
        let outputs = match execution {
            Execution::Sequential => chunk.iter().map(|&s| run_one(s)).collect::<Result<Vec<_>>>()?,
            Execution::Parallel => run_parallel(chunk, threads, &run_one)?,
        };
        for out in &outputs {
            match agg.as_mut() {
                Some(a) => a.add(out)?,
                None => agg = Some(Aggregate::from_run(out)?),
            }
        }
    }
    Ok(agg.expect("at least one seed"))
}

#[cfg(feature = "parallel")]
fn run_parallel<F>(chunk: &[u64], threads: Option<usize>, run_one: &F) -> Result<Vec<RunOutput>>
where
    F: Fn(u64) -> Result<RunOutput> + Sync,
{
    use rayon::prelude::*;
    let work = || chunk.par_iter().map(|&s| run_one(s)).collect::<Result<Vec<_>>>();
    match threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?
            .install(work),
        None => work(),
    }
}

#[cfg(not(feature = "parallel"))]
fn run_parallel<F>(chunk: &[u64], _threads: Option<usize>, run_one: &F) -> Result<Vec<RunOutput>>
where
    F: Fn(u64) -> Result<RunOutput> + Sync,
{
    chunk.iter().map(|&s| run_one(s)).collect()
}

/// Seeds `base, base + 1, ...` for `runs` runs.
pub fn seed_range(base: u64, runs: usize) -> Vec<u64> {
    (0..runs as u64).map(|i| base.wrapping_add(i)).collect()
}
