//! End-to-end experiment runs behind the command-line tool.

use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::eval::{monte_carlo, seed_range, threads_from_env, write_csvs, write_plots, Aggregate, Execution};
use crate::fusion::FusionAlgorithm;
use crate::scenarios::{run_cl, run_tracking, ScenarioConfig, Variant};

/// Exit status for success.
pub const EXIT_OK: i32 = 0;
/// Exit status for unusable input or I/O failure.
pub const EXIT_CONFIG: i32 = 2;
/// Exit status for a numerical failure during a run.
pub const EXIT_NUMERICAL: i32 = 3;

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) | Error::Io(_) | Error::Csv(_) => EXIT_CONFIG,
        _ => EXIT_NUMERICAL,
    }
}

/// Command-line overrides applied on top of a scenario file.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Overrides {
    pub algo: Option<FusionAlgorithm>,
    pub conservative: Option<bool>,
    pub runs: Option<usize>,
    pub seed: Option<u64>,
    pub dropout: Option<f64>,
    pub steps: Option<usize>,
}

impl Overrides {
    pub fn apply(&self, cfg: &mut ScenarioConfig) -> Result<()> {
        let r = &mut cfg.run;
        if let Some(a) = self.algo {
            r.algo = a;
        }
        if let Some(c) = self.conservative {
            r.conservative = c;
        }
        if let Some(n) = self.runs {
            r.runs = n;
        }
        if let Some(s) = self.seed {
            r.seed = s;
        }
        if let Some(p) = self.dropout {
            r.dropout = p;
        }
        if let Some(n) = self.steps {
            r.steps = n;
        }
        cfg.validate()
    }
}

/// The fusion variant described by the `[run]` table.
pub fn primary_variant(cfg: &ScenarioConfig) -> Variant {
    Variant::from_run(&cfg.run)
}

/// Runs the Monte-Carlo batch described by `cfg`. Estimators are the
/// centralized reference, the configured variant and, for cooperative
/// localization, the ego-only baseline.
pub fn execute(cfg: &ScenarioConfig, execution: Execution, threads: Option<usize>) -> Result<Aggregate> {
    cfg.validate()?;
    let variants = vec![primary_variant(cfg)];
    let seeds = seed_range(cfg.run.seed, cfg.run.runs);
    let first = seeds[0];
    let run = &cfg.run;
    match (&cfg.tracking, &cfg.cl) {
        (Some(t), _) => monte_carlo(&seeds, execution, threads, |s| run_tracking(t, run, &variants, s, s == first)),
        (_, Some(c)) => monte_carlo(&seeds, execution, threads, |s| run_cl(c, run, &variants, true, s, s == first)),
        _ => Err(Error::Config("no scenario section".into())),
    }
}

/// Loads `config`, applies `overrides`, runs the batch and writes artifacts to
/// `out`. Returns the files written.
pub fn run(config: &Path, overrides: &Overrides, out: &Path, plots: bool) -> Result<Vec<PathBuf>> {
    let mut cfg = ScenarioConfig::load(config)?;
    overrides.apply(&mut cfg)?;
    let threads = threads_from_env()?;
    let agg = execute(&cfg, Execution::Parallel, threads)?;
    let mut files = write_csvs(&agg, out)?;
    if plots {
        files.extend(write_plots(&agg, &primary_variant(&cfg).label, out)?);
    }
    Ok(files)
}
