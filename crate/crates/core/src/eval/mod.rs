//! Monte-Carlo evaluation: consistency and conservativeness statistics,
//! aggregation across runs, and CSV / SVG artifacts.

mod aggregate;
mod montecarlo;
mod output;
mod plot;
mod stats;

pub use aggregate::{Aggregate, EstimatorAggregate, RobotAggregate};
pub use montecarlo::{monte_carlo, seed_range, threads_from_env, Execution, THREADS_ENV};
pub use output::{write_csvs, NEES_CONFIDENCE};
pub use plot::{line_chart, write_plots};
pub use stats::{conservativeness, nees, nees_bounds, rmse};
