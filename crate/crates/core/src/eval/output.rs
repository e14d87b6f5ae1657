//! CSV artifacts. Every file has a header row; rows are ordered by estimator,
//! then step, then robot, so output is a pure function of the aggregate.
//!
//! | file | columns |
//! |---|---|
//! | `estimates.csv` | estimator, step, time, robot, group, rmse, sigma |
//! | `nees.csv` | estimator, step, time, robot, dim, nees, lower, upper |
//! | `conservativeness.csv` | estimator, step, time, robot, min_eig_mean, min_eig_min |
//! | `lambda.csv` | estimator, step, time, robot, lambda_mean, psd_margin_min |
//! | `comm_bytes.csv` | estimator, robot, bytes_per_run, bytes_per_step |
//! | `rmse_summary.csv` | estimator, robot, group, rmse, sigma |
//! | `delivery.csv` | timestep, sender, recipient, delivered, bytes |

use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::{nees_bounds, Aggregate};
use crate::error::Result;
use crate::network::write_delivery_csv;

pub const NEES_CONFIDENCE: f64 = 0.95;

#[derive(Serialize)]
struct EstimateRow<'a> {
    estimator: &'a str,
    step: usize,
    time: f64,
    robot: u32,
    group: &'a str,
    rmse: f64,
    sigma: f64,
}

#[derive(Serialize)]
struct NeesRow<'a> {
    estimator: &'a str,
    step: usize,
    time: f64,
    robot: u32,
    dim: usize,
    nees: f64,
    lower: f64,
    upper: f64,
}

#[derive(Serialize)]
struct ConservativenessRow<'a> {
    estimator: &'a str,
    step: usize,
    time: f64,
    robot: u32,
    min_eig_mean: f64,
    min_eig_min: f64,
}

#[derive(Serialize)]
struct LambdaRow<'a> {
    estimator: &'a str,
    step: usize,
    time: f64,
    robot: u32,
    lambda_mean: f64,
    psd_margin_min: f64,
}

#[derive(Serialize)]
struct BytesRow<'a> {
    estimator: &'a str,
    robot: u32,
    bytes_per_run: f64,
    bytes_per_step: f64,
}

#[derive(Serialize)]
struct SummaryRow<'a> {
    estimator: &'a str,
    robot: u32,
    group: &'a str,
    rmse: f64,
    sigma: f64,
}

fn writer(dir: &Path, name: &str) -> Result<csv::Writer<BufWriter<File>>> {
    Ok(csv::Writer::from_writer(BufWriter::new(File::create(dir.join(name))?)))
}

/// Writes every CSV artifact into `dir` and returns the paths written.
pub fn write_csvs(agg: &Aggregate, dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let m = agg.runs;
    let mut est = writer(dir, "estimates.csv")?;
    let mut nees = writer(dir, "nees.csv")?;
    let mut cons = writer(dir, "conservativeness.csv")?;
    let mut lam = writer(dir, "lambda.csv")?;
    let bounds: Vec<(f64, f64)> = agg.estimators[0].steps[0]
        .iter()
        .map(|r| nees_bounds(m, r.dim, NEES_CONFIDENCE))
        .collect::<Result<_>>()?;

    for e in &agg.estimators {
        let label = e.label.as_str();
        for (step, row) in e.steps.iter().enumerate() {
            let time = agg.time(step);
            for (r, a) in row.iter().enumerate() {
                let robot = agg.robots[r];
                for (g, name) in agg.group_labels[r].iter().enumerate() {
                    let (rmse, sigma) = e.group_rmse(step, r, g, m);
                    est.serialize(EstimateRow { estimator: label, step, time, robot, group: name, rmse, sigma })?;
                }
                let (lower, upper) = if a.dim == row_dim(agg, r) { bounds[r] } else { nees_bounds(m, a.dim, NEES_CONFIDENCE)? };
                nees.serialize(NeesRow {
                    estimator: label,
                    step,
                    time,
                    robot,
                    dim: a.dim,
                    nees: e.nees_mean(step, r, m),
                    lower,
                    upper,
                })?;
                cons.serialize(ConservativenessRow {
                    estimator: label,
                    step,
                    time,
                    robot,
                    min_eig_mean: e.min_eig_mean(step, r, m),
                    min_eig_min: a.min_eig_min,
                })?;
                if let Some(lambda_mean) = e.lambda_mean(step, r) {
                    lam.serialize(LambdaRow {
                        estimator: label,
                        step,
                        time,
                        robot,
                        lambda_mean,
                        psd_margin_min: a.psd_margin_min,
                    })?;
                }
            }
        }
    }
    for w in [&mut est, &mut nees, &mut cons, &mut lam] {
        w.flush()?;
    }

    let mut bytes = writer(dir, "comm_bytes.csv")?;
    let mut summary = writer(dir, "rmse_summary.csv")?;
    let steps = agg.num_steps().max(1) as f64;
    for e in &agg.estimators {
        for (r, per_run) in e.bytes_per_run(m).into_iter().enumerate() {
            bytes.serialize(BytesRow {
                estimator: &e.label,
                robot: agg.robots[r],
                bytes_per_run: per_run,
                bytes_per_step: per_run / steps,
            })?;
            for (g, name) in agg.group_labels[r].iter().enumerate() {
                let (rmse, sigma) = e.time_averaged_rmse(r, g, m);
                summary.serialize(SummaryRow { estimator: &e.label, robot: agg.robots[r], group: name, rmse, sigma })?;
            }
        }
    }
    bytes.flush()?;
    summary.flush()?;

    let mut written: Vec<PathBuf> = [
        "estimates.csv",
        "nees.csv",
        "conservativeness.csv",
        "lambda.csv",
        "comm_bytes.csv",
        "rmse_summary.csv",
    ]
    .iter()
    .map(|n| dir.join(n))
    .collect();
    if let Some(e) = agg.estimators.iter().find(|e| !e.deliveries.is_empty()) {
        let path = dir.join("delivery.csv");
        write_delivery_csv(BufWriter::new(File::create(&path)?), &e.deliveries)?;
        written.push(path);
    }
    Ok(written)
}

fn row_dim(agg: &Aggregate, robot: usize) -> usize {
    agg.estimators[0].steps[0][robot].dim
}
