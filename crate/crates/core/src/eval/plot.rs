//! Static SVG figures. These are conveniences; the CSV files are the record.

use std::path::{Path, PathBuf};

use plotters::prelude::*;

use super::{nees_bounds, Aggregate};
use crate::error::{Error, Result};

type Series = (String, Vec<(f64, f64)>);

fn plot_err<E: std::fmt::Display>(e: E) -> Error {
    Error::Io(std::io::Error::other(e.to_string()))
}

/// Line chart of several series sharing one time axis.
pub fn line_chart(path: &Path, title: &str, y_label: &str, series: &[Series]) -> Result<()> {
    let points = series.iter().flat_map(|(_, s)| s.iter()).filter(|p| p.1.is_finite());
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in points {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    if !x0.is_finite() {
        return Ok(());
    }
    if x1 <= x0 {
        x1 = x0 + 1.0;
    }
    let pad = ((y1 - y0).abs() * 0.05).max(1e-9);
    let root = SVGBackend::new(path, (900, 520)).into_drawing_area();
    root.fill(&WHITE).map_err(plot_err)?;
    let mut chart = ChartBuilder::on(&root)
        .caption(title, ("sans-serif", 22))
        .margin(12)
        .x_label_area_size(40)
        .y_label_area_size(70)
        .build_cartesian_2d(x0..x1, (y0 - pad)..(y1 + pad))
        .map_err(plot_err)?;
    chart
        .configure_mesh()
        .x_desc("time [s]")
        .y_desc(y_label)
        .draw()
        .map_err(plot_err)?;
    for (i, (name, s)) in series.iter().enumerate() {
        let color = Palette99::pick(i).to_rgba();
        chart
            .draw_series(LineSeries::new(s.iter().copied().filter(|p| p.1.is_finite()), color.stroke_width(2)))
            .map_err(plot_err)?
            .label(name.clone())
            .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 16, y)], color.stroke_width(2)));
    }
    chart
        .configure_series_labels()
        .background_style(WHITE.mix(0.8))
        .border_style(BLACK)
        .draw()
        .map_err(plot_err)?;
    root.present().map_err(plot_err)?;
    Ok(())
}

/// NEES, conservativeness, deflation and RMSE figures for `estimator`.
pub fn write_plots(agg: &Aggregate, estimator: &str, dir: &Path) -> Result<Vec<PathBuf>> {
    let e = agg
        .estimator(estimator)
        .ok_or_else(|| Error::Config(format!("no estimator {estimator} to plot")))?;
    let m = agg.runs;
    let steps = 0..agg.num_steps();
    let per_robot = |f: &dyn Fn(usize, usize) -> Option<f64>| -> Vec<Series> {
        agg.robots
            .iter()
            .enumerate()
            .map(|(r, id)| {
                let pts = steps.clone().filter_map(|k| f(k, r).map(|v| (agg.time(k), v))).collect();
                (format!("robot {id}"), pts)
            })
            .collect()
    };
    let mut written = Vec::new();

    let mut nees = per_robot(&|k, r| Some(e.nees_mean(k, r, m) / e.steps[k][r].dim as f64));
    if let Some(first) = e.steps.first().and_then(|row| row.first()) {
        let (lo, hi) = nees_bounds(m, first.dim, super::NEES_CONFIDENCE)?;
        let span = (agg.time(0), agg.time(agg.num_steps().saturating_sub(1)));
        let d = first.dim as f64;
        nees.push(("lower bound / n (robot 1)".into(), vec![(span.0, lo / d), (span.1, lo / d)]));
        nees.push(("upper bound / n (robot 1)".into(), vec![(span.0, hi / d), (span.1, hi / d)]));
    }
    let path = dir.join("nees.svg");
    line_chart(&path, &format!("{estimator}: averaged NEES / n"), "NEES / n", &nees)?;
    written.push(path);

    let path = dir.join("conservativeness.svg");
    line_chart(&path, &format!("{estimator}: min eig(Σ − Σ_cent)"), "min eigenvalue", &per_robot(&|k, r| Some(e.min_eig_mean(k, r, m))))?;
    written.push(path);

    let lambda = per_robot(&|k, r| e.lambda_mean(k, r));
    if lambda.iter().any(|(_, s)| !s.is_empty()) {
        let path = dir.join("lambda.svg");
        line_chart(&path, &format!("{estimator}: deflation constant"), "λ", &lambda)?;
        written.push(path);
    }

    let path = dir.join("rmse.svg");
    line_chart(&path, &format!("{estimator}: RMSE of first group"), "RMSE", &per_robot(&|k, r| Some(e.group_rmse(k, r, 0, m).0)))?;
    written.push(path);
    Ok(written)
}
