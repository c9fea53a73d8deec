//! SVG trace and volatility-band plots.

use std::path::Path;

use plotters::prelude::*;

use crate::error::CliError;
use crate::io::Table;

const COLS: usize = 4;

fn plot_err<E: std::fmt::Display>(path: &Path) -> impl Fn(E) -> CliError + '_ {
    move |e| CliError::Data(format!("cannot plot {}: {e}", path.display()))
}

fn y_range<'a>(values: impl Iterator<Item = &'a f64>) -> std::ops::Range<f64> {
    let (lo, hi) = values.filter(|v| v.is_finite()).fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    if !lo.is_finite() {
        return -1.0..1.0;
    }
    let pad = ((hi - lo) * 0.05).max(1e-9);
    lo - pad..hi + pad
}

/// One panel per column of `draws`.
pub fn traces(path: &Path, draws: &Table) -> Result<(), CliError> {
    let n = draws.header.len();
    let rows = n.div_ceil(COLS).max(1);
    let err = plot_err(path);
    let root = SVGBackend::new(path, (1200, 180 * rows as u32)).into_drawing_area();
    root.fill(&WHITE).map_err(&err)?;
    let len = draws.rows.len().max(2) as f64;
    for (c, area) in root.split_evenly((rows, COLS)).iter().enumerate().take(n) {
        let trace: Vec<f64> = draws.rows.iter().map(|r| r[c]).collect();
        let mut chart = ChartBuilder::on(area)
            .caption(&draws.header[c], ("sans-serif", 14))
            .margin(6)
            .x_label_area_size(18)
            .y_label_area_size(48)
            .build_cartesian_2d(0.0..len, y_range(trace.iter()))
            .map_err(&err)?;
        chart.configure_mesh().disable_mesh().x_labels(4).y_labels(4).draw().map_err(&err)?;
        chart.draw_series(LineSeries::new(trace.iter().enumerate().map(|(i, &v)| (i as f64, v)), BLUE)).map_err(&err)?;
    }
    root.present().map_err(&err)
}

/// Posterior mean and two-sd band of every latent series in `summary`
/// (columns `<name>_mean`, `<name>_lower`, `<name>_upper`), with the true path
/// from `truth` (column `<name>`) overlaid when present.
pub fn bands(path: &Path, summary: &Table, truth: Option<&Table>) -> Result<(), CliError> {
    let names: Vec<&str> = summary.header.iter().filter_map(|h| h.strip_suffix("_mean")).collect();
    let rows = names.len().div_ceil(COLS).max(1);
    let err = plot_err(path);
    let root = SVGBackend::new(path, (1200, 200 * rows as u32)).into_drawing_area();
    root.fill(&WHITE).map_err(&err)?;
    let len = summary.rows.len().max(2) as f64;
    for (name, area) in names.iter().zip(root.split_evenly((rows, COLS)).iter()) {
        let col = |suffix: &str| summary.column(&format!("{name}_{suffix}")).unwrap_or_default();
        let (mean, lower, upper) = (col("mean"), col("lower"), col("upper"));
        let true_path = truth.and_then(|t| t.column(name));
        let range = y_range(lower.iter().chain(&upper).chain(true_path.iter().flatten()));
        let mut chart = ChartBuilder::on(area)
            .caption(*name, ("sans-serif", 14))
            .margin(6)
            .x_label_area_size(18)
            .y_label_area_size(48)
            .build_cartesian_2d(0.0..len, range)
            .map_err(&err)?;
        chart.configure_mesh().disable_mesh().x_labels(4).y_labels(4).draw().map_err(&err)?;
        let line = |v: &[f64]| v.iter().enumerate().map(|(i, &x)| (i as f64, x)).collect::<Vec<_>>();
        let band = BLUE.mix(0.35);
        chart.draw_series(LineSeries::new(line(&lower), band)).map_err(&err)?;
        chart.draw_series(LineSeries::new(line(&upper), band)).map_err(&err)?;
        chart
            .draw_series(LineSeries::new(line(&mean), BLUE))
            .map_err(&err)?
            .label("posterior mean")
            .legend(|(x, y)| PathElement::new(vec![(x, y), (x + 15, y)], BLUE));
        if let Some(tp) = true_path {
            chart
                .draw_series(LineSeries::new(line(&tp), RED))
                .map_err(&err)?
                .label("truth")
                .legend(|(x, y)| PathElement::new(vec![(x, y), (x + 15, y)], RED));
        }
        chart.configure_series_labels().background_style(WHITE.mix(0.8)).border_style(BLACK).draw().map_err(&err)?;
    }
    root.present().map_err(&err)
}
