//! The `simulate`, `fit` and `diagnose` commands.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use fmsv_core::diagnostics::{dic7, iact, summarize_trace, tnv, ChainStats};
use fmsv_core::model::simulate as simulate_panel;
use fmsv_core::samplers::{param_names, param_values, Chain, ChainDraws};
use fmsv_core::{LatentState, LoadingPrior, ModelDims};
use nalgebra::DMatrix;

use crate::config::{Manifest, RunConfig};
use crate::error::CliError;
use crate::io::{ensure_dir, num, read_panel, read_table, write_csv, write_text, Table};
use crate::plot;

fn latent_header(p: usize, k: usize) -> Vec<String> {
    let mut h: Vec<String> = (1..=p).map(|s| format!("h1_{s}")).collect();
    h.extend((1..=k).map(|j| format!("h2_{j}")));
    h.extend((1..=k).map(|j| format!("f_{j}")));
    h
}

/// Rows of `h1`, `h2`, `f` stacked, so that column `t` is one period.
fn stack(blocks: [&DMatrix<f64>; 3]) -> DMatrix<f64> {
    let rows: usize = blocks.iter().map(|b| b.nrows()).sum();
    let mut out = DMatrix::zeros(rows, blocks[0].ncols());
    let mut r = 0;
    for b in blocks {
        out.rows_mut(r, b.nrows()).copy_from(b);
        r += b.nrows();
    }
    out
}

fn matrix_rows(m: &DMatrix<f64>) -> impl Iterator<Item = Vec<String>> + '_ {
    (0..m.ncols()).map(move |t| m.column(t).iter().map(|&v| num(v)).collect())
}

pub fn simulate(config: &RunConfig, out: &Path) -> Result<(), CliError> {
    config.validate()?;
    let mut manifest = Manifest::start("simulate", config);
    let k = config.factors;
    let dims = ModelDims::new(config.design.p, k, config.design.t)?;
    let theta = config.design.theta(k)?;
    let (y, latent) = simulate_panel(dims, &theta, config.sampler.seed)?;
    ensure_dir(out)?;

    let header: Vec<String> = (1..=dims.p).map(|s| format!("y{s}")).collect();
    write_csv(&out.join("observations.csv"), &header, matrix_rows(&y))?;
    let LatentState { h1, h2, f } = &latent;
    write_csv(&out.join("latents.csv"), &latent_header(dims.p, k), matrix_rows(&stack([h1, h2, f])))?;
    let prior = LoadingPrior::default();
    let truth = vec![param_values(&theta, &prior).into_iter().map(num).collect()];
    write_csv(&out.join("truth.csv"), &param_names(dims, &prior), truth)?;
    manifest.files.extend(["observations.csv", "latents.csv", "truth.csv"].map(String::from));
    manifest.write(out)
}

pub fn fit(data: &Path, config: &RunConfig, out: &Path) -> Result<(), CliError> {
    config.validate()?;
    let mut manifest = Manifest::start("fit", config);
    let y = read_panel(data)?;
    let k = config.factors;
    if k == 0 || k > y.nrows() {
        return Err(CliError::Usage(format!("factors must lie in 1..={} for {} series (got {k})", y.nrows(), y.nrows())));
    }
    let (draws, _) = Chain::new(&y, k, config.sampler.clone())?
        .run()
        .map_err(|e| CliError::Numerical(e.to_string()))?;
    ensure_dir(out)?;
    write_fit_outputs(&draws, out, &mut manifest.files)?;
    manifest.write(out)
}

fn write_fit_outputs(draws: &ChainDraws, out: &Path, files: &mut Vec<String>) -> Result<(), CliError> {
    let rows = draws.rows().into_iter().map(|r| r.into_iter().map(num).collect());
    write_csv(&out.join("draws.csv"), &draws.names, rows)?;
    let ll = draws.loglik.iter().zip(&draws.logprior).map(|(&a, &b)| vec![num(a), num(b)]);
    write_csv(&out.join("loglik.csv"), &["loglik", "logprior"], ll)?;

    let mean = stack([draws.h1.mean(), draws.h2.mean(), draws.f.mean()]);
    let sd = stack([&draws.h1.sd(), &draws.h2.sd(), &draws.f.sd()]);
    let names = latent_header(draws.dims.p, draws.dims.k);
    let header: Vec<String> = names
        .iter()
        .flat_map(|n| ["mean", "lower", "upper"].map(|s| format!("{n}_{s}")))
        .collect();
    let rows = (0..mean.ncols()).map(|t| {
        (0..mean.nrows())
            .flat_map(|r| {
                let (m, s) = (mean[(r, t)], sd[(r, t)]);
                [num(m), num(m - 2.0 * s), num(m + 2.0 * s)]
            })
            .collect()
    });
    write_csv(&out.join("latent_summary.csv"), &header, rows)?;

    let stats = ChainStats::from_draws(draws);
    let json = serde_json::to_string_pretty(&stats).expect("stats serialize");
    write_text(&out.join("stats.json"), &json)?;
    files.extend(["draws.csv", "loglik.csv", "latent_summary.csv", "stats.json"].map(String::from));
    Ok(())
}

struct Run {
    name: String,
    dir: PathBuf,
    draws: Table,
    runtime: f64,
}

fn load_run(dir: &Path) -> Result<Run, CliError> {
    let draws = read_table(&dir.join("draws.csv"))?;
    if draws.rows.is_empty() {
        return Err(CliError::Data(format!("{}: no draws", dir.join("draws.csv").display())));
    }
    let stats_path = dir.join("stats.json");
    let runtime = match std::fs::read_to_string(&stats_path) {
        Ok(text) => serde_json::from_str::<ChainStats>(&text)
            .map_err(|e| CliError::Data(format!("{}: {e}", stats_path.display())))?
            .runtime_seconds,
        Err(_) => f64::NAN,
    };
    let name = dir.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_else(|| "run".into());
    Ok(Run { name, dir: dir.to_path_buf(), draws, runtime })
}

fn iact_mean(draws: &Table) -> f64 {
    let v: Vec<f64> = (0..draws.header.len())
        .filter_map(|c| iact(&draws.rows.iter().map(|r| r[c]).collect::<Vec<_>>()).ok())
        .collect();
    if v.is_empty() { f64::NAN } else { v.iter().sum::<f64>() / v.len() as f64 }
}

fn cell(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

/// Writes comparison tables and plots for one or more fit output directories
/// and returns the plain-text TNV table.
pub fn diagnose(runs: &[PathBuf], out: &Path, truth_latents: Option<&Path>) -> Result<String, CliError> {
    if runs.is_empty() {
        return Err(CliError::Usage("diagnose needs at least one run directory".into()));
    }
    let mut loaded: Vec<Run> = runs.iter().map(|d| load_run(d)).collect::<Result<_, _>>()?;
    let mut seen = BTreeSet::new();
    for (i, run) in loaded.iter_mut().enumerate() {
        if !seen.insert(run.name.clone()) {
            run.name = format!("{}_{}", run.name, i + 1);
            seen.insert(run.name.clone());
        }
    }
    let truth = truth_latents.map(read_table).transpose()?;
    ensure_dir(out)?;
    let mut files = Vec::new();
    let mut iact_rows = Vec::new();
    let mut summary_rows = Vec::new();
    for run in &loaded {
        for (c, name) in run.draws.header.iter().enumerate() {
            let trace: Vec<f64> = run.draws.rows.iter().map(|r| r[c]).collect();
            let s = summarize_trace(name, &trace, None)?;
            iact_rows.push(vec![run.name.clone(), name.clone(), cell(s.iact)]);
            summary_rows.push(
                [s.mean, s.sd, s.q005, s.q05, s.q50, s.q95, s.q995]
                    .into_iter()
                    .map(num)
                    .fold(vec![run.name.clone(), name.clone()], |mut row, v| {
                        row.push(v);
                        row
                    }),
            );
        }
    }
    write_csv(&out.join("iact.csv"), &["run", "param", "iact"], iact_rows)?;
    let header = ["run", "param", "mean", "sd", "q005", "q05", "q50", "q95", "q995"];
    write_csv(&out.join("summary.csv"), &header, summary_rows)?;
    files.extend(["iact.csv", "summary.csv"].map(String::from));

    let stats: Vec<(f64, f64)> = loaded.iter().map(|r| {
        let m = iact_mean(&r.draws);
        (m, tnv(m, r.runtime))
    }).collect();
    let best = stats.iter().map(|s| s.1).filter(|v| v.is_finite()).fold(f64::INFINITY, f64::min);
    let mut text = format!("{:<20} {:>12} {:>12} {:>12} {:>10}\n", "run", "time", "iact_mean", "tnv", "rel_tnv");
    let mut tnv_rows = Vec::new();
    for (run, &(m, t)) in loaded.iter().zip(&stats) {
        let rel = t / best;
        writeln!(text, "{:<20} {:>12.2} {:>12.2} {:>12.2} {:>10.2}", run.name, run.runtime, m, t, rel).unwrap();
        tnv_rows.push(vec![run.name.clone(), num(run.runtime), num(m), num(t), num(rel)]);
    }
    write_csv(&out.join("tnv.csv"), &["run", "time", "iact_mean", "tnv", "rel_tnv"], tnv_rows)?;
    files.push("tnv.csv".into());

    let mut dic_rows = Vec::new();
    for run in &loaded {
        let Ok(ll) = read_table(&run.dir.join("loglik.csv")) else { continue };
        let (Some(loglik), Some(logprior)) = (ll.column("loglik"), ll.column("logprior")) else { continue };
        let map = (0..loglik.len())
            .filter(|&i| (loglik[i] + logprior[i]).is_finite())
            .max_by(|&a, &b| (loglik[a] + logprior[a]).total_cmp(&(loglik[b] + logprior[b])));
        if let Some(map) = map {
            dic_rows.push(vec![run.name.clone(), num(dic7(&loglik, loglik[map])?)]);
        }
    }
    if !dic_rows.is_empty() {
        write_csv(&out.join("dic.csv"), &["run", "dic7"], dic_rows)?;
        files.push("dic.csv".into());
    }

    for run in &loaded {
        let trace = format!("trace_{}.svg", run.name);
        plot::traces(&out.join(&trace), &run.draws)?;
        files.push(trace);
        if let Ok(summary) = read_table(&run.dir.join("latent_summary.csv")) {
            let vol = format!("volatility_{}.svg", run.name);
            plot::bands(&out.join(&vol), &summary, truth.as_ref())?;
            files.push(vol);
        }
    }
    write_text(&out.join("tnv.txt"), &text)?;
    files.push("tnv.txt".into());
    let config = RunConfig::load(&loaded[0].dir.join("manifest.toml")).unwrap_or_default();
    let mut manifest = Manifest::start("diagnose", &config);
    manifest.files = files;
    manifest.write(out)?;
    Ok(text)
}
