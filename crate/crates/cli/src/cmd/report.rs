//! Report: collect every run's aggregate JSON into one comparison table,
//! written as CSV and as a formatted text table.

use std::path::Path;

use crate::cmd::eval::RunAggregates;
use crate::config::PipelineConfig;
use crate::error::{CliError, Result};

pub fn run(config: &PipelineConfig) -> Result<()> {
    let dir = config.report_dir();
    let runs = collect_runs(&dir)?;
    if runs.is_empty() {
        return Err(CliError::Data(format!(
            "no aggregate_*.json files under {}; run `eval` first",
            dir.display()
        )));
    }
    let csv_path = dir.join("report.csv");
    let txt_path = dir.join("report.txt");
    write_csv(&csv_path, &runs)?;
    let table = render_table(&runs);
    std::fs::write(&txt_path, &table)?;
    print!("{table}");
    println!("report: {} runs -> {}, {}", runs.len(), csv_path.display(), txt_path.display());
    Ok(())
}

/// Runs ordered baseline-first, then by ascending filter threshold.
pub fn collect_runs(dir: &Path) -> Result<Vec<RunAggregates>> {
    let mut runs = Vec::new();
    if !dir.exists() {
        return Ok(runs);
    }
    for entry in std::fs::read_dir(dir)? {
        let path = entry?.path();
        let Some(name) = path.file_name().and_then(|n| n.to_str()) else { continue };
        if name.starts_with("aggregate_") && name.ends_with(".json") {
            let bytes = std::fs::read(&path)?;
            runs.push(serde_json::from_slice::<RunAggregates>(&bytes)?);
        }
    }
    runs.sort_by(|a, b| {
        let key = |r: &RunAggregates| (r.ssim_filter_threshold.is_some(), r.ssim_filter_threshold.unwrap_or(0.0), r.stage);
        key(a).partial_cmp(&key(b)).unwrap()
    });
    Ok(runs)
}

fn run_name(r: &RunAggregates) -> String {
    match r.ssim_filter_threshold {
        Some(t) => format!("stage {} filter SSIM >= {t}", r.stage),
        None => format!("stage {} baseline", r.stage),
    }
}

fn write_csv(path: &Path, runs: &[RunAggregates]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "run",
        "stage",
        "ssim_filter_threshold",
        "mean_ssim",
        "median_ssim",
        "mean_rmse",
        "median_rmse",
        "count",
    ])?;
    for r in runs {
        w.write_record([
            run_name(r),
            r.stage.to_string(),
            r.ssim_filter_threshold.map(|t| t.to_string()).unwrap_or_default(),
            format!("{}", r.stats.mean_ssim),
            format!("{}", r.stats.median_ssim),
            format!("{}", r.stats.mean_rmse),
            format!("{}", r.stats.median_rmse),
            r.stats.count.to_string(),
        ])?;
    }
    w.flush().map_err(|e| CliError::Data(e.to_string()))?;
    Ok(())
}

fn render_table(runs: &[RunAggregates]) -> String {
    let name_width = runs
        .iter()
        .map(|r| run_name(r).len())
        .chain(["Run".len()])
        .max()
        .unwrap_or(3);
    let mut out = String::new();
    let header = format!(
        "{:<name_width$}  {:>10} {:>12} {:>10} {:>12} {:>6}\n",
        "Run", "Mean SSIM", "Median SSIM", "Mean RMSE", "Median RMSE", "N"
    );
    let rule = "-".repeat(header.len() - 1);
    out.push_str(&header);
    out.push_str(&rule);
    out.push('\n');
    for r in runs {
        out.push_str(&format!(
            "{:<name_width$}  {:>10.4} {:>12.4} {:>10.4} {:>12.4} {:>6}\n",
            run_name(r),
            r.stats.mean_ssim,
            r.stats.median_ssim,
            r.stats.mean_rmse,
            r.stats.median_rmse,
            r.stats.count
        ));
    }
    out
}
