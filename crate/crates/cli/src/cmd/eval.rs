//! Test-split evaluation: per-pair SSIM/RMSE records, aggregate statistics,
//! SSIM histogram, and elevation-range cluster summaries.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use rgb2dem_core::curation::Split;
use rgb2dem_core::metrics::{
    aggregate_stats, cluster_by_elevation_range, ssim_histogram, write_eval_csv,
    write_histogram_csv, AggregateStats, EvalRecord,
};
use rgb2dem_core::seed::derive_seed;
use rgb2dem_core::ValueDomain;
use rgb2dem_gan::checkpoint::{hash_pair_ids, ModelCheckpoint};
use rgb2dem_gan::data::load_split_pairs;
use rgb2dem_gan::eval::evaluate_model;
use rgb2dem_gan::train::stage_checkpoint_path;

use crate::cmd::{load_manifest, RunMeta};
use crate::config::PipelineConfig;
use crate::error::{CliError, Result};

/// One run's aggregates plus identity, the unit the report command consumes.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunAggregates {
    pub label: String,
    pub stage: u32,
    pub ssim_filter_threshold: Option<f64>,
    #[serde(flatten)]
    pub stats: AggregateStats,
}

fn pick_stage(config: &PipelineConfig, requested: Option<u32>) -> Result<u32> {
    if let Some(s) = requested {
        return Ok(s);
    }
    for stage in [2u32, 1] {
        if stage_checkpoint_path(&config.checkpoint_dir(), stage).exists() {
            return Ok(stage);
        }
    }
    Err(CliError::Data("no checkpoints found; run `train` first".into()))
}

pub fn run(config: &PipelineConfig, requested_stage: Option<u32>) -> Result<()> {
    let stage = pick_stage(config, requested_stage)?;
    let ckpt_path = stage_checkpoint_path(&config.checkpoint_dir(), stage);
    if !ckpt_path.exists() {
        return Err(CliError::Data(format!("checkpoint {} not found", ckpt_path.display())));
    }
    let ckpt = ModelCheckpoint::load(&ckpt_path)?;
    let meta = RunMeta::load(&config.checkpoint_dir().join(format!("stage{stage}.meta.json")))?;

    let manifest = load_manifest(&config.manifest_path())?;
    let test_ids: Vec<String> = manifest
        .split_entries(Split::Test)
        .iter()
        .map(|e| e.pair_id.clone())
        .collect();
    if ckpt.test_split_hash.as_deref() != Some(hash_pair_ids(&test_ids).as_str()) {
        return Err(CliError::Data(
            "test split does not match the one the checkpoint was trained against".into(),
        ));
    }

    let pairs = load_split_pairs(&manifest, Split::Test, &config.work_dir, ValueDomain::Jpeg0To255)?;
    if pairs.is_empty() {
        return Err(CliError::Data("test split is empty".into()));
    }
    let mut generator = ckpt.restore_generator::<f32>()?;
    let mut records = evaluate_model(&mut generator, &pairs)?;

    let k = config.eval.clusters.min(records.len());
    let cluster_means =
        cluster_by_elevation_range(&mut records, k, derive_seed(config.root_seed, "eval/clusters"))?;

    let label = meta.label();
    let dir = config.report_dir();
    std::fs::create_dir_all(&dir)?;
    write_eval_csv(dir.join(format!("eval_{label}.csv")), &records)?;
    let (edges, counts) = ssim_histogram(&records, config.eval.histogram_bins)?;
    write_histogram_csv(dir.join(format!("ssim_hist_{label}.csv")), &edges, &counts)?;
    write_cluster_csv(dir.join(format!("clusters_{label}.csv")), &records, &cluster_means)?;

    let stats = aggregate_stats(&records)?;
    let aggregates = RunAggregates {
        label: label.clone(),
        stage,
        ssim_filter_threshold: meta.ssim_filter_threshold,
        stats,
    };
    std::fs::write(
        dir.join(format!("aggregate_{label}.json")),
        serde_json::to_vec_pretty(&aggregates)?,
    )?;

    println!(
        "eval: {label}: {} pairs, mean SSIM {:.4}, median SSIM {:.4}, mean RMSE {:.4}",
        aggregates.stats.count,
        aggregates.stats.mean_ssim,
        aggregates.stats.median_ssim,
        aggregates.stats.mean_rmse
    );
    Ok(())
}

/// Per-cluster SSIM five-number summaries, the boxplot source data.
fn write_cluster_csv(path: PathBuf, records: &[EvalRecord], means: &[f64]) -> Result<()> {
    let mut w = csv::Writer::from_path(&path)?;
    w.write_record([
        "cluster_id",
        "mean_elevation_range",
        "count",
        "ssim_min",
        "ssim_q1",
        "ssim_median",
        "ssim_q3",
        "ssim_max",
    ])?;
    for (cid, mean_range) in means.iter().enumerate() {
        let mut ssims: Vec<f64> = records
            .iter()
            .filter(|r| r.cluster_id == Some(cid))
            .map(|r| r.ssim)
            .collect();
        ssims.sort_by(|a, b| a.total_cmp(b));
        if ssims.is_empty() {
            continue;
        }
        let q = |f: f64| {
            let rank = f * (ssims.len() - 1) as f64;
            let lo = rank.floor() as usize;
            let hi = rank.ceil() as usize;
            let frac = rank - lo as f64;
            ssims[lo] * (1.0 - frac) + ssims[hi] * frac
        };
        w.write_record([
            cid.to_string(),
            format!("{mean_range}"),
            ssims.len().to_string(),
            format!("{}", ssims[0]),
            format!("{}", q(0.25)),
            format!("{}", q(0.5)),
            format!("{}", q(0.75)),
            format!("{}", ssims[ssims.len() - 1]),
        ])?;
    }
    w.flush().map_err(|e| CliError::Data(e.to_string()))?;
    Ok(())
}
