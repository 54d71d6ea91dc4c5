//! Training driver. Stage 1 trains from scratch on the full train split;
//! stage 2 resumes from the stage-1 checkpoint, optionally dropping train
//! pairs whose stage-1 SSIM falls below the refinement threshold.

use std::collections::HashMap;

use rgb2dem_core::curation::{filter_training_by_ssim, write_audit_csv, Split};
use rgb2dem_core::seed::derive_seed;
use rgb2dem_core::ValueDomain;
use rgb2dem_gan::checkpoint::{hash_pair_ids, ModelCheckpoint};
use rgb2dem_gan::data::load_split_pairs;
use rgb2dem_gan::eval::evaluate_model;
use rgb2dem_gan::train::{stage_checkpoint_path, train_stage, TrainingStageConfig};
use rgb2dem_gan::{AdamConfig, DiscriminatorConfig, GeneratorConfig};

use crate::cmd::{load_manifest, RunMeta};
use crate::config::{PipelineConfig, StageConfig};
use crate::error::{CliError, Result};
use crate::lock::ManifestLock;

fn stage_training_config(config: &PipelineConfig, s: &StageConfig, stage: u32) -> TrainingStageConfig {
    TrainingStageConfig {
        stage,
        steps: s.steps,
        batch_size: s.batch_size,
        lambda: s.lambda,
        generator: GeneratorConfig {
            in_channels: 3,
            out_channels: 1,
            depth: s.depth,
            base_channels: s.base_channels,
            dropout: s.dropout,
        },
        discriminator: DiscriminatorConfig {
            rgb_channels: 3,
            dem_channels: 1,
            base_channels: s.disc_base_channels,
            kernel: 4,
        },
        gen_optimizer: AdamConfig { learning_rate: s.learning_rate, ..AdamConfig::default() },
        disc_optimizer: AdamConfig { learning_rate: s.learning_rate, ..AdamConfig::default() },
        seed: derive_seed(config.root_seed, &format!("train/stage{stage}")),
        checkpoint_every: s.checkpoint_every,
        divergence_threshold: s.divergence_threshold,
    }
}

pub fn run(config: &PipelineConfig, stage: u32, ssim_filter: Option<f64>) -> Result<()> {
    let stage_cfg = match stage {
        1 => &config.train.stage1,
        2 => &config.train.stage2,
        other => return Err(CliError::Config(format!("stage must be 1 or 2, got {other}"))),
    };
    let _lock = ManifestLock::acquire(&config.manifest_path())?;
    let mut manifest = load_manifest(&config.manifest_path())?;
    if manifest.usable().all(|e| e.split.is_none()) {
        return Err(CliError::Data("manifest has no split assignments; run `curate` first".into()));
    }
    std::fs::create_dir_all(config.checkpoint_dir())?;
    std::fs::create_dir_all(config.report_dir())?;

    let test_ids: Vec<String> = manifest
        .split_entries(Split::Test)
        .iter()
        .map(|e| e.pair_id.clone())
        .collect();
    let test_hash = hash_pair_ids(&test_ids);

    let threshold = ssim_filter.or(stage_cfg.ssim_filter_threshold).filter(|_| stage == 2);
    let resume = if stage == 2 {
        let stage1_path = stage_checkpoint_path(&config.checkpoint_dir(), 1);
        if !stage1_path.exists() {
            return Err(CliError::Data(format!(
                "stage 2 requires the stage-1 checkpoint at {}; run `train --stage 1` first",
                stage1_path.display()
            )));
        }
        let ckpt = ModelCheckpoint::load(&stage1_path)?;
        if ckpt.test_split_hash.as_deref() != Some(test_hash.as_str()) {
            return Err(CliError::Data(
                "test split changed since stage 1; rebuild or re-run stage 1".into(),
            ));
        }
        Some(ckpt)
    } else {
        None
    };

    let mut removed_pairs = 0;
    if let Some(t) = threshold {
        let resume_ckpt = resume.as_ref().expect("stage 2 checked above");
        // score the train split with the stage-1 generator, persist the
        // scores, then drop everything below threshold
        let mut generator = resume_ckpt.restore_generator::<f32>()?;
        let train_pairs = load_split_pairs(
            &manifest,
            Split::Train,
            &config.work_dir,
            ValueDomain::Jpeg0To255,
        )?;
        let records = evaluate_model(&mut generator, &train_pairs)?;
        let scores: HashMap<&str, f64> =
            records.iter().map(|r| (r.pair_id.as_str(), r.ssim)).collect();
        for e in &mut manifest.entries {
            if e.split == Some(Split::Train) {
                e.ssim_score = scores.get(e.pair_id.as_str()).copied();
            }
        }
        let removed = filter_training_by_ssim(&mut manifest, t)?;
        removed_pairs = removed.len();
        manifest.save(config.manifest_path())?;
        write_audit_csv(
            config.report_dir().join("refinement_audit.csv"),
            &format!("ssim_below_{t}"),
            &removed,
        )?;
        println!("train: refinement filter (>= {t}) removed {removed_pairs} train pairs");
    }

    let pairs = load_split_pairs(&manifest, Split::Train, &config.work_dir, ValueDomain::Jpeg0To255)?;
    if pairs.is_empty() {
        return Err(CliError::Data("train split is empty".into()));
    }
    let train_cfg = stage_training_config(config, stage_cfg, stage);
    let ckpt_path = stage_checkpoint_path(&config.checkpoint_dir(), stage);
    let loss_log = config.report_dir().join(format!("loss_stage{stage}.csv"));
    let outcome = train_stage(
        &pairs,
        &train_cfg,
        resume.as_ref(),
        Some(test_hash),
        Some(&ckpt_path),
        Some(&loss_log),
    )?;

    RunMeta {
        stage,
        ssim_filter_threshold: threshold,
        steps: train_cfg.steps,
        train_size: pairs.len(),
        removed_pairs,
    }
    .save(&config.checkpoint_dir().join(format!("stage{stage}.meta.json")))?;

    let last = outcome.losses.last().expect("at least one step");
    println!(
        "train: stage {stage} done after {} steps on {} pairs; final gen loss {:.4}, disc loss {:.4}",
        train_cfg.steps,
        pairs.len(),
        last.gen_total,
        last.disc_total
    );
    Ok(())
}
