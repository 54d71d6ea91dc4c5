//! Adversarial training loop: alternate discriminator and generator updates
//! over shuffled mini-batches, with periodic checkpoints and a CSV loss log.

use std::fs::File;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::adam::{Adam, AdamConfig};
use crate::checkpoint::ModelCheckpoint;
use crate::data::{batch_tensors, TensorPair};
use crate::discriminator::{Discriminator, DiscriminatorConfig};
use crate::error::{GanError, Result};
use crate::generator::{Generator, GeneratorConfig};
use crate::loss::{bce_with_logits_grad, discriminator_loss, generator_loss, l1_loss_grad};
use crate::scalar::NnScalar;

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct TrainingStageConfig {
    pub stage: u32,
    pub steps: u64,
    pub batch_size: usize,
    pub lambda: f64,
    pub generator: GeneratorConfig,
    pub discriminator: DiscriminatorConfig,
    pub gen_optimizer: AdamConfig,
    pub disc_optimizer: AdamConfig,
    pub seed: u64,
    pub checkpoint_every: u64,
    /// Generator total loss above this, or any non-finite loss, aborts.
    pub divergence_threshold: f64,
}

impl Default for TrainingStageConfig {
    fn default() -> Self {
        Self {
            stage: 1,
            steps: 2000,
            batch_size: 4,
            lambda: 100.0,
            generator: GeneratorConfig::default(),
            discriminator: DiscriminatorConfig::default(),
            gen_optimizer: AdamConfig::default(),
            disc_optimizer: AdamConfig::default(),
            seed: 0,
            checkpoint_every: 500,
            divergence_threshold: 1e4,
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct StepLosses {
    pub step: u64,
    pub gen_total: f64,
    pub gen_adversarial: f64,
    pub gen_l1: f64,
    pub disc_total: f64,
    pub disc_real: f64,
    pub disc_fake: f64,
}

pub struct Trainer<T: NnScalar> {
    pub generator: Generator<T>,
    pub discriminator: Discriminator<T>,
    pub gen_opt: Adam,
    pub disc_opt: Adam,
    pub lambda: T,
}

impl<T: NnScalar> Trainer<T> {
    pub fn new(config: &TrainingStageConfig) -> Self {
        Self {
            generator: Generator::new(config.generator.clone(), config.seed ^ 0x67656e),
            discriminator: Discriminator::new(config.discriminator.clone(), config.seed ^ 0x64697363),
            gen_opt: Adam::new(config.gen_optimizer),
            disc_opt: Adam::new(config.disc_optimizer),
            lambda: T::from_f64_lossy(config.lambda),
        }
    }

    /// Restores weights and optimizer moments from a checkpoint but takes
    /// hyperparameters (learning rates, lambda) from `config`, so a later
    /// stage can fine-tune at its own settings.
    pub fn from_checkpoint(ckpt: &ModelCheckpoint, config: &TrainingStageConfig) -> Result<Self> {
        let (mut gen_opt, mut disc_opt) = ckpt.restore_optimizers();
        gen_opt.config = config.gen_optimizer;
        disc_opt.config = config.disc_optimizer;
        Ok(Self {
            generator: ckpt.restore_generator()?,
            discriminator: ckpt.restore_discriminator()?,
            gen_opt,
            disc_opt,
            lambda: T::from_f64_lossy(config.lambda),
        })
    }

    /// One paired update: discriminator first on real and detached fake,
    /// then the generator through a fresh discriminator pass.
    pub fn step(
        &mut self,
        rgb: &ndarray::Array4<T>,
        dem: &ndarray::Array4<T>,
        step: u64,
        rng: &mut ChaCha8Rng,
    ) -> StepLosses {
        let fake = self.generator.forward(rgb, Some(rng));

        // discriminator update
        let real_logits = self.discriminator.forward(rgb, dem);
        let d_real = bce_with_logits_grad(&real_logits, T::one());
        self.discriminator.backward(&d_real);
        let fake_logits = self.discriminator.forward(rgb, &fake);
        let d_fake = bce_with_logits_grad(&fake_logits, T::zero());
        self.discriminator.backward(&d_fake);
        let (disc_total, disc_real, disc_fake) = discriminator_loss(&real_logits, &fake_logits);
        self.disc_opt.step(&mut self.discriminator.params_mut());
        self.discriminator.zero_grad();

        // generator update through the just-updated discriminator
        let gen_logits = self.discriminator.forward(rgb, &fake);
        let (gen_total, gen_adv, gen_l1) = generator_loss(&gen_logits, &fake, dem, self.lambda);
        let dlogits = bce_with_logits_grad(&gen_logits, T::one());
        let (_, d_dem) = self.discriminator.backward(&dlogits);
        let mut d_out = l1_loss_grad(&fake, dem);
        d_out.mapv_inplace(|v| v * self.lambda);
        d_out += &d_dem;
        self.generator.backward(&d_out);
        self.gen_opt.step(&mut self.generator.params_mut());
        self.generator.zero_grad();
        self.discriminator.zero_grad();

        StepLosses {
            step,
            gen_total: gen_total.to_f64_lossy(),
            gen_adversarial: gen_adv.to_f64_lossy(),
            gen_l1: gen_l1.to_f64_lossy(),
            disc_total: disc_total.to_f64_lossy(),
            disc_real: disc_real.to_f64_lossy(),
            disc_fake: disc_fake.to_f64_lossy(),
        }
    }
}

pub struct TrainOutcome {
    pub checkpoint: ModelCheckpoint,
    pub losses: Vec<StepLosses>,
}

/// Runs one full training stage over preprocessed pairs. `resume` continues
/// from an earlier checkpoint (stage advance or restart); `checkpoint_path`
/// receives periodic and final snapshots.
pub fn train_stage<T: NnScalar>(
    pairs: &[TensorPair<T>],
    config: &TrainingStageConfig,
    resume: Option<&ModelCheckpoint>,
    test_split_hash: Option<String>,
    checkpoint_path: Option<&Path>,
    loss_log_path: Option<&Path>,
) -> Result<TrainOutcome> {
    if pairs.is_empty() {
        return Err(GanError::EmptyDataset);
    }
    let mut trainer = match resume {
        Some(ckpt) => Trainer::from_checkpoint(ckpt, config)?,
        None => Trainer::new(config),
    };
    let test_split_hash =
        test_split_hash.or_else(|| resume.and_then(|c| c.test_split_hash.clone()));
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..pairs.len()).collect();
    let mut cursor = order.len(); // force an initial shuffle
    let mut losses = Vec::with_capacity(config.steps as usize);
    let mut log = match loss_log_path {
        Some(p) => Some(csv::Writer::from_writer(File::create(p)?)),
        None => None,
    };

    for step in 1..=config.steps {
        let batch: Vec<&TensorPair<T>> = (0..config.batch_size)
            .map(|_| {
                if cursor >= order.len() {
                    order.shuffle(&mut rng);
                    cursor = 0;
                }
                let p = &pairs[order[cursor]];
                cursor += 1;
                p
            })
            .collect();
        let (rgb, dem) = batch_tensors(&batch)?;
        let l = trainer.step(&rgb, &dem, step, &mut rng);
        let finite = l.gen_total.is_finite() && l.disc_total.is_finite();
        if !finite || l.gen_total > config.divergence_threshold {
            return Err(GanError::Divergence {
                step,
                detail: format!(
                    "gen_total={:.4e} disc_total={:.4e}",
                    l.gen_total, l.disc_total
                ),
            });
        }
        if let Some(w) = log.as_mut() {
            w.serialize(l)?;
        }
        losses.push(l);

        let due = config.checkpoint_every > 0 && step % config.checkpoint_every == 0;
        if due || step == config.steps {
            let ckpt = ModelCheckpoint::capture(
                &mut trainer.generator,
                &mut trainer.discriminator,
                &trainer.gen_opt,
                &trainer.disc_opt,
                config.lambda,
                config.stage,
                step,
                test_split_hash.clone(),
            );
            if let Some(p) = checkpoint_path {
                ckpt.save(p)?;
            }
            if step == config.steps {
                if let Some(w) = log.as_mut() {
                    w.flush()?;
                }
                return Ok(TrainOutcome { checkpoint: ckpt, losses });
            }
        }
    }
    unreachable!("loop returns on the final step");
}

/// Default checkpoint file name for a stage under a work directory.
pub fn stage_checkpoint_path(dir: &Path, stage: u32) -> PathBuf {
    dir.join(format!("stage{stage}.ckpt.json"))
}
