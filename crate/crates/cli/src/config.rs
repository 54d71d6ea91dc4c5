//! Pipeline configuration, read from a single TOML file. Every field has a
//! default so a minimal config only names the work directory.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use rgb2dem_core::raster::StretchParams;

use crate::error::{CliError, Result};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    /// Single root seed; every module derives its own stream from it.
    #[serde(default = "default_seed")]
    pub root_seed: u64,
    /// All pipeline artifacts live under this directory.
    pub work_dir: PathBuf,
    #[serde(default)]
    pub sites: SitesConfig,
    #[serde(default)]
    pub build: BuildConfig,
    #[serde(default)]
    pub curate: CurateConfig,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub eval: EvalConfig,
}

fn default_seed() -> u64 {
    42
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SitesConfig {
    /// CSV of `lat,lon,cloud_fraction` rows; required by the `sites` command.
    pub cloud_grid: Option<PathBuf>,
    pub k: usize,
    pub batch_size: usize,
    pub buffer_degrees: f64,
}

impl SitesConfig {
    fn defaults() -> Self {
        Self {
            cloud_grid: None,
            k: 100,
            batch_size: 100,
            buffer_degrees: rgb2dem_core::sites::DEFAULT_BUFFER_DEGREES,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BuildSource {
    /// Procedurally generated terrain pairs, for desk-scale runs.
    Synthetic,
    /// A local scene catalog (JSON index referencing GeoTIFFs).
    Catalog,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BuildConfig {
    pub source: BuildSource,
    pub catalog: Option<PathBuf>,
    /// Synthetic-corpus size.
    pub count: usize,
    pub tile_size: usize,
    /// Scenes at or above this cloud-cover percentage are dropped.
    pub cloud_threshold: f64,
    pub stretch: StretchParams,
}

impl Default for BuildConfig {
    fn default() -> Self {
        Self {
            source: BuildSource::Synthetic,
            catalog: None,
            count: 300,
            tile_size: 64,
            cloud_threshold: 20.0,
            stretch: StretchParams {
                // integer output levels so the diversity filter sees
                // 8-bit histograms, as it would on real imagery
                strict_jpeg_rounding: true,
                ..StretchParams::default()
            },
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CurateConfig {
    pub min_unique_values: usize,
    pub max_dominant_share: f64,
    pub dominant_per_band: bool,
    pub train_fraction: f64,
    pub val_fraction: f64,
    pub test_fraction: f64,
}

impl Default for CurateConfig {
    fn default() -> Self {
        Self {
            min_unique_values: 20,
            max_dominant_share: 0.20,
            dominant_per_band: false,
            train_fraction: 0.8,
            val_fraction: 0.1,
            test_fraction: 0.1,
        }
    }
}

/// Per-stage training knobs. Fields omitted inside a `[train.stageN]` table
/// fall back to the stage-1 defaults, so set `learning_rate` explicitly when
/// partially overriding stage 2.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StageConfig {
    pub steps: u64,
    pub batch_size: usize,
    pub lambda: f64,
    pub learning_rate: f64,
    pub depth: usize,
    pub base_channels: usize,
    pub disc_base_channels: usize,
    pub dropout: f64,
    pub checkpoint_every: u64,
    pub divergence_threshold: f64,
    /// Stage-2 refinement threshold; pairs whose stage-1 SSIM falls below it
    /// are dropped from the training split.
    pub ssim_filter_threshold: Option<f64>,
}

impl StageConfig {
    fn stage1() -> Self {
        Self {
            steps: 5000,
            batch_size: 4,
            lambda: 100.0,
            learning_rate: 2e-4,
            depth: 4,
            base_channels: 16,
            disc_base_channels: 16,
            dropout: 0.5,
            checkpoint_every: 500,
            divergence_threshold: 1e4,
            ssim_filter_threshold: None,
        }
    }

    fn stage2() -> Self {
        Self { learning_rate: 1e-4, ssim_filter_threshold: Some(0.2), ..Self::stage1() }
    }
}

impl Default for StageConfig {
    fn default() -> Self {
        Self::stage1()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    #[serde(default = "StageConfig::stage1")]
    pub stage1: StageConfig,
    #[serde(default = "StageConfig::stage2")]
    pub stage2: StageConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { stage1: StageConfig::stage1(), stage2: StageConfig::stage2() }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    pub clusters: usize,
    pub histogram_bins: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self { clusters: 4, histogram_bins: 20 }
    }
}

impl Default for SitesConfig {
    fn default() -> Self {
        Self::defaults()
    }
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        let config: Self =
            toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        let c = &self.curate;
        let total = c.train_fraction + c.val_fraction + c.test_fraction;
        if (total - 1.0).abs() > 1e-9 {
            return Err(CliError::Config(format!("split fractions sum to {total}, expected 1")));
        }
        if !(0.0..=1.0).contains(&c.max_dominant_share) {
            return Err(CliError::Config(format!(
                "max_dominant_share {} outside [0, 1]",
                c.max_dominant_share
            )));
        }
        if !(0.0..=100.0).contains(&self.build.cloud_threshold) {
            return Err(CliError::Config(format!(
                "cloud_threshold {} outside [0, 100]",
                self.build.cloud_threshold
            )));
        }
        for (name, s) in [("stage1", &self.train.stage1), ("stage2", &self.train.stage2)] {
            if s.steps == 0 || s.batch_size == 0 {
                return Err(CliError::Config(format!("{name}: steps and batch_size must be >= 1")));
            }
            if s.depth == 0 || s.base_channels == 0 {
                return Err(CliError::Config(format!("{name}: depth and base_channels must be >= 1")));
            }
            if !(0.0..1.0).contains(&s.dropout) {
                return Err(CliError::Config(format!("{name}: dropout {} outside [0, 1)", s.dropout)));
            }
            if let Some(t) = s.ssim_filter_threshold {
                if !(-1.0..=1.0).contains(&t) {
                    return Err(CliError::Config(format!(
                        "{name}: ssim_filter_threshold {t} outside [-1, 1]"
                    )));
                }
            }
        }
        if self.build.source == BuildSource::Synthetic {
            if self.build.count == 0 {
                return Err(CliError::Config("build.count must be >= 1".into()));
            }
            let step = 1usize << self.train.stage1.depth.max(self.train.stage2.depth);
            if self.build.tile_size % step != 0 {
                return Err(CliError::Config(format!(
                    "tile_size {} not divisible by 2^depth = {step}",
                    self.build.tile_size
                )));
            }
        }
        Ok(())
    }

    pub fn manifest_path(&self) -> PathBuf {
        self.work_dir.join("manifest.ndjson")
    }

    pub fn tiles_dir(&self) -> PathBuf {
        self.work_dir.join("tiles")
    }

    pub fn checkpoint_dir(&self) -> PathBuf {
        self.work_dir.join("checkpoints")
    }

    pub fn report_dir(&self) -> PathBuf {
        self.work_dir.join("reports")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_parses_with_defaults() {
        let c: PipelineConfig = toml::from_str("work_dir = \"out\"").unwrap();
        c.validate().unwrap();
        assert_eq!(c.root_seed, 42);
        assert_eq!(c.build.count, 300);
        assert_eq!(c.train.stage1.learning_rate, 2e-4);
        assert_eq!(c.train.stage2.learning_rate, 1e-4);
        assert_eq!(c.train.stage2.ssim_filter_threshold, Some(0.2));
    }

    #[test]
    fn bad_fractions_rejected() {
        let c: PipelineConfig =
            toml::from_str("work_dir = \"out\"\n[curate]\ntrain_fraction = 0.9").unwrap();
        assert!(c.validate().is_err());
    }

    #[test]
    fn unknown_keys_rejected() {
        let r: std::result::Result<PipelineConfig, _> =
            toml::from_str("work_dir = \"out\"\nbogus = 1");
        assert!(r.is_err());
    }
}
