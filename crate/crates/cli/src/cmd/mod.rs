pub mod build;
pub mod curate;
pub mod eval;
pub mod report;
pub mod sites;
pub mod train;

use std::path::Path;

use serde::{Deserialize, Serialize};

use rgb2dem_core::curation::DatasetManifest;

use crate::error::{CliError, Result};

/// Sidecar written next to each checkpoint so eval/report can label runs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunMeta {
    pub stage: u32,
    pub ssim_filter_threshold: Option<f64>,
    pub steps: u64,
    pub train_size: usize,
    pub removed_pairs: usize,
}

impl RunMeta {
    pub fn label(&self) -> String {
        run_label(self.stage, self.ssim_filter_threshold)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_vec_pretty(self)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path)
            .map_err(|e| CliError::Data(format!("cannot read {}: {e}", path.display())))?;
        Ok(serde_json::from_slice(&bytes)?)
    }
}

pub fn run_label(stage: u32, threshold: Option<f64>) -> String {
    match threshold {
        Some(t) => format!("stage{stage}_ge{t}"),
        None => format!("stage{stage}"),
    }
}

pub fn load_manifest(path: &Path) -> Result<DatasetManifest> {
    if !path.exists() {
        return Err(CliError::Data(format!(
            "manifest {} not found; run `build` first",
            path.display()
        )));
    }
    Ok(DatasetManifest::load(path)?)
}
