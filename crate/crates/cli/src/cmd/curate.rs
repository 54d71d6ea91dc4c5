//! Curation: spectral-diversity flagging, exclusion, and the seeded
//! train/val/test split.

use rgb2dem_core::curation::{
    exclude_flagged_pairs, spectral_diversity_flags_with, split_dataset, write_audit_csv,
    DiversityThresholds,
};
use rgb2dem_core::io::read_geotiff;
use rgb2dem_core::seed::derive_seed;
use rgb2dem_core::ValueDomain;

use crate::cmd::load_manifest;
use crate::config::PipelineConfig;
use crate::error::Result;
use crate::lock::ManifestLock;

pub fn run(config: &PipelineConfig) -> Result<()> {
    let _lock = ManifestLock::acquire(&config.manifest_path())?;
    let mut manifest = load_manifest(&config.manifest_path())?;
    let thresholds = DiversityThresholds {
        min_unique_values: config.curate.min_unique_values,
        max_dominant_share: config.curate.max_dominant_share,
        dominant_per_band: config.curate.dominant_per_band,
    };

    for entry in &mut manifest.entries {
        let rgb = read_geotiff::<f32, _>(
            config.work_dir.join(&entry.rgb_path),
            ValueDomain::Jpeg0To255,
        )?;
        entry.flags = spectral_diversity_flags_with(&rgb, &thresholds)?;
    }

    let total = manifest.entries.len();
    let retained = exclude_flagged_pairs(&mut manifest);
    let excluded: Vec<_> = manifest
        .entries
        .iter()
        .filter(|e| e.flags.excluded)
        .cloned()
        .collect();

    split_dataset(
        &mut manifest,
        (
            config.curate.train_fraction,
            config.curate.val_fraction,
            config.curate.test_fraction,
        ),
        derive_seed(config.root_seed, "curate/split"),
    )?;
    manifest.save(config.manifest_path())?;

    std::fs::create_dir_all(config.report_dir())?;
    write_audit_csv(
        config.report_dir().join("exclusion_audit.csv"),
        "spectral_diversity",
        &excluded,
    )?;

    let counts = |s| manifest.split_entries(s).len();
    println!(
        "curate: {retained}/{total} retained; split train/val/test = {}/{}/{}",
        counts(rgb2dem_core::curation::Split::Train),
        counts(rgb2dem_core::curation::Split::Val),
        counts(rgb2dem_core::curation::Split::Test),
    );
    Ok(())
}
