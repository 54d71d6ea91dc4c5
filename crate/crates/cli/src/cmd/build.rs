//! Dataset build: for each site, produce a cloud-free RGB mosaic and a
//! relative-elevation DEM tile, write both as GeoTIFF, and record a manifest
//! entry. Synthetic mode generates the corpus procedurally.

use std::path::{Path, PathBuf};

use rgb2dem_core::curation::{DatasetManifest, ManifestEntry, QualityFlags};
use rgb2dem_core::ingest::{
    apply_quality_mask, filter_scenes_by_cloud, median_composite, read_catalog_index,
    sensor_fallback_merge, ImageStack, SensorRole,
};
use rgb2dem_core::io::write_geotiff;
use rgb2dem_core::metrics::elevation_range;
use rgb2dem_core::raster::{stretch_min_max, to_relative_elevation};
use rgb2dem_core::seed::derive_seed;
use rgb2dem_core::synth::synthesize_terrain_pair;
use rgb2dem_core::{RasterTile, ValueDomain};

use crate::config::{BuildSource, PipelineConfig};
use crate::error::{CliError, Result};
use crate::lock::ManifestLock;

pub fn run(config: &PipelineConfig) -> Result<()> {
    let _lock = ManifestLock::acquire(&config.manifest_path())?;
    std::fs::create_dir_all(config.tiles_dir())?;

    let entries = match config.build.source {
        BuildSource::Synthetic => build_synthetic(config)?,
        BuildSource::Catalog => build_catalog(config)?,
    };
    if entries.is_empty() {
        println!("build: warning: no usable sites, manifest is empty");
    }
    let count = entries.len();
    let manifest = DatasetManifest::new(entries)?;
    manifest.save(config.manifest_path())?;
    println!("build: {count} pairs written to {}", config.manifest_path().display());
    Ok(())
}

/// Writes one RGB/DEM pair and returns its manifest entry. Paths in the
/// manifest are relative to the work directory.
fn write_pair(
    config: &PipelineConfig,
    pair_id: &str,
    rgb: &RasterTile<f32>,
    dem: &RasterTile<f32>,
) -> Result<ManifestEntry> {
    let stretched = stretch_min_max(rgb, &config.build.stretch)?;
    let relative = to_relative_elevation(dem)?;
    let rgb_rel = PathBuf::from("tiles").join(format!("{pair_id}_rgb.tif"));
    let dem_rel = PathBuf::from("tiles").join(format!("{pair_id}_dem.tif"));
    write_geotiff(config.work_dir.join(&rgb_rel), &stretched)?;
    write_geotiff(config.work_dir.join(&dem_rel), &relative)?;
    Ok(ManifestEntry {
        pair_id: pair_id.to_string(),
        rgb_path: rgb_rel,
        dem_path: dem_rel,
        region: dem.georef,
        flags: QualityFlags::clean(3),
        split: None,
        ssim_score: None,
        elevation_range: elevation_range(&relative)?,
    })
}

fn build_synthetic(config: &PipelineConfig) -> Result<Vec<ManifestEntry>> {
    let mut entries = Vec::with_capacity(config.build.count);
    for i in 0..config.build.count {
        let pair_id = format!("pair_{i:05}");
        let seed = derive_seed(config.root_seed, &format!("build/{pair_id}"));
        let (rgb, dem) = synthesize_terrain_pair::<f32>(seed, config.build.tile_size)?;
        entries.push(write_pair(config, &pair_id, &rgb, &dem)?);
    }
    Ok(entries)
}

fn build_catalog(config: &PipelineConfig) -> Result<Vec<ManifestEntry>> {
    let index_path = config.build.catalog.as_ref().ok_or_else(|| {
        CliError::Config("build.catalog must point at a catalog index for source = \"catalog\"".into())
    })?;
    let sites = read_catalog_index(index_path)?;
    if sites.is_empty() {
        return Err(CliError::Data(format!("catalog {} lists no sites", index_path.display())));
    }
    let base = index_path.parent().unwrap_or(Path::new("."));

    let mut entries = Vec::new();
    for site in &sites {
        let stack = rgb2dem_core::ingest::load_site_stack::<f32>(site, base)?;
        let stack = filter_scenes_by_cloud(stack, config.build.cloud_threshold);
        match mosaic(&stack)? {
            Some(rgb) => {
                let dem_path = if site.dem_path.is_absolute() {
                    site.dem_path.clone()
                } else {
                    base.join(&site.dem_path)
                };
                let dem = rgb2dem_core::io::read_geotiff::<f32, _>(dem_path, ValueDomain::Raw)?;
                if rgb.width() != dem.width() || rgb.height() != dem.height() {
                    return Err(CliError::Data(format!(
                        "site {}: RGB {}x{} does not align with DEM {}x{}",
                        site.site_id,
                        rgb.width(),
                        rgb.height(),
                        dem.width(),
                        dem.height()
                    )));
                }
                entries.push(write_pair(config, &site.site_id, &rgb, &dem)?);
            }
            None => {
                println!("build: warning: site {} has no usable scenes, skipping", site.site_id);
            }
        }
    }
    Ok(entries)
}

/// Masked median composite of the primary sensor, falling back to the
/// secondary sensor where the primary has no valid observations.
fn mosaic(stack: &ImageStack<f32>) -> Result<Option<RasterTile<f32>>> {
    stack.validate_alignment()?;
    let composite_for = |role: SensorRole| -> Result<Option<RasterTile<f32>>> {
        let scenes: Vec<_> = stack
            .scenes
            .iter()
            .filter(|s| s.sensor == role)
            .map(apply_quality_mask)
            .collect::<rgb2dem_core::Result<_>>()?;
        if scenes.is_empty() {
            return Ok(None);
        }
        let sub = ImageStack { region: stack.region, scenes };
        Ok(Some(median_composite(&sub)?))
    };
    let primary = composite_for(SensorRole::Primary)?;
    let fallback = composite_for(SensorRole::Fallback)?;
    let merged = match (primary, fallback) {
        (Some(p), Some(f)) => Some(sensor_fallback_merge(&p, &f)?),
        (Some(p), None) => Some(p),
        (None, Some(f)) => Some(f),
        (None, None) => None,
    };
    // a mosaic with zero valid pixels is as good as no mosaic
    Ok(merged.filter(|t| t.valid_pixel_count() > 0))
}
