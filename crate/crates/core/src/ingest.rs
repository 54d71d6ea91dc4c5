//! Scene ingestion: cloud-cover filtering, quality masking, per-pixel median
//! compositing, and sensor-priority fallback merging.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::geo::GeoRegion;
use crate::scalar::Scalar;
use crate::tile::{RasterTile, ValueDomain};

/// Sensor priority role: the primary sensor is preferred, the fallback fills
/// gaps where the primary composite has no valid data.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SensorRole {
    Primary,
    Fallback,
}

#[derive(Debug, Clone)]
pub struct SceneRecord<T: Scalar> {
    pub sensor: SensorRole,
    pub acquisition_date: String,
    /// Whole-scene cloud cover percentage (0..100).
    pub scene_cloud_cover: f64,
    pub rgb: RasterTile<T>,
    /// Per-pixel contamination mask, `true` = cloud or cloud shadow.
    pub quality_mask: Vec<bool>,
}

#[derive(Debug, Clone)]
pub struct ImageStack<T: Scalar> {
    pub region: GeoRegion,
    pub scenes: Vec<SceneRecord<T>>,
}

impl<T: Scalar> ImageStack<T> {
    pub fn validate_alignment(&self) -> Result<()> {
        let Some(first) = self.scenes.first() else { return Ok(()) };
        let (w, h) = (first.rgb.width(), first.rgb.height());
        for s in &self.scenes {
            if s.rgb.width() != w || s.rgb.height() != h {
                return Err(CoreError::Alignment(format!(
                    "scene {} is {}x{}, stack is {w}x{h}",
                    s.acquisition_date,
                    s.rgb.width(),
                    s.rgb.height()
                )));
            }
            if s.quality_mask.len() != s.rgb.pixel_count() {
                return Err(CoreError::Alignment(format!(
                    "scene {} quality mask length mismatch",
                    s.acquisition_date
                )));
            }
        }
        Ok(())
    }
}

/// Keeps exactly the scenes with cloud cover strictly below `max_cover`.
pub fn filter_scenes_by_cloud<T: Scalar>(stack: ImageStack<T>, max_cover: f64) -> ImageStack<T> {
    ImageStack {
        region: stack.region,
        scenes: stack
            .scenes
            .into_iter()
            .filter(|s| s.scene_cloud_cover < max_cover)
            .collect(),
    }
}

/// Turns contaminated pixels (per the quality mask) into nodata.
pub fn apply_quality_mask<T: Scalar>(scene: &SceneRecord<T>) -> Result<SceneRecord<T>> {
    if scene.quality_mask.len() != scene.rgb.pixel_count() {
        return Err(CoreError::Alignment(format!(
            "quality mask has {} entries for {} pixels",
            scene.quality_mask.len(),
            scene.rgb.pixel_count()
        )));
    }
    let mut out = scene.clone();
    for (p, &contaminated) in scene.quality_mask.iter().enumerate() {
        if contaminated {
            out.rgb.nodata_mask_mut()[p] = true;
        }
    }
    Ok(out)
}

/// Per-pixel, per-band median over unmasked samples across scenes.
///
/// A pixel is nodata in the composite iff no scene contributes a valid
/// sample there. Even-count medians take the mean of the two middle values.
pub fn median_composite<T: Scalar>(stack: &ImageStack<T>) -> Result<RasterTile<T>> {
    if stack.scenes.is_empty() {
        return Err(CoreError::EmptyInput("median composite of an empty stack".into()));
    }
    stack.validate_alignment()?;
    let first = &stack.scenes[0].rgb;
    let (w, h, bands) = (first.width(), first.height(), first.bands());
    let mut values = vec![T::zero(); w * h * bands];
    let mut nodata = vec![false; w * h];
    let mut samples: Vec<T> = Vec::with_capacity(stack.scenes.len());
    let two = T::from_f64_lossy(2.0);
    for p in 0..w * h {
        let mut pixel_valid = false;
        for b in 0..bands {
            samples.clear();
            for s in &stack.scenes {
                if !s.rgb.nodata_mask()[p] {
                    samples.push(s.rgb.values()[p * bands + b]);
                }
            }
            if samples.is_empty() {
                continue;
            }
            pixel_valid = true;
            samples.sort_by(|a, b| a.partial_cmp(b).expect("non-NaN samples"));
            let n = samples.len();
            values[p * bands + b] = if n % 2 == 1 {
                samples[n / 2]
            } else {
                (samples[n / 2 - 1] + samples[n / 2]) / two
            };
        }
        nodata[p] = !pixel_valid;
    }
    RasterTile::new(w, h, bands, values, nodata, first.georef, ValueDomain::Raw)
}

/// Per-pixel priority merge: primary where valid, otherwise fallback,
/// otherwise nodata.
pub fn sensor_fallback_merge<T: Scalar>(
    primary: &RasterTile<T>,
    fallback: &RasterTile<T>,
) -> Result<RasterTile<T>> {
    if !primary.same_shape(fallback) {
        return Err(CoreError::Alignment(format!(
            "primary {}x{}x{} vs fallback {}x{}x{}",
            primary.width(),
            primary.height(),
            primary.bands(),
            fallback.width(),
            fallback.height(),
            fallback.bands()
        )));
    }
    let mut out = primary.clone();
    let bands = primary.bands();
    for p in 0..primary.pixel_count() {
        if primary.nodata_mask()[p] {
            if fallback.nodata_mask()[p] {
                out.nodata_mask_mut()[p] = true;
            } else {
                out.nodata_mask_mut()[p] = false;
                for b in 0..bands {
                    out.values_mut()[p * bands + b] = fallback.values()[p * bands + b];
                }
            }
        }
    }
    Ok(out)
}

/// Per-region merge variant: returns the primary verbatim if it has any valid
/// pixel, otherwise the fallback.
pub fn sensor_fallback_merge_per_region<T: Scalar>(
    primary: &RasterTile<T>,
    fallback: &RasterTile<T>,
) -> Result<RasterTile<T>> {
    if !primary.same_shape(fallback) {
        return Err(CoreError::Alignment("fallback tile shape mismatch".into()));
    }
    if primary.valid_pixel_count() > 0 {
        Ok(primary.clone())
    } else {
        Ok(fallback.clone())
    }
}

/// One scene entry in a site's catalog index.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CatalogScene {
    pub sensor: SensorRole,
    pub acquisition_date: String,
    pub scene_cloud_cover: f64,
    pub rgb_path: PathBuf,
    /// Single-band raster, 0 = clear, nonzero = cloud or shadow.
    pub mask_path: Option<PathBuf>,
}

/// JSON index describing one site's scenes and its DEM tile.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CatalogSite {
    pub site_id: String,
    pub region: GeoRegion,
    pub dem_path: PathBuf,
    pub scenes: Vec<CatalogScene>,
}

pub fn read_catalog_index<P: AsRef<Path>>(path: P) -> Result<Vec<CatalogSite>> {
    let text = std::fs::read_to_string(path.as_ref())?;
    Ok(serde_json::from_str(&text)?)
}

/// Loads a catalog site's scenes into an aligned stack, resolving relative
/// paths against `base`.
pub fn load_site_stack<T: Scalar>(site: &CatalogSite, base: &Path) -> Result<ImageStack<T>> {
    let mut scenes = Vec::with_capacity(site.scenes.len());
    for sc in &site.scenes {
        let rgb: RasterTile<T> = crate::io::read_geotiff(base.join(&sc.rgb_path), ValueDomain::Raw)?;
        let quality_mask = match &sc.mask_path {
            Some(mp) => {
                let mask_tile: RasterTile<f32> =
                    crate::io::read_geotiff(base.join(mp), ValueDomain::Raw)?;
                if mask_tile.pixel_count() != rgb.pixel_count() {
                    return Err(CoreError::Alignment(format!(
                        "mask {} does not match scene dimensions",
                        mp.display()
                    )));
                }
                mask_tile.values().iter().map(|&v| v != 0.0).collect()
            }
            None => vec![false; rgb.pixel_count()],
        };
        scenes.push(SceneRecord {
            sensor: sc.sensor,
            acquisition_date: sc.acquisition_date.clone(),
            scene_cloud_cover: sc.scene_cloud_cover,
            rgb,
            quality_mask,
        });
    }
    let stack = ImageStack { region: site.region, scenes };
    stack.validate_alignment()?;
    Ok(stack)
}
