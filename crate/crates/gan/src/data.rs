//! Bridging between raster tiles on disk and the (N, C, H, W) tensors the
//! networks consume. RGB goes through the percentile stretch and signed-unit
//! scaling; DEMs are normalized per tile to [-1, 1] over their own range.

use std::path::Path;

use ndarray::{Array3, Array4, Axis};
use rgb2dem_core::curation::{DatasetManifest, Split};
use rgb2dem_core::io::read_geotiff;
use rgb2dem_core::raster::{scale_to_signed_unit, stretch_min_max, StretchParams};
use rgb2dem_core::{GeoRegion, RasterTile, Scalar, ValueDomain};

use crate::error::{GanError, Result};
use crate::scalar::NnScalar;

/// One preprocessed training example, channel-major.
#[derive(Debug, Clone)]
pub struct TensorPair<T: NnScalar> {
    pub pair_id: String,
    pub rgb: Array3<T>,
    pub dem: Array3<T>,
    /// Ground-truth max minus min elevation in meters, kept for reporting.
    pub elevation_range: f64,
    pub georef: GeoRegion,
}

fn tile_to_array<T: Scalar + NnScalar>(tile: &RasterTile<T>) -> Array3<T> {
    let mut out = Array3::<T>::zeros((tile.bands(), tile.height(), tile.width()));
    for y in 0..tile.height() {
        for x in 0..tile.width() {
            if tile.is_nodata(x, y) {
                continue;
            }
            for b in 0..tile.bands() {
                out[[b, y, x]] = tile.get(x, y, b);
            }
        }
    }
    out
}

/// Stretch + signed-unit scale the RGB tile and min-max normalize the DEM.
pub fn prepare_pair<T: NnScalar>(
    pair_id: &str,
    rgb: &RasterTile<T>,
    dem: &RasterTile<T>,
) -> Result<TensorPair<T>> {
    if rgb.width() != dem.width() || rgb.height() != dem.height() {
        return Err(GanError::Alignment(format!(
            "pair {pair_id}: rgb {}x{} vs dem {}x{}",
            rgb.width(), rgb.height(), dem.width(), dem.height()
        )));
    }
    if dem.bands() != 1 {
        return Err(GanError::Alignment(format!(
            "pair {pair_id}: dem has {} bands",
            dem.bands()
        )));
    }
    // raw sensor values get the full stretch; already-stretched tiles only
    // need the signed-unit scaling; signed-unit tiles pass through
    let scaled = match rgb.domain {
        ValueDomain::Raw => {
            scale_to_signed_unit(&stretch_min_max(rgb, &StretchParams::default())?)?
        }
        ValueDomain::Jpeg0To255 => scale_to_signed_unit(rgb)?,
        ValueDomain::SignedUnit => rgb.clone(),
    };

    let valid: Vec<T> = dem.band_valid_values(0).collect();
    if valid.is_empty() {
        return Err(GanError::Domain(format!("pair {pair_id}: dem fully masked")));
    }
    let min = valid.iter().copied().fold(T::infinity(), T::min);
    let max = valid.iter().copied().fold(T::neg_infinity(), T::max);
    let range = max - min;
    let mut dem_arr = Array3::<T>::zeros((1, dem.height(), dem.width()));
    let two = T::from_f64_lossy(2.0);
    for y in 0..dem.height() {
        for x in 0..dem.width() {
            if dem.is_nodata(x, y) {
                continue;
            }
            let v = dem.get(x, y, 0);
            dem_arr[[0, y, x]] = if range > T::zero() {
                (v - min) / range * two - T::one()
            } else {
                T::zero()
            };
        }
    }
    Ok(TensorPair {
        pair_id: pair_id.to_string(),
        rgb: tile_to_array(&scaled),
        dem: dem_arr,
        elevation_range: range.to_f64_lossy(),
        georef: dem.georef.clone(),
    })
}

/// Loads every manifest entry of one split, resolving relative paths
/// against `root`.
pub fn load_split_pairs(
    manifest: &DatasetManifest,
    split: Split,
    root: &Path,
    rgb_domain: ValueDomain,
) -> Result<Vec<TensorPair<f32>>> {
    let entries: Vec<_> = manifest
        .entries
        .iter()
        .filter(|e| !e.flags.excluded && e.split == Some(split))
        .collect();
    let mut pairs = Vec::with_capacity(entries.len());
    for e in entries {
        let resolve = |p: &Path| if p.is_absolute() { p.to_path_buf() } else { root.join(p) };
        let rgb = read_geotiff::<f32, _>(resolve(&e.rgb_path), rgb_domain)?;
        let dem = read_geotiff::<f32, _>(resolve(&e.dem_path), ValueDomain::Raw)?;
        pairs.push(prepare_pair(&e.pair_id, &rgb, &dem)?);
    }
    Ok(pairs)
}

/// Stacks pairs into batch tensors: (N, 3, H, W) and (N, 1, H, W).
pub fn batch_tensors<T: NnScalar>(pairs: &[&TensorPair<T>]) -> Result<(Array4<T>, Array4<T>)> {
    if pairs.is_empty() {
        return Err(GanError::EmptyDataset);
    }
    let rgb_views: Vec<_> = pairs.iter().map(|p| p.rgb.view()).collect();
    let dem_views: Vec<_> = pairs.iter().map(|p| p.dem.view()).collect();
    let rgb = ndarray::stack(Axis(0), &rgb_views).map_err(|e| GanError::Alignment(e.to_string()))?;
    let dem = ndarray::stack(Axis(0), &dem_views).map_err(|e| GanError::Alignment(e.to_string()))?;
    Ok((rgb, dem))
}

/// Wraps a single-sample (1, H, W) channel plane back into a tile so the
/// core metrics can run on it.
pub fn plane_to_tile<T: NnScalar>(
    plane: ndarray::ArrayView2<T>,
    georef: GeoRegion,
) -> Result<RasterTile<T>> {
    let (h, w) = plane.dim();
    let values: Vec<T> = plane.iter().copied().collect();
    RasterTile::new(w, h, 1, values, vec![false; w * h], georef, ValueDomain::SignedUnit)
        .map_err(GanError::Core)
}
