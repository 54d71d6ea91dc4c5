//! Tile normalization and resampling: percentile stretch to [0, 255],
//! scaling to [-1, 1], relative elevation, and bilinear resampling.

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::scalar::Scalar;
use crate::tile::{RasterTile, ValueDomain};

/// Percentile bounds for the min-max stretch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StretchParams {
    pub lower_percentile: f64,
    pub upper_percentile: f64,
    /// Round stretched output to integer 8-bit levels instead of keeping
    /// real-valued samples.
    #[serde(default)]
    pub strict_jpeg_rounding: bool,
}

impl Default for StretchParams {
    fn default() -> Self {
        Self { lower_percentile: 2.0, upper_percentile: 98.0, strict_jpeg_rounding: false }
    }
}

impl StretchParams {
    pub fn validate(&self) -> Result<()> {
        if !(0.0 <= self.lower_percentile
            && self.lower_percentile < self.upper_percentile
            && self.upper_percentile <= 100.0)
        {
            return Err(CoreError::InvalidArgument(format!(
                "percentiles must satisfy 0 <= lower < upper <= 100, got {} / {}",
                self.lower_percentile, self.upper_percentile
            )));
        }
        Ok(())
    }
}

/// Linear-interpolation percentile over a sorted slice.
///
/// `q` in [0, 100]. Matches the common `(n-1) * q / 100` rank convention.
pub fn percentile_sorted<T: Scalar>(sorted: &[T], q: f64) -> T {
    assert!(!sorted.is_empty());
    if sorted.len() == 1 {
        return sorted[0];
    }
    let rank = (sorted.len() - 1) as f64 * q / 100.0;
    let lo = rank.floor() as usize;
    let hi = rank.ceil() as usize;
    if lo == hi {
        return sorted[lo];
    }
    let frac = T::from_f64_lossy(rank - lo as f64);
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

/// Percentile of a band's unmasked samples.
pub fn band_percentile<T: Scalar>(tile: &RasterTile<T>, band: usize, q: f64) -> Result<T> {
    let mut vals: Vec<T> = tile.band_valid_values(band).collect();
    if vals.is_empty() {
        return Err(CoreError::DegenerateInput(format!("band {band} has no unmasked pixels")));
    }
    vals.sort_by(|a, b| a.partial_cmp(b).expect("non-NaN samples"));
    Ok(percentile_sorted(&vals, q))
}

/// Percentile stretch to the [0, 255] range, per band, with clamping.
///
/// `output = 255 * (P - P_min) / (P_max - P_min)`; values below `P_min` go to
/// 0 and above `P_max` to 255. A constant band (`P_min == P_max`) maps to all
/// zeros; the curation filters flag such tiles downstream.
pub fn stretch_min_max<T: Scalar>(tile: &RasterTile<T>, params: &StretchParams) -> Result<RasterTile<T>> {
    params.validate()?;
    let full = T::from_f64_lossy(255.0);
    let mut bounds = Vec::with_capacity(tile.bands());
    for b in 0..tile.bands() {
        let lo = band_percentile(tile, b, params.lower_percentile)?;
        let hi = band_percentile(tile, b, params.upper_percentile)?;
        bounds.push((lo, hi));
    }
    let mut out = tile.clone();
    out.domain = ValueDomain::Jpeg0To255;
    let bands = tile.bands();
    for p in 0..tile.pixel_count() {
        for b in 0..bands {
            let (lo, hi) = bounds[b];
            let v = tile.values()[p * bands + b];
            let stretched = if hi <= lo {
                T::zero()
            } else if v <= lo {
                T::zero()
            } else if v >= hi {
                full
            } else {
                full * (v - lo) / (hi - lo)
            };
            out.values_mut()[p * bands + b] = if params.strict_jpeg_rounding {
                stretched.round()
            } else {
                stretched
            };
        }
    }
    Ok(out)
}

/// Scales the [0, 255] range to [-1, 1]: `v / 127.5 - 1`.
pub fn scale_to_signed_unit<T: Scalar>(tile: &RasterTile<T>) -> Result<RasterTile<T>> {
    tile.expect_domain(ValueDomain::Jpeg0To255)?;
    let half = T::from_f64_lossy(127.5);
    let mut out = tile.clone();
    out.domain = ValueDomain::SignedUnit;
    for v in out.values_mut() {
        *v = *v / half - T::one();
    }
    Ok(out)
}

/// Shifts a single-band DEM so its unmasked minimum is zero.
pub fn to_relative_elevation<T: Scalar>(dem: &RasterTile<T>) -> Result<RasterTile<T>> {
    if dem.bands() != 1 {
        return Err(CoreError::InvalidArgument(format!(
            "relative elevation expects a single-band DEM, got {} bands",
            dem.bands()
        )));
    }
    let min = dem
        .band_valid_values(0)
        .fold(None, |acc: Option<T>, v| Some(acc.map_or(v, |m| m.min(v))))
        .ok_or_else(|| CoreError::DegenerateInput("all-masked DEM tile".into()))?;
    let mut out = dem.clone();
    for (p, v) in out.values_mut().iter_mut().enumerate() {
        if !dem.nodata_mask()[p] {
            *v = *v - min;
        }
    }
    Ok(out)
}

/// Bilinear resample with nodata-aware weights.
///
/// Source pixels flagged nodata contribute zero weight; an output pixel whose
/// four neighbors are all nodata becomes nodata itself. Pixel-center
/// alignment: `src = (dst + 0.5) * scale - 0.5`.
pub fn resample_tile<T: Scalar>(tile: &RasterTile<T>, out_w: usize, out_h: usize) -> Result<RasterTile<T>> {
    if out_w == 0 || out_h == 0 {
        return Err(CoreError::InvalidArgument("zero-size resample target".into()));
    }
    if out_w == tile.width() && out_h == tile.height() {
        return Ok(tile.clone());
    }
    let bands = tile.bands();
    let mut values = vec![T::zero(); out_w * out_h * bands];
    let mut nodata = vec![false; out_w * out_h];
    let sx = tile.width() as f64 / out_w as f64;
    let sy = tile.height() as f64 / out_h as f64;
    for oy in 0..out_h {
        let fy = (oy as f64 + 0.5) * sy - 0.5;
        let y0 = fy.floor().max(0.0) as usize;
        let y1 = (y0 + 1).min(tile.height() - 1);
        let wy = (fy - y0 as f64).clamp(0.0, 1.0);
        for ox in 0..out_w {
            let fx = (ox as f64 + 0.5) * sx - 0.5;
            let x0 = fx.floor().max(0.0) as usize;
            let x1 = (x0 + 1).min(tile.width() - 1);
            let wx = (fx - x0 as f64).clamp(0.0, 1.0);
            let corners = [
                (x0, y0, (1.0 - wx) * (1.0 - wy)),
                (x1, y0, wx * (1.0 - wy)),
                (x0, y1, (1.0 - wx) * wy),
                (x1, y1, wx * wy),
            ];
            let mut wsum = 0.0f64;
            let mut acc = vec![0.0f64; bands];
            for &(cx, cy, w) in &corners {
                if w == 0.0 || tile.is_nodata(cx, cy) {
                    continue;
                }
                wsum += w;
                for (b, a) in acc.iter_mut().enumerate() {
                    *a += w * tile.get(cx, cy, b).to_f64_lossy();
                }
            }
            let op = oy * out_w + ox;
            if wsum == 0.0 {
                nodata[op] = true;
            } else {
                for (b, a) in acc.iter().enumerate() {
                    values[op * bands + b] = T::from_f64_lossy(a / wsum);
                }
            }
        }
    }
    RasterTile::new(out_w, out_h, bands, values, nodata, tile.georef, tile.domain)
}
