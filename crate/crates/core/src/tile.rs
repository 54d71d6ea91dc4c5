//! Raster tile representation: a `width x height x bands` grid of samples
//! plus a per-pixel nodata mask and a georeference.

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::geo::GeoRegion;
use crate::scalar::Scalar;

/// Declared numeric range of a tile's samples.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ValueDomain {
    /// Sensor counts or meters; no range contract.
    Raw,
    /// Stretched to [0, 255].
    Jpeg0To255,
    /// Scaled to [-1, 1] for model consumption.
    SignedUnit,
}

impl std::fmt::Display for ValueDomain {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            ValueDomain::Raw => "raw",
            ValueDomain::Jpeg0To255 => "jpeg_0_255",
            ValueDomain::SignedUnit => "signed_unit",
        };
        f.write_str(s)
    }
}

/// Band-interleaved-by-pixel raster tile. `values[(y * width + x) * bands + b]`.
#[derive(Debug, Clone, PartialEq)]
pub struct RasterTile<T: Scalar> {
    width: usize,
    height: usize,
    bands: usize,
    values: Vec<T>,
    /// Per-pixel nodata mask, `true` = nodata. One flag per pixel, shared by all bands.
    nodata: Vec<bool>,
    pub georef: GeoRegion,
    pub domain: ValueDomain,
}

impl<T: Scalar> RasterTile<T> {
    pub fn new(
        width: usize,
        height: usize,
        bands: usize,
        values: Vec<T>,
        nodata: Vec<bool>,
        georef: GeoRegion,
        domain: ValueDomain,
    ) -> Result<Self> {
        if width == 0 || height == 0 || bands == 0 {
            return Err(CoreError::InvalidArgument(format!(
                "zero-size tile: {width}x{height}x{bands}"
            )));
        }
        if values.len() != width * height * bands {
            return Err(CoreError::Alignment(format!(
                "values length {} != {}x{}x{}",
                values.len(),
                width,
                height,
                bands
            )));
        }
        if nodata.len() != width * height {
            return Err(CoreError::Alignment(format!(
                "nodata length {} != {} pixels",
                nodata.len(),
                width * height
            )));
        }
        Ok(Self { width, height, bands, values, nodata, georef, domain })
    }

    /// All-valid tile filled with a constant.
    pub fn filled(width: usize, height: usize, bands: usize, value: T, georef: GeoRegion, domain: ValueDomain) -> Self {
        Self {
            width,
            height,
            bands,
            values: vec![value; width * height * bands],
            nodata: vec![false; width * height],
            georef,
            domain,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn bands(&self) -> usize {
        self.bands
    }

    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [T] {
        &mut self.values
    }

    pub fn nodata_mask(&self) -> &[bool] {
        &self.nodata
    }

    pub fn nodata_mask_mut(&mut self) -> &mut [bool] {
        &mut self.nodata
    }

    #[inline]
    pub fn is_nodata(&self, x: usize, y: usize) -> bool {
        self.nodata[y * self.width + x]
    }

    #[inline]
    pub fn set_nodata(&mut self, x: usize, y: usize, flag: bool) {
        self.nodata[y * self.width + x] = flag;
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, band: usize) -> T {
        self.values[(y * self.width + x) * self.bands + band]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, band: usize, v: T) {
        self.values[(y * self.width + x) * self.bands + band] = v;
    }

    /// Unmasked samples of one band, scan order.
    pub fn band_valid_values(&self, band: usize) -> impl Iterator<Item = T> + '_ {
        (0..self.pixel_count()).filter_map(move |p| {
            if self.nodata[p] {
                None
            } else {
                Some(self.values[p * self.bands + band])
            }
        })
    }

    pub fn valid_pixel_count(&self) -> usize {
        self.nodata.iter().filter(|&&m| !m).count()
    }

    pub fn same_shape<U: Scalar>(&self, other: &RasterTile<U>) -> bool {
        self.width == other.width && self.height == other.height && self.bands == other.bands
    }

    pub fn expect_domain(&self, expected: ValueDomain) -> Result<()> {
        if self.domain != expected {
            return Err(CoreError::DomainMismatch {
                expected: expected.to_string(),
                found: self.domain.to_string(),
            });
        }
        Ok(())
    }

    /// Checks the declared domain's range contract over unmasked samples.
    pub fn validate_domain(&self) -> Result<()> {
        let (lo, hi) = match self.domain {
            ValueDomain::Raw => return Ok(()),
            ValueDomain::Jpeg0To255 => (T::zero(), T::from_f64_lossy(255.0)),
            ValueDomain::SignedUnit => (-T::one(), T::one()),
        };
        for p in 0..self.pixel_count() {
            if self.nodata[p] {
                continue;
            }
            for b in 0..self.bands {
                let v = self.values[p * self.bands + b];
                if v < lo || v > hi {
                    return Err(CoreError::DomainMismatch {
                        expected: format!("{} in [{lo}, {hi}]", self.domain),
                        found: format!("value {v} at pixel {p} band {b}"),
                    });
                }
            }
        }
        Ok(())
    }

    /// Converts the sample type; mask and metadata are preserved.
    pub fn cast<U: Scalar>(&self) -> RasterTile<U> {
        RasterTile {
            width: self.width,
            height: self.height,
            bands: self.bands,
            values: self.values.iter().map(|v| U::from_f64_lossy(v.to_f64_lossy())).collect(),
            nodata: self.nodata.clone(),
            georef: self.georef,
            domain: self.domain,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn region() -> GeoRegion {
        GeoRegion::new(0.0, 1.0, 0.0, 1.0, 30.0).unwrap()
    }

    #[test]
    fn rejects_mismatched_lengths() {
        let r = RasterTile::<f64>::new(2, 2, 1, vec![0.0; 3], vec![false; 4], region(), ValueDomain::Raw);
        assert!(matches!(r, Err(CoreError::Alignment(_))));
        let r = RasterTile::<f64>::new(2, 2, 1, vec![0.0; 4], vec![false; 3], region(), ValueDomain::Raw);
        assert!(matches!(r, Err(CoreError::Alignment(_))));
    }

    #[test]
    fn domain_validation() {
        let mut t = RasterTile::filled(2, 2, 1, 0.5f64, region(), ValueDomain::SignedUnit);
        t.validate_domain().unwrap();
        t.set(0, 0, 0, 1.5);
        assert!(t.validate_domain().is_err());
        // masked out-of-range values are allowed
        t.set_nodata(0, 0, true);
        t.validate_domain().unwrap();
    }

    #[test]
    fn band_valid_values_skips_masked() {
        let mut t = RasterTile::filled(2, 1, 2, 1.0f32, region(), ValueDomain::Raw);
        t.set(1, 0, 1, 7.0);
        t.set_nodata(0, 0, true);
        let vals: Vec<f32> = t.band_valid_values(1).collect();
        assert_eq!(vals, vec![7.0]);
    }
}
