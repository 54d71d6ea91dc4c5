use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};

/// Geographic bounding box in degrees with a nominal ground resolution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoRegion {
    pub lat_min: f64,
    pub lat_max: f64,
    pub lon_min: f64,
    pub lon_max: f64,
    /// Nominal resolution in meters per pixel.
    pub resolution: f64,
}

impl GeoRegion {
    pub fn new(lat_min: f64, lat_max: f64, lon_min: f64, lon_max: f64, resolution: f64) -> Result<Self> {
        if !(lat_min < lat_max) || !(lon_min < lon_max) {
            return Err(CoreError::InvalidArgument(format!(
                "degenerate region: lat [{lat_min}, {lat_max}], lon [{lon_min}, {lon_max}]"
            )));
        }
        if !(resolution > 0.0) {
            return Err(CoreError::InvalidArgument(format!(
                "resolution must be positive, got {resolution}"
            )));
        }
        Ok(Self { lat_min, lat_max, lon_min, lon_max, resolution })
    }

    pub fn lat_span(&self) -> f64 {
        self.lat_max - self.lat_min
    }

    pub fn lon_span(&self) -> f64 {
        self.lon_max - self.lon_min
    }

    pub fn center(&self) -> (f64, f64) {
        (
            0.5 * (self.lat_min + self.lat_max),
            0.5 * (self.lon_min + self.lon_max),
        )
    }
}
