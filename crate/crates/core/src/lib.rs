//! Raster tiles, site selection, cloud-free mosaic ingestion, dataset
//! curation, and terrain evaluation metrics for RGB-to-DEM translation.
//!
//! Math is generic over the sample scalar via [`Scalar`] (`f32` or `f64`);
//! the [`Tile32`] / [`Tile64`] aliases cover the common cases.

pub mod curation;
pub mod error;
pub mod geo;
pub mod ingest;
pub mod io;
pub mod metrics;
pub mod raster;
pub mod scalar;
pub mod seed;
pub mod sites;
pub mod synth;
pub mod tile;

pub use error::{CoreError, Result};
pub use geo::GeoRegion;
pub use scalar::Scalar;
pub use tile::{RasterTile, ValueDomain};

/// Single-precision tile, the working type for pipeline data on disk.
pub type Tile32 = RasterTile<f32>;
/// Double-precision tile, used where oracles and metrics want the headroom.
pub type Tile64 = RasterTile<f64>;
