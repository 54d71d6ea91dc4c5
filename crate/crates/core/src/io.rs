//! GeoTIFF tile I/O and 8-bit PNG previews.
//!
//! Tiles are stored as 32-bit float GeoTIFFs (single strip, chunky layout)
//! with the georeference in the ModelTiepoint/ModelPixelScale tags and the
//! nodata sentinel in the GDAL nodata tag. Masked pixels are written as the
//! sentinel value and recovered into the in-memory mask on read.

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use tiff::decoder::{Decoder, DecodingResult};
use tiff::encoder::{colortype, TiffEncoder};
use tiff::tags::Tag;

use crate::error::{CoreError, Result};
use crate::geo::GeoRegion;
use crate::scalar::Scalar;
use crate::tile::{RasterTile, ValueDomain};

/// Sentinel for masked pixels; outside every domain used by the pipeline.
pub const NODATA_SENTINEL: f32 = -32768.0;

/// Approximate meters per degree of latitude, for nominal resolution.
const METERS_PER_DEGREE: f64 = 111_320.0;

pub fn write_geotiff<T: Scalar, P: AsRef<Path>>(path: P, tile: &RasterTile<T>) -> Result<()> {
    let file = File::create(path.as_ref())?;
    let mut enc = TiffEncoder::new(BufWriter::new(file))?;

    let mut data = Vec::with_capacity(tile.values().len());
    for p in 0..tile.pixel_count() {
        for b in 0..tile.bands() {
            let v = if tile.nodata_mask()[p] {
                NODATA_SENTINEL
            } else {
                tile.values()[p * tile.bands() + b].to_f64_lossy() as f32
            };
            data.push(v);
        }
    }

    let g = &tile.georef;
    let scale_x = g.lon_span() / tile.width() as f64;
    let scale_y = g.lat_span() / tile.height() as f64;
    let pixel_scale = [scale_x, scale_y, 0.0];
    // raster row 0 is the northern edge
    let tiepoint = [0.0, 0.0, 0.0, g.lon_min, g.lat_max, 0.0];
    let nodata = format!("{NODATA_SENTINEL}");

    match tile.bands() {
        1 => {
            let mut img = enc.new_image::<colortype::Gray32Float>(tile.width() as u32, tile.height() as u32)?;
            img.encoder().write_tag(Tag::ModelPixelScaleTag, &pixel_scale[..])?;
            img.encoder().write_tag(Tag::ModelTiepointTag, &tiepoint[..])?;
            img.encoder().write_tag(Tag::GdalNodata, nodata.as_str())?;
            img.write_data(&data)?;
        }
        3 => {
            let mut img = enc.new_image::<colortype::RGB32Float>(tile.width() as u32, tile.height() as u32)?;
            img.encoder().write_tag(Tag::ModelPixelScaleTag, &pixel_scale[..])?;
            img.encoder().write_tag(Tag::ModelTiepointTag, &tiepoint[..])?;
            img.encoder().write_tag(Tag::GdalNodata, nodata.as_str())?;
            img.write_data(&data)?;
        }
        n => {
            return Err(CoreError::InvalidArgument(format!(
                "geotiff writer supports 1 or 3 bands, got {n}"
            )))
        }
    }
    Ok(())
}

pub fn read_geotiff<T: Scalar, P: AsRef<Path>>(path: P, domain: ValueDomain) -> Result<RasterTile<T>> {
    let file = File::open(path.as_ref())?;
    let mut dec = Decoder::new(BufReader::new(file))?;
    let (w, h) = dec.dimensions()?;
    let color = dec.colortype()?;
    let bands = match color {
        tiff::ColorType::Gray(_) => 1,
        tiff::ColorType::RGB(_) => 3,
        other => {
            return Err(CoreError::Format(format!("unsupported tiff color type {other:?}")))
        }
    };

    let nodata: Option<f32> = dec
        .get_tag_ascii_string(Tag::GdalNodata)
        .ok()
        .and_then(|s| s.trim().trim_end_matches('\0').parse().ok());
    let tiepoint = dec.get_tag_f64_vec(Tag::ModelTiepointTag).ok();
    let scale = dec.get_tag_f64_vec(Tag::ModelPixelScaleTag).ok();

    let raw: Vec<f32> = match dec.read_image()? {
        DecodingResult::F32(v) => v,
        DecodingResult::F64(v) => v.into_iter().map(|x| x as f32).collect(),
        DecodingResult::U8(v) => v.into_iter().map(f32::from).collect(),
        DecodingResult::U16(v) => v.into_iter().map(f32::from).collect(),
        DecodingResult::I16(v) => v.into_iter().map(f32::from).collect(),
        other => {
            return Err(CoreError::Format(format!(
                "unsupported tiff sample format {other:?}"
            )))
        }
    };
    if raw.len() != (w as usize) * (h as usize) * bands {
        return Err(CoreError::Format(format!(
            "tiff payload length {} != {w}x{h}x{bands}",
            raw.len()
        )));
    }

    let georef = match (tiepoint.as_deref(), scale.as_deref()) {
        (Some([_, _, _, lon0, lat0, _]), Some([sx, sy, _])) => {
            let lon_min = *lon0;
            let lat_max = *lat0;
            let lon_max = lon_min + sx * w as f64;
            let lat_min = lat_max - sy * h as f64;
            let resolution = (sy * METERS_PER_DEGREE).max(f64::MIN_POSITIVE);
            GeoRegion::new(lat_min, lat_max, lon_min, lon_max, resolution)?
        }
        _ => GeoRegion::new(0.0, h as f64, 0.0, w as f64, 1.0)?,
    };

    let pixels = (w as usize) * (h as usize);
    let mut values = vec![T::zero(); pixels * bands];
    let mut mask = vec![false; pixels];
    for p in 0..pixels {
        let mut any_nodata = false;
        for b in 0..bands {
            let v = raw[p * bands + b];
            if nodata.is_some_and(|nd| v == nd) {
                any_nodata = true;
            }
            values[p * bands + b] = T::from_f64_lossy(v as f64);
        }
        if any_nodata {
            mask[p] = true;
        }
    }
    RasterTile::new(w as usize, h as usize, bands, values, mask, georef, domain)
}

/// Writes an 8-bit PNG preview; masked pixels render black.
pub fn write_png_preview<T: Scalar, P: AsRef<Path>>(path: P, tile: &RasterTile<T>) -> Result<()> {
    let (lo, hi) = match tile.domain {
        ValueDomain::Jpeg0To255 => (0.0, 255.0),
        ValueDomain::SignedUnit => (-1.0, 1.0),
        ValueDomain::Raw => {
            let mut lo = f64::INFINITY;
            let mut hi = f64::NEG_INFINITY;
            for p in 0..tile.pixel_count() {
                if tile.nodata_mask()[p] {
                    continue;
                }
                for b in 0..tile.bands() {
                    let v = tile.values()[p * tile.bands() + b].to_f64_lossy();
                    lo = lo.min(v);
                    hi = hi.max(v);
                }
            }
            if !lo.is_finite() || hi <= lo {
                (0.0, 1.0)
            } else {
                (lo, hi)
            }
        }
    };
    let to_u8 = |v: f64| (((v - lo) / (hi - lo)).clamp(0.0, 1.0) * 255.0).round() as u8;
    let w = tile.width() as u32;
    let h = tile.height() as u32;
    match tile.bands() {
        1 => {
            let mut img = image::GrayImage::new(w, h);
            for (p, px) in img.pixels_mut().enumerate() {
                px.0 = if tile.nodata_mask()[p] {
                    [0]
                } else {
                    [to_u8(tile.values()[p].to_f64_lossy())]
                };
            }
            img.save(path.as_ref())?;
        }
        3 => {
            let mut img = image::RgbImage::new(w, h);
            for (p, px) in img.pixels_mut().enumerate() {
                px.0 = if tile.nodata_mask()[p] {
                    [0, 0, 0]
                } else {
                    [
                        to_u8(tile.values()[p * 3].to_f64_lossy()),
                        to_u8(tile.values()[p * 3 + 1].to_f64_lossy()),
                        to_u8(tile.values()[p * 3 + 2].to_f64_lossy()),
                    ]
                };
            }
            img.save(path.as_ref())?;
        }
        n => {
            return Err(CoreError::InvalidArgument(format!(
                "png preview supports 1 or 3 bands, got {n}"
            )))
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn region() -> GeoRegion {
        GeoRegion::new(9.865, 10.135, 19.865, 20.135, 30.0).unwrap()
    }

    #[test]
    fn geotiff_roundtrip_single_band_with_mask() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("dem.tif");
        let mut tile = RasterTile::filled(8, 6, 1, 0.0f32, region(), ValueDomain::Raw);
        for (i, v) in tile.values_mut().iter_mut().enumerate() {
            *v = i as f32 * 1.5 - 3.0;
        }
        tile.set_nodata(2, 3, true);
        tile.set_nodata(7, 0, true);
        write_geotiff(&path, &tile).unwrap();
        let back: RasterTile<f32> = read_geotiff(&path, ValueDomain::Raw).unwrap();
        assert_eq!(back.width(), 8);
        assert_eq!(back.height(), 6);
        assert_eq!(back.nodata_mask(), tile.nodata_mask());
        for p in 0..tile.pixel_count() {
            if !tile.nodata_mask()[p] {
                assert_eq!(back.values()[p], tile.values()[p]);
            }
        }
        assert!((back.georef.lat_min - 9.865).abs() < 1e-9);
        assert!((back.georef.lon_max - 20.135).abs() < 1e-9);
    }

    #[test]
    fn geotiff_roundtrip_rgb() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("rgb.tif");
        let mut tile = RasterTile::filled(4, 4, 3, 0.0f32, region(), ValueDomain::SignedUnit);
        for (i, v) in tile.values_mut().iter_mut().enumerate() {
            *v = (i as f32 / 47.0) * 2.0 - 1.0;
        }
        write_geotiff(&path, &tile).unwrap();
        let back: RasterTile<f32> = read_geotiff(&path, ValueDomain::SignedUnit).unwrap();
        assert_eq!(back.values(), tile.values());
        assert_eq!(back.bands(), 3);
    }

    #[test]
    fn png_preview_writes() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.png");
        let tile = RasterTile::filled(4, 4, 3, 0.25f32, region(), ValueDomain::SignedUnit);
        write_png_preview(&path, &tile).unwrap();
        assert!(path.exists());
    }
}
