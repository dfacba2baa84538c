//! Centered, normalized patch extraction and ground-footprint arithmetic.

use super::raster::BandStats;
use super::{GeoError, GeoRaster};

/// An extracted window: `values` holds `bands * size * size` normalized
/// numbers in band-major, row-major order. `size` is odd so the patch is
/// centered on the pixel containing `center`.
#[derive(Debug, Clone)]
pub struct Patch {
    pub modality: String,
    pub center: (f64, f64),
    pub size: usize,
    pub bands: usize,
    pub values: Vec<f32>,
}

/// Extract the `size`x`size` window centered on the pixel containing
/// `center`, normalizing each band as `(v - mean) / std` with the raster's
/// cached statistics.
///
/// Windows that cross the raster edge or contain any nodata pixel are
/// rejected: padding or interpolation would fabricate environment values.
pub fn extract_patch(
    raster: &GeoRaster,
    center: (f64, f64),
    size: usize,
) -> Result<Patch, GeoError> {
    if size % 2 == 0 || size == 0 {
        return Err(GeoError::InvalidPatchSize(size));
    }
    let stats = raster.band_stats().ok_or(GeoError::StatsMissing)?;
    let (lon, lat) = center;
    let (row, col) = raster.world_to_pixel(lon, lat)?;
    let half = (size - 1) / 2;
    if row < half || col < half || row + half >= raster.height || col + half >= raster.width {
        return Err(GeoError::OutOfBounds {
            lon,
            lat,
            detail: format!(" (window {size}x{size} crosses the edge of '{}')", raster.label),
        });
    }

    let mut values = Vec::with_capacity(raster.bands * size * size);
    for b in 0..raster.bands {
        let plane = raster.band(b);
        let BandStats { mean, std } = stats[b];
        for r in row - half..=row + half {
            let base = r * raster.width + (col - half);
            for &v in &plane[base..base + size] {
                if raster.is_nodata(v) {
                    return Err(GeoError::NodataInWindow { lon, lat, size });
                }
                values.push(((v as f64 - mean) / std) as f32);
            }
        }
    }
    Ok(Patch {
        modality: raster.label.clone(),
        center,
        size,
        bands: raster.bands,
        values,
    })
}

/// Ground footprint of a square patch: side length and area in km.
pub fn footprint(size: usize, pixel_ground_km: f64) -> (f64, f64) {
    let side = size as f64 * pixel_ground_km;
    (side, side * side)
}

/// Round to two decimals for display, half away from zero.
pub fn round2(v: f64) -> f64 {
    (v * 100.0).round() / 100.0
}
