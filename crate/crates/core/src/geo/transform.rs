//! Affine mapping between world coordinates and raster pixel indices.

use serde::{Deserialize, Serialize};

/// Axis-aligned geotransform. `origin_x`/`origin_y` locate the outer corner
/// of pixel (0, 0); `pixel_size_y` is positive and applied southward, so row
/// indices grow as the y coordinate decreases.
///
/// Pixel convention: a coordinate maps to `floor((world - origin) / size)`;
/// coordinates exactly on a cell boundary belong to the higher-index cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeoTransform {
    pub origin_x: f64,
    pub origin_y: f64,
    pub pixel_size_x: f64,
    pub pixel_size_y: f64,
    pub crs_label: String,
}

impl GeoTransform {
    pub fn new(origin_x: f64, origin_y: f64, pixel_size_x: f64, pixel_size_y: f64) -> Self {
        assert!(
            pixel_size_x > 0.0 && pixel_size_y > 0.0,
            "pixel sizes must be positive"
        );
        GeoTransform {
            origin_x,
            origin_y,
            pixel_size_x,
            pixel_size_y,
            crs_label: String::new(),
        }
    }

    /// Fractional (row, col) of a world coordinate; unbounded.
    pub fn world_to_pixel_f(&self, lon: f64, lat: f64) -> (f64, f64) {
        (
            (self.origin_y - lat) / self.pixel_size_y,
            (lon - self.origin_x) / self.pixel_size_x,
        )
    }

    /// World coordinate of a pixel's center.
    pub fn pixel_center(&self, row: usize, col: usize) -> (f64, f64) {
        (
            self.origin_x + (col as f64 + 0.5) * self.pixel_size_x,
            self.origin_y - (row as f64 + 0.5) * self.pixel_size_y,
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_within_half_pixel() {
        let t = GeoTransform::new(-3.5, 61.25, 0.25, 0.25);
        for (lon, lat) in [(-3.4, 61.2), (0.13, 50.01), (7.99, 42.375)] {
            let (rf, cf) = t.world_to_pixel_f(lon, lat);
            let (row, col) = (rf.floor() as usize, cf.floor() as usize);
            let (cx, cy) = t.pixel_center(row, col);
            assert!((cx - lon).abs() <= 0.5 * t.pixel_size_x + 1e-12);
            assert!((cy - lat).abs() <= 0.5 * t.pixel_size_y + 1e-12);
        }
    }

    #[test]
    fn boundary_belongs_to_higher_index_cell() {
        let t = GeoTransform::new(0.0, 10.0, 1.0, 1.0);
        let (rf, cf) = t.world_to_pixel_f(1.0, 9.0);
        assert_eq!(rf.floor(), 1.0);
        assert_eq!(cf.floor(), 1.0);
    }
}
