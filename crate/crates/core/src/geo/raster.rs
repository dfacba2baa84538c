//! Multi-band georeferenced raster and the GRB1 file format.
//!
//! GRB1 is a text header (`key: value` lines, UTF-8) followed by a blank line
//! and raw 32-bit little-endian floats in band-major, row-major order.

use std::fs;
use std::io::Write;
use std::path::Path;

use super::{GeoError, GeoTransform};

/// Per-band normalization statistics: population mean and standard deviation
/// over the valid (non-nodata) pixels of the full raster.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BandStats {
    pub mean: f64,
    pub std: f64,
}

/// Immutable after load; patch extraction is a pure read and may run from
/// many threads concurrently.
#[derive(Debug, Clone)]
pub struct GeoRaster {
    pub label: String,
    pub bands: usize,
    pub height: usize,
    pub width: usize,
    pub transform: GeoTransform,
    pub nodata: Option<f32>,
    pub band_names: Vec<String>,
    data: Vec<f32>,
    band_stats: Option<Vec<BandStats>>,
}

impl GeoRaster {
    pub fn new(
        label: impl Into<String>,
        bands: usize,
        height: usize,
        width: usize,
        transform: GeoTransform,
        nodata: Option<f32>,
        data: Vec<f32>,
    ) -> Self {
        assert_eq!(data.len(), bands * height * width, "data does not match (B, H, W)");
        assert!(bands >= 1);
        let band_names = (0..bands).map(|b| format!("b{b}")).collect();
        GeoRaster {
            label: label.into(),
            bands,
            height,
            width,
            transform,
            nodata,
            band_names,
            data,
            band_stats: None,
        }
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn value(&self, band: usize, row: usize, col: usize) -> f32 {
        self.data[(band * self.height + row) * self.width + col]
    }

    pub fn band(&self, band: usize) -> &[f32] {
        let plane = self.height * self.width;
        &self.data[band * plane..(band + 1) * plane]
    }

    pub fn band_mut(&mut self, band: usize) -> &mut [f32] {
        let plane = self.height * self.width;
        &mut self.data[band * plane..(band + 1) * plane]
    }

    pub fn band_stats(&self) -> Option<&[BandStats]> {
        self.band_stats.as_deref()
    }

    pub fn set_band_stats(&mut self, stats: Vec<BandStats>) {
        assert_eq!(stats.len(), self.bands);
        assert!(stats.iter().all(|s| s.std > 0.0), "band std must be > 0");
        self.band_stats = Some(stats);
    }

    pub fn is_nodata(&self, v: f32) -> bool {
        match self.nodata {
            Some(nd) => v == nd || v.is_nan(),
            None => v.is_nan(),
        }
    }

    /// Pixel containing a world coordinate.
    pub fn world_to_pixel(&self, lon: f64, lat: f64) -> Result<(usize, usize), GeoError> {
        let (rf, cf) = self.transform.world_to_pixel_f(lon, lat);
        let (row, col) = (rf.floor(), cf.floor());
        if row < 0.0 || col < 0.0 || row >= self.height as f64 || col >= self.width as f64 {
            return Err(GeoError::OutOfBounds {
                lon,
                lat,
                detail: format!(" (raster '{}', {}x{})", self.label, self.height, self.width),
            });
        }
        Ok((row as usize, col as usize))
    }

    /// Compute and cache per-band population statistics over valid pixels.
    /// Accumulations run in f64. A band that is constant, all-nodata, or has
    /// fewer than two valid pixels is degenerate.
    pub fn compute_band_stats(&mut self) -> Result<&[BandStats], GeoError> {
        let mut stats = Vec::with_capacity(self.bands);
        for b in 0..self.bands {
            let mut sum = 0.0f64;
            let mut sum_sq = 0.0f64;
            let mut count = 0u64;
            for &v in self.band(b) {
                if self.is_nodata(v) {
                    continue;
                }
                let v = v as f64;
                sum += v;
                sum_sq += v * v;
                count += 1;
            }
            if count < 2 {
                return Err(GeoError::DegenerateBand {
                    band: b,
                    name: self.band_names[b].clone(),
                    reason: format!("{count} valid pixels"),
                });
            }
            let mean = sum / count as f64;
            let var = (sum_sq / count as f64 - mean * mean).max(0.0);
            if var == 0.0 {
                return Err(GeoError::DegenerateBand {
                    band: b,
                    name: self.band_names[b].clone(),
                    reason: "zero variance".into(),
                });
            }
            stats.push(BandStats {
                mean,
                std: var.sqrt(),
            });
        }
        self.band_stats = Some(stats);
        Ok(self.band_stats.as_deref().unwrap())
    }
}

pub fn write_grb1(path: &Path, raster: &GeoRaster) -> Result<(), GeoError> {
    let t = &raster.transform;
    let mut header = String::new();
    header.push_str("magic: GRB1\n");
    header.push_str(&format!("bands: {}\n", raster.bands));
    header.push_str(&format!("height: {}\n", raster.height));
    header.push_str(&format!("width: {}\n", raster.width));
    header.push_str(&format!("origin_x: {}\n", t.origin_x));
    header.push_str(&format!("origin_y: {}\n", t.origin_y));
    header.push_str(&format!("pixel_size_x: {}\n", t.pixel_size_x));
    header.push_str(&format!("pixel_size_y: {}\n", t.pixel_size_y));
    header.push_str(&format!("crs: {}\n", t.crs_label));
    if let Some(nd) = raster.nodata {
        header.push_str(&format!("nodata: {nd}\n"));
    }
    header.push_str(&format!("band_names: {}\n", raster.band_names.join(",")));
    if let Some(stats) = raster.band_stats() {
        let means: Vec<String> = stats.iter().map(|s| s.mean.to_string()).collect();
        let stds: Vec<String> = stats.iter().map(|s| s.std.to_string()).collect();
        header.push_str(&format!("band_means: {}\n", means.join(",")));
        header.push_str(&format!("band_stds: {}\n", stds.join(",")));
    }
    header.push('\n');

    let mut bytes = header.into_bytes();
    bytes.reserve(raster.data.len() * 4);
    for v in &raster.data {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    let mut f = fs::File::create(path)?;
    f.write_all(&bytes)?;
    Ok(())
}

pub fn read_grb1(path: &Path) -> Result<GeoRaster, GeoError> {
    let err = |reason: String| GeoError::Format {
        path: path.display().to_string(),
        reason,
    };
    let bytes = fs::read(path)?;
    let split = bytes
        .windows(2)
        .position(|w| w == b"\n\n")
        .ok_or_else(|| err("missing blank line after header".into()))?;
    let header = std::str::from_utf8(&bytes[..split])
        .map_err(|_| err("header is not UTF-8".into()))?;
    let payload = &bytes[split + 2..];

    let mut bands = None;
    let mut height = None;
    let mut width = None;
    let mut origin_x = None;
    let mut origin_y = None;
    let mut pixel_size_x = None;
    let mut pixel_size_y = None;
    let mut crs = String::new();
    let mut nodata = None;
    let mut band_names: Option<Vec<String>> = None;
    let mut band_means: Option<Vec<f64>> = None;
    let mut band_stds: Option<Vec<f64>> = None;
    let mut magic_seen = false;

    for line in header.lines() {
        let (key, value) = line
            .split_once(':')
            .map(|(k, v)| (k.trim(), v.trim()))
            .ok_or_else(|| err(format!("malformed header line '{line}'")))?;
        match key {
            "magic" => {
                if value != "GRB1" {
                    return Err(err(format!("bad magic '{value}'")));
                }
                magic_seen = true;
            }
            "bands" => bands = Some(parse_num::<usize>(value, line, path)?),
            "height" => height = Some(parse_num::<usize>(value, line, path)?),
            "width" => width = Some(parse_num::<usize>(value, line, path)?),
            "origin_x" => origin_x = Some(parse_num::<f64>(value, line, path)?),
            "origin_y" => origin_y = Some(parse_num::<f64>(value, line, path)?),
            "pixel_size_x" => pixel_size_x = Some(parse_num::<f64>(value, line, path)?),
            "pixel_size_y" => pixel_size_y = Some(parse_num::<f64>(value, line, path)?),
            "crs" => crs = value.to_string(),
            "nodata" => nodata = Some(parse_num::<f32>(value, line, path)?),
            "band_names" => {
                band_names = Some(value.split(',').map(|s| s.trim().to_string()).collect())
            }
            "band_means" => band_means = Some(parse_num_list(value, line, path)?),
            "band_stds" => band_stds = Some(parse_num_list(value, line, path)?),
            other => return Err(err(format!("unknown header key '{other}'"))),
        }
    }
    if !magic_seen {
        return Err(err("missing magic".into()));
    }

    let bands = bands.ok_or_else(|| err("missing 'bands'".into()))?;
    let height = height.ok_or_else(|| err("missing 'height'".into()))?;
    let width = width.ok_or_else(|| err("missing 'width'".into()))?;
    let psx = pixel_size_x.ok_or_else(|| err("missing 'pixel_size_x'".into()))?;
    let psy = pixel_size_y.ok_or_else(|| err("missing 'pixel_size_y'".into()))?;
    if psx <= 0.0 || psy <= 0.0 {
        return Err(err("pixel sizes must be positive".into()));
    }

    let expected = bands * height * width * 4;
    if payload.len() != expected {
        return Err(err(format!(
            "payload is {} bytes, expected {expected}",
            payload.len()
        )));
    }
    let mut data = Vec::with_capacity(bands * height * width);
    for chunk in payload.chunks_exact(4) {
        data.push(f32::from_le_bytes([chunk[0], chunk[1], chunk[2], chunk[3]]));
    }

    let mut transform = GeoTransform::new(
        origin_x.ok_or_else(|| err("missing 'origin_x'".into()))?,
        origin_y.ok_or_else(|| err("missing 'origin_y'".into()))?,
        psx,
        psy,
    );
    transform.crs_label = crs;

    let label = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let mut raster = GeoRaster::new(label, bands, height, width, transform, nodata, data);
    if let Some(names) = band_names {
        if names.len() != bands {
            return Err(err(format!("{} band names for {bands} bands", names.len())));
        }
        raster.band_names = names;
    }
    match (band_means, band_stds) {
        (Some(means), Some(stds)) => {
            if means.len() != bands || stds.len() != bands {
                return Err(err("band stats length does not match band count".into()));
            }
            if stds.iter().any(|&s| s <= 0.0) {
                return Err(err("band std must be > 0".into()));
            }
            raster.band_stats = Some(
                means
                    .into_iter()
                    .zip(stds)
                    .map(|(mean, std)| BandStats { mean, std })
                    .collect(),
            );
        }
        (None, None) => {}
        _ => return Err(err("band_means and band_stds must appear together".into())),
    }
    Ok(raster)
}

fn parse_num<T: std::str::FromStr>(value: &str, line: &str, path: &Path) -> Result<T, GeoError> {
    value.parse::<T>().map_err(|_| GeoError::Format {
        path: path.display().to_string(),
        reason: format!("cannot parse number in '{line}'"),
    })
}

fn parse_num_list(value: &str, line: &str, path: &Path) -> Result<Vec<f64>, GeoError> {
    value
        .split(',')
        .map(|s| parse_num::<f64>(s.trim(), line, path))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_raster() -> GeoRaster {
        let t = GeoTransform::new(0.0, 10.0, 1.0, 1.0);
        GeoRaster::new("test", 1, 3, 3, t, None, vec![1.0, 2.0, 3.0, 1.0, 2.0, 3.0, 1.0, 2.0, 3.0])
    }

    #[test]
    fn world_to_pixel_first_cell() {
        let r = small_raster();
        assert_eq!(r.world_to_pixel(0.5, 9.5).unwrap(), (0, 0));
    }

    #[test]
    fn world_to_pixel_integer_grid() {
        let r = small_raster();
        assert_eq!(r.world_to_pixel(2.5, 7.5).unwrap(), (2, 2));
    }

    #[test]
    fn world_to_pixel_out_of_bounds() {
        let r = small_raster();
        assert!(matches!(
            r.world_to_pixel(-1.0, 9.5),
            Err(GeoError::OutOfBounds { .. })
        ));
    }

    #[test]
    fn band_stats_population() {
        let t = GeoTransform::new(0.0, 1.0, 1.0, 1.0);
        let mut r = GeoRaster::new("s", 1, 1, 3, t, None, vec![1.0, 2.0, 3.0]);
        let stats = r.compute_band_stats().unwrap();
        assert!((stats[0].mean - 2.0).abs() < 1e-12);
        assert!((stats[0].std - (2.0f64 / 3.0).sqrt()).abs() < 1e-12);
        assert!((stats[0].std - 0.8165).abs() < 1e-4);
    }

    #[test]
    fn constant_band_is_degenerate() {
        let t = GeoTransform::new(0.0, 1.0, 1.0, 1.0);
        let mut r = GeoRaster::new("s", 1, 1, 3, t, Some(-9999.0), vec![5.0, 5.0, -9999.0]);
        assert!(matches!(
            r.compute_band_stats(),
            Err(GeoError::DegenerateBand { .. })
        ));
    }

    #[test]
    fn all_nodata_band_is_degenerate() {
        let t = GeoTransform::new(0.0, 1.0, 1.0, 1.0);
        let mut r = GeoRaster::new("s", 1, 1, 3, t, Some(-1.0), vec![-1.0, -1.0, -1.0]);
        assert!(matches!(
            r.compute_band_stats(),
            Err(GeoError::DegenerateBand { .. })
        ));
    }

    #[test]
    fn grb1_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.grb1");
        let mut r = small_raster();
        r.nodata = Some(-9999.0);
        r.compute_band_stats().unwrap();
        write_grb1(&path, &r).unwrap();
        let back = read_grb1(&path).unwrap();
        assert_eq!(back.bands, r.bands);
        assert_eq!(back.data(), r.data());
        assert_eq!(back.nodata, r.nodata);
        assert_eq!(back.transform, r.transform);
        let (a, b) = (back.band_stats().unwrap(), r.band_stats().unwrap());
        assert_eq!(a[0].mean, b[0].mean);
        assert_eq!(a[0].std, b[0].std);
        assert_eq!(back.label, "r");
    }

    #[test]
    fn grb1_bad_payload_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.grb1");
        let r = small_raster();
        write_grb1(&path, &r).unwrap();
        let mut bytes = fs::read(&path).unwrap();
        bytes.pop();
        fs::write(&path, &bytes).unwrap();
        assert!(matches!(read_grb1(&path), Err(GeoError::Format { .. })));
    }
}
