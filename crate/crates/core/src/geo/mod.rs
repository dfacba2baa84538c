//! Georeferenced rasters, occurrence tables, and patch extraction.

mod occurrence;
mod patch;
mod raster;
mod transform;

pub use occurrence::{
    merge_po_records, read_pa_csv, read_po_raw_csv, read_species_csv, write_pa_csv,
    write_po_raw_csv, write_species_csv, OccurrenceTable, RawOccurrence, Site, SpeciesList,
    TableKind,
};
pub use patch::{extract_patch, footprint, round2, Patch};
pub use raster::{read_grb1, write_grb1, BandStats, GeoRaster};
pub use transform::GeoTransform;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum GeoError {
    #[error("coordinate ({lon}, {lat}) is outside the raster extent{detail}")]
    OutOfBounds {
        lon: f64,
        lat: f64,
        detail: String,
    },
    #[error("band {band} ('{name}') is degenerate: {reason}")]
    DegenerateBand {
        band: usize,
        name: String,
        reason: String,
    },
    #[error("nodata value inside the {size}x{size} window at ({lon}, {lat})")]
    NodataInWindow { lon: f64, lat: f64, size: usize },
    #[error("unknown species id '{0}'")]
    UnknownSpecies(String),
    #[error("band statistics missing; compute or load them before extraction")]
    StatsMissing,
    #[error("patch size must be odd and >= 1, got {0}")]
    InvalidPatchSize(usize),
    #[error("format error in {path}: {reason}")]
    Format { path: String, reason: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
