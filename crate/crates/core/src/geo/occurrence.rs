//! Occurrence tables: presence-only training records and presence-absence
//! validation sites, with CSV readers/writers and the PO merging rule.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use super::GeoError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TableKind {
    PresenceOnly,
    PresenceAbsence,
}

/// One observation row before merging: a single species seen at a location
/// on a date. The date tag is opaque; no calendar parsing.
#[derive(Debug, Clone, PartialEq)]
pub struct RawOccurrence {
    pub lon: f64,
    pub lat: f64,
    pub date: String,
    pub species_id: String,
}

/// A survey or merged-observation site with its multi-hot species labels,
/// stored sparsely as sorted species indices.
#[derive(Debug, Clone)]
pub struct Site {
    pub id: String,
    pub lon: f64,
    pub lat: f64,
    pub date: String,
    pub species: Vec<u32>,
}

impl Site {
    pub fn multi_hot(&self, species_count: usize) -> Vec<f32> {
        let mut v = vec![0.0; species_count];
        for &s in &self.species {
            v[s as usize] = 1.0;
        }
        v
    }
}

/// Ordered species universe: index in this list is the label index.
#[derive(Debug, Clone, Default)]
pub struct SpeciesList {
    pub ids: Vec<String>,
    index: HashMap<String, u32>,
}

impl SpeciesList {
    pub fn new(ids: Vec<String>) -> Self {
        let index = ids
            .iter()
            .enumerate()
            .map(|(i, id)| (id.clone(), i as u32))
            .collect();
        SpeciesList { ids, index }
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn index_of(&self, id: &str) -> Option<u32> {
        self.index.get(id).copied()
    }
}

#[derive(Debug, Clone)]
pub struct OccurrenceTable {
    pub kind: TableKind,
    pub sites: Vec<Site>,
    pub species_ids: Vec<String>,
}

impl OccurrenceTable {
    pub fn species_count(&self) -> usize {
        self.species_ids.len()
    }

    /// Positive label count per species across all sites.
    pub fn positives_per_species(&self) -> Vec<usize> {
        let mut counts = vec![0usize; self.species_count()];
        for site in &self.sites {
            for &s in &site.species {
                counts[s as usize] += 1;
            }
        }
        counts
    }

    /// Mean number of positive labels per site.
    pub fn mean_positives_per_site(&self) -> f64 {
        if self.sites.is_empty() {
            return 0.0;
        }
        let total: usize = self.sites.iter().map(|s| s.species.len()).sum();
        total as f64 / self.sites.len() as f64
    }
}

/// Merge raw presence-only records: one row per unique (lon, lat, date) with
/// the union of species observed there. Row order follows first appearance,
/// so merging is deterministic; merging an already-merged table is a no-op.
pub fn merge_po_records(
    raw: &[RawOccurrence],
    species: &SpeciesList,
) -> Result<OccurrenceTable, GeoError> {
    let mut key_index: HashMap<(u64, u64, &str), usize> = HashMap::with_capacity(raw.len());
    let mut sites: Vec<Site> = Vec::new();
    for rec in raw {
        let sp = species
            .index_of(&rec.species_id)
            .ok_or_else(|| GeoError::UnknownSpecies(rec.species_id.clone()))?;
        let key = (rec.lon.to_bits(), rec.lat.to_bits(), rec.date.as_str());
        match key_index.get(&key) {
            Some(&i) => {
                let labels = &mut sites[i].species;
                if let Err(pos) = labels.binary_search(&sp) {
                    labels.insert(pos, sp);
                }
            }
            None => {
                key_index.insert(key, sites.len());
                sites.push(Site {
                    id: format!("po_{}", sites.len()),
                    lon: rec.lon,
                    lat: rec.lat,
                    date: rec.date.clone(),
                    species: vec![sp],
                });
            }
        }
    }
    Ok(OccurrenceTable {
        kind: TableKind::PresenceOnly,
        sites,
        species_ids: species.ids.clone(),
    })
}

// ---- CSV io ----
// All files are UTF-8 with LF endings and '.' decimal separators.

pub fn read_species_csv(path: &Path) -> Result<SpeciesList, GeoError> {
    let text = fs::read_to_string(path)?;
    let mut ids = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if lineno == 0 {
            expect_header(line, "species_index,species_id", path)?;
            continue;
        }
        if line.is_empty() {
            continue;
        }
        let (idx, id) = line.split_once(',').ok_or_else(|| GeoError::Format {
            path: path.display().to_string(),
            reason: format!("line {}: expected 2 fields", lineno + 1),
        })?;
        let idx: usize = idx.parse().map_err(|_| GeoError::Format {
            path: path.display().to_string(),
            reason: format!("line {}: bad species_index", lineno + 1),
        })?;
        if idx != ids.len() {
            return Err(GeoError::Format {
                path: path.display().to_string(),
                reason: format!("line {}: species_index {idx} out of order", lineno + 1),
            });
        }
        ids.push(id.to_string());
    }
    Ok(SpeciesList::new(ids))
}

pub fn write_species_csv(path: &Path, species: &SpeciesList) -> Result<(), GeoError> {
    let mut out = String::from("species_index,species_id\n");
    for (i, id) in species.ids.iter().enumerate() {
        out.push_str(&format!("{i},{id}\n"));
    }
    fs::write(path, out)?;
    Ok(())
}

pub fn read_po_raw_csv(path: &Path) -> Result<Vec<RawOccurrence>, GeoError> {
    let text = fs::read_to_string(path)?;
    let mut records = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if lineno == 0 {
            expect_header(line, "lon,lat,date,species_id", path)?;
            continue;
        }
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 4 {
            return Err(GeoError::Format {
                path: path.display().to_string(),
                reason: format!("line {}: expected 4 fields", lineno + 1),
            });
        }
        records.push(RawOccurrence {
            lon: parse_f64(fields[0], lineno, path)?,
            lat: parse_f64(fields[1], lineno, path)?,
            date: fields[2].to_string(),
            species_id: fields[3].to_string(),
        });
    }
    Ok(records)
}

pub fn write_po_raw_csv(path: &Path, records: &[RawOccurrence]) -> Result<(), GeoError> {
    let mut out = String::from("lon,lat,date,species_id\n");
    for r in records {
        out.push_str(&format!("{},{},{},{}\n", r.lon, r.lat, r.date, r.species_id));
    }
    fs::write(path, out)?;
    Ok(())
}

pub fn read_pa_csv(path: &Path, species: &SpeciesList) -> Result<OccurrenceTable, GeoError> {
    let text = fs::read_to_string(path)?;
    let mut sites = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if lineno == 0 {
            expect_header(line, "site_id,lon,lat,species_ids", path)?;
            continue;
        }
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 4 {
            return Err(GeoError::Format {
                path: path.display().to_string(),
                reason: format!("line {}: expected 4 fields", lineno + 1),
            });
        }
        let mut indices = Vec::new();
        if !fields[3].is_empty() {
            for id in fields[3].split(';') {
                let sp = species
                    .index_of(id)
                    .ok_or_else(|| GeoError::UnknownSpecies(id.to_string()))?;
                if let Err(pos) = indices.binary_search(&sp) {
                    indices.insert(pos, sp);
                }
            }
        }
        sites.push(Site {
            id: fields[0].to_string(),
            lon: parse_f64(fields[1], lineno, path)?,
            lat: parse_f64(fields[2], lineno, path)?,
            date: String::new(),
            species: indices,
        });
    }
    Ok(OccurrenceTable {
        kind: TableKind::PresenceAbsence,
        sites,
        species_ids: species.ids.clone(),
    })
}

pub fn write_pa_csv(path: &Path, table: &OccurrenceTable) -> Result<(), GeoError> {
    let mut out = String::from("site_id,lon,lat,species_ids\n");
    for site in &table.sites {
        let ids: Vec<&str> = site
            .species
            .iter()
            .map(|&s| table.species_ids[s as usize].as_str())
            .collect();
        out.push_str(&format!("{},{},{},{}\n", site.id, site.lon, site.lat, ids.join(";")));
    }
    fs::write(path, out)?;
    Ok(())
}

fn expect_header(line: &str, expected: &str, path: &Path) -> Result<(), GeoError> {
    if line.trim() != expected {
        return Err(GeoError::Format {
            path: path.display().to_string(),
            reason: format!("expected header '{expected}', got '{line}'"),
        });
    }
    Ok(())
}

fn parse_f64(s: &str, lineno: usize, path: &Path) -> Result<f64, GeoError> {
    s.parse::<f64>().map_err(|_| GeoError::Format {
        path: path.display().to_string(),
        reason: format!("line {}: bad number '{s}'", lineno + 1),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn species_ab() -> SpeciesList {
        SpeciesList::new(vec!["A".into(), "B".into()])
    }

    fn rec(lon: f64, lat: f64, date: &str, sp: &str) -> RawOccurrence {
        RawOccurrence {
            lon,
            lat,
            date: date.into(),
            species_id: sp.into(),
        }
    }

    #[test]
    fn same_key_merges_labels() {
        let merged = merge_po_records(
            &[rec(1.0, 2.0, "d", "A"), rec(1.0, 2.0, "d", "B")],
            &species_ab(),
        )
        .unwrap();
        assert_eq!(merged.sites.len(), 1);
        assert_eq!(merged.sites[0].species, vec![0, 1]);
    }

    #[test]
    fn different_dates_stay_separate() {
        let merged = merge_po_records(
            &[rec(1.0, 2.0, "d", "A"), rec(1.0, 2.0, "e", "A")],
            &species_ab(),
        )
        .unwrap();
        assert_eq!(merged.sites.len(), 2);
    }

    #[test]
    fn unknown_species_rejected() {
        let res = merge_po_records(&[rec(1.0, 2.0, "d", "C")], &species_ab());
        assert!(matches!(res, Err(GeoError::UnknownSpecies(_))));
    }

    #[test]
    fn merge_is_idempotent() {
        let raw = vec![
            rec(1.0, 2.0, "d", "A"),
            rec(1.0, 2.0, "d", "B"),
            rec(3.0, 4.0, "d", "B"),
            rec(1.0, 2.0, "e", "A"),
        ];
        let merged = merge_po_records(&raw, &species_ab()).unwrap();
        // Re-expand the merged table to raw rows and merge again.
        let re_raw: Vec<RawOccurrence> = merged
            .sites
            .iter()
            .flat_map(|s| {
                s.species.iter().map(|&sp| RawOccurrence {
                    lon: s.lon,
                    lat: s.lat,
                    date: s.date.clone(),
                    species_id: merged.species_ids[sp as usize].clone(),
                })
            })
            .collect();
        let again = merge_po_records(&re_raw, &species_ab()).unwrap();
        assert_eq!(again.sites.len(), merged.sites.len());
        for (a, b) in again.sites.iter().zip(&merged.sites) {
            assert_eq!(a.species, b.species);
            assert_eq!((a.lon, a.lat, &a.date), (b.lon, b.lat, &b.date));
        }
    }

    #[test]
    fn pa_csv_roundtrip_with_empty_labels() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("pa.csv");
        let table = OccurrenceTable {
            kind: TableKind::PresenceAbsence,
            sites: vec![
                Site {
                    id: "s0".into(),
                    lon: 0.5,
                    lat: 1.5,
                    date: String::new(),
                    species: vec![1],
                },
                Site {
                    id: "s1".into(),
                    lon: 2.5,
                    lat: 3.5,
                    date: String::new(),
                    species: vec![],
                },
            ],
            species_ids: vec!["A".into(), "B".into()],
        };
        write_pa_csv(&path, &table).unwrap();
        let back = read_pa_csv(&path, &species_ab()).unwrap();
        assert_eq!(back.sites.len(), 2);
        assert_eq!(back.sites[0].species, vec![1]);
        assert!(back.sites[1].species.is_empty());
    }

    #[test]
    fn po_multi_hot() {
        let site = Site {
            id: "x".into(),
            lon: 0.0,
            lat: 0.0,
            date: "d".into(),
            species: vec![0, 2],
        };
        assert_eq!(site.multi_hot(4), vec![1.0, 0.0, 1.0, 0.0]);
    }
}
