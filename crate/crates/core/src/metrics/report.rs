//! Report files: species_metrics.csv, site_metrics.csv, summary.csv.
//!
//! All CSVs are UTF-8 with LF endings and '.' decimal separators; floats are
//! printed shortest-round-trip so identical results give identical bytes.

use std::fs;
use std::path::Path;

use super::{EvalReport, MetricsError, SiteMetric};

fn fmt_f64(v: f64) -> String {
    if v.is_nan() {
        String::new()
    } else {
        v.to_string()
    }
}

pub fn write_report_dir(dir: &Path, report: &EvalReport) -> Result<(), MetricsError> {
    fs::create_dir_all(dir)?;

    let mut species = String::from("species_id,auc,n_train,n_val\n");
    for (i, id) in report.species_ids.iter().enumerate() {
        let auc = report.per_species_auc[i].map(fmt_f64).unwrap_or_default();
        species.push_str(&format!(
            "{id},{auc},{},{}\n",
            report.n_train_positives[i], report.n_val_positives[i]
        ));
    }
    fs::write(dir.join("species_metrics.csv"), species)?;

    let mut sites = String::from("site_id,lon,lat,f1\n");
    for s in &report.sites {
        sites.push_str(&format!("{},{},{},{}\n", s.id, s.lon, s.lat, s.f1));
    }
    fs::write(dir.join("site_metrics.csv"), sites)?;

    let mut summary = String::from("key,value\n");
    summary.push_str(&format!(
        "median_auc,{}\n",
        report.median_auc.map(fmt_f64).unwrap_or_default()
    ));
    summary.push_str(&format!("site_f1_mean,{}\n", report.mean_f1));
    summary.push_str(&format!("n_sites_evaluated,{}\n", report.sites.len()));
    summary.push_str(&format!("n_sites_excluded,{}\n", report.n_sites_excluded));
    summary.push_str(&format!(
        "n_species_defined_auc,{}\n",
        report.species_ids.len() - report.n_species_undefined
    ));
    summary.push_str(&format!("n_species_undefined_auc,{}\n", report.n_species_undefined));
    summary.push_str(&format!("threshold,{}\n", report.threshold));
    summary.push_str(&format!("empty_sets_score,{}\n", report.empty_sets_score));
    fs::write(dir.join("summary.csv"), summary)?;
    Ok(())
}

/// Read a report directory back (the Δ-comparison inputs).
pub fn read_report_dir(dir: &Path) -> Result<EvalReport, MetricsError> {
    let species_path = dir.join("species_metrics.csv");
    let text = fs::read_to_string(&species_path)?;
    let mut species_ids = Vec::new();
    let mut per_species_auc = Vec::new();
    let mut n_train = Vec::new();
    let mut n_val = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if lineno == 0 || line.is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 4 {
            return Err(MetricsError::Format {
                path: species_path.display().to_string(),
                reason: format!("line {}: expected 4 fields", lineno + 1),
            });
        }
        species_ids.push(f[0].to_string());
        per_species_auc.push(if f[1].is_empty() {
            None
        } else {
            Some(parse_f64(f[1], &species_path, lineno)?)
        });
        n_train.push(parse_usize(f[2], &species_path, lineno)?);
        n_val.push(parse_usize(f[3], &species_path, lineno)?);
    }

    let sites_path = dir.join("site_metrics.csv");
    let text = fs::read_to_string(&sites_path)?;
    let mut sites = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if lineno == 0 || line.is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 4 {
            return Err(MetricsError::Format {
                path: sites_path.display().to_string(),
                reason: format!("line {}: expected 4 fields", lineno + 1),
            });
        }
        sites.push(SiteMetric {
            id: f[0].to_string(),
            lon: parse_f64(f[1], &sites_path, lineno)?,
            lat: parse_f64(f[2], &sites_path, lineno)?,
            f1: parse_f64(f[3], &sites_path, lineno)?,
        });
    }

    let defined: Vec<f64> = per_species_auc.iter().flatten().copied().collect();
    let n_species_undefined = species_ids.len() - defined.len();
    let mean_f1 = if sites.is_empty() {
        0.0
    } else {
        sites.iter().map(|s| s.f1).sum::<f64>() / sites.len() as f64
    };
    Ok(EvalReport {
        median_auc: super::median(&defined),
        species_ids,
        per_species_auc,
        sites,
        mean_f1,
        n_sites_excluded: 0,
        n_species_undefined,
        n_val_positives: n_val,
        n_train_positives: n_train,
        threshold: super::eval::BINARIZATION_THRESHOLD,
        empty_sets_score: 1.0,
    })
}

fn parse_f64(s: &str, path: &Path, lineno: usize) -> Result<f64, MetricsError> {
    s.parse::<f64>().map_err(|_| MetricsError::Format {
        path: path.display().to_string(),
        reason: format!("line {}: bad number '{s}'", lineno + 1),
    })
}

fn parse_usize(s: &str, path: &Path, lineno: usize) -> Result<usize, MetricsError> {
    s.parse::<usize>().map_err(|_| MetricsError::Format {
        path: path.display().to_string(),
        reason: format!("line {}: bad count '{s}'", lineno + 1),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn report_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let report = EvalReport {
            species_ids: vec!["A".into(), "B".into(), "C".into()],
            per_species_auc: vec![Some(0.875), None, Some(0.5)],
            median_auc: super::super::median(&[0.875, 0.5]),
            sites: vec![SiteMetric {
                id: "s0".into(),
                lon: 1.25,
                lat: 2.5,
                f1: 0.4,
            }],
            mean_f1: 0.4,
            n_sites_excluded: 2,
            n_species_undefined: 1,
            n_val_positives: vec![3, 0, 1],
            n_train_positives: vec![10, 4, 7],
            threshold: 0.5,
            empty_sets_score: 1.0,
        };
        write_report_dir(dir.path(), &report).unwrap();
        let back = read_report_dir(dir.path()).unwrap();
        assert_eq!(back.species_ids, report.species_ids);
        assert_eq!(back.per_species_auc, report.per_species_auc);
        assert_eq!(back.median_auc, report.median_auc);
        assert_eq!(back.sites, report.sites);
        assert_eq!(back.n_train_positives, report.n_train_positives);
    }
}
