//! Δ-comparison between two evaluation reports over the same universe.

use std::fs;
use std::path::Path;

use super::{EvalReport, MetricsError};

#[derive(Debug, Clone, Default)]
pub struct ComparisonSummary {
    pub delta_median_auc: Option<f64>,
    pub delta_mean_f1: f64,
    pub species_rows: usize,
    pub site_rows: usize,
}

/// Join two reports per species (ΔAUC with occurrence counts, scatter-ready)
/// and per site (ΔF1 with coordinates, map-ready). Both reports must cover
/// the same species list and site list.
pub fn compare(
    a: &EvalReport,
    b: &EvalReport,
    out_dir: &Path,
) -> Result<ComparisonSummary, MetricsError> {
    if a.species_ids != b.species_ids {
        return Err(MetricsError::MismatchedUniverse(
            "species lists differ".into(),
        ));
    }
    let ids_a: Vec<&str> = a.sites.iter().map(|s| s.id.as_str()).collect();
    let ids_b: Vec<&str> = b.sites.iter().map(|s| s.id.as_str()).collect();
    if ids_a != ids_b {
        return Err(MetricsError::MismatchedUniverse(format!(
            "site lists differ ({} vs {} sites)",
            ids_a.len(),
            ids_b.len()
        )));
    }

    fs::create_dir_all(out_dir)?;
    let mut species = String::from("species_id,auc_a,auc_b,delta_auc,n_train,n_val\n");
    for (i, id) in a.species_ids.iter().enumerate() {
        let (auc_a, auc_b) = (a.per_species_auc[i], b.per_species_auc[i]);
        let delta = match (auc_a, auc_b) {
            (Some(x), Some(y)) => Some(y - x),
            _ => None,
        };
        let s = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        species.push_str(&format!(
            "{id},{},{},{},{},{}\n",
            s(auc_a),
            s(auc_b),
            s(delta),
            a.n_train_positives[i],
            a.n_val_positives[i]
        ));
    }
    fs::write(out_dir.join("delta_species.csv"), species)?;

    let mut sites = String::from("site_id,lon,lat,f1_a,f1_b,delta_f1\n");
    for (sa, sb) in a.sites.iter().zip(&b.sites) {
        sites.push_str(&format!(
            "{},{},{},{},{},{}\n",
            sa.id,
            sa.lon,
            sa.lat,
            sa.f1,
            sb.f1,
            sb.f1 - sa.f1
        ));
    }
    fs::write(out_dir.join("delta_sites.csv"), sites)?;

    Ok(ComparisonSummary {
        delta_median_auc: match (a.median_auc, b.median_auc) {
            (Some(x), Some(y)) => Some(y - x),
            _ => None,
        },
        delta_mean_f1: b.mean_f1 - a.mean_f1,
        species_rows: a.species_ids.len(),
        site_rows: a.sites.len(),
    })
}
