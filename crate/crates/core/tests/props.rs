//! Property tests over the geodata, metrics, and loss invariants.

use proptest::prelude::*;

use msdm_core::geo::{
    extract_patch, merge_po_records, GeoRaster, GeoTransform, RawOccurrence, SpeciesList,
};
use msdm_core::metrics::{site_f1, species_auc, species_auc_pairwise};
use msdm_core::nn::Tensor;
use msdm_core::train::weighted_loss;

fn raster_16(values: Vec<f32>) -> GeoRaster {
    let t = GeoTransform::new(-4.0, 12.0, 0.5, 0.5);
    let mut r = GeoRaster::new("env", 1, 16, 16, t, None, values);
    r.compute_band_stats().unwrap();
    r
}

proptest! {
    #[test]
    fn world_pixel_roundtrip_within_half_pixel(
        lon in -3.99f64..3.99,
        lat in 4.01f64..11.99,
    ) {
        let r = raster_16((0..256).map(|i| i as f32).collect());
        let (row, col) = r.world_to_pixel(lon, lat).unwrap();
        let (cx, cy) = r.transform.pixel_center(row, col);
        prop_assert!((cx - lon).abs() <= 0.25 + 1e-12);
        prop_assert!((cy - lat).abs() <= 0.25 + 1e-12);
    }

    #[test]
    fn patch_center_matches_world_to_pixel(
        lon in -2.9f64..2.9,
        lat in 5.1f64..10.9,
        k in prop::sample::select(vec![1usize, 3, 5]),
        seed in 0u64..1000,
    ) {
        let values: Vec<f32> = (0..256).map(|i| ((i as u64 * 2654435761 + seed) % 997) as f32).collect();
        let r = raster_16(values);
        let patch = extract_patch(&r, (lon, lat), k).unwrap();
        let (row, col) = r.world_to_pixel(lon, lat).unwrap();
        let stats = r.band_stats().unwrap()[0];
        let expected = ((r.value(0, row, col) as f64 - stats.mean) / stats.std) as f32;
        let center = patch.values[(k / 2) * k + k / 2];
        prop_assert_eq!(center, expected);
    }

    #[test]
    fn nested_patches_share_center_block(
        lon in -1.4f64..1.4,
        lat in 6.6f64..9.4,
        seed in 0u64..1000,
    ) {
        let values: Vec<f32> = (0..256).map(|i| ((i as u64 * 40503 + seed * 7) % 991) as f32).collect();
        let r = raster_16(values);
        let small = extract_patch(&r, (lon, lat), 3).unwrap();
        let large = extract_patch(&r, (lon, lat), 7).unwrap();
        for row in 0..3 {
            for col in 0..3 {
                prop_assert_eq!(
                    small.values[row * 3 + col],
                    large.values[(row + 2) * 7 + (col + 2)]
                );
            }
        }
    }

    #[test]
    fn merge_is_idempotent_on_random_tables(
        recs in prop::collection::vec(
            (0u8..5, 0u8..5, 0u8..3, 0u8..3),
            1..60,
        )
    ) {
        let species = SpeciesList::new(vec!["s0".into(), "s1".into(), "s2".into()]);
        let raw: Vec<RawOccurrence> = recs
            .iter()
            .map(|&(x, y, d, sp)| RawOccurrence {
                lon: x as f64,
                lat: y as f64,
                date: format!("d{d}"),
                species_id: format!("s{sp}"),
            })
            .collect();
        let once = merge_po_records(&raw, &species).unwrap();
        let re_raw: Vec<RawOccurrence> = once
            .sites
            .iter()
            .flat_map(|s| s.species.iter().map(|&sp| RawOccurrence {
                lon: s.lon,
                lat: s.lat,
                date: s.date.clone(),
                species_id: once.species_ids[sp as usize].clone(),
            }))
            .collect();
        let twice = merge_po_records(&re_raw, &species).unwrap();
        prop_assert_eq!(once.sites.len(), twice.sites.len());
        for (a, b) in once.sites.iter().zip(&twice.sites) {
            prop_assert_eq!(&a.species, &b.species);
        }
        // Every PO row keeps at least one positive.
        prop_assert!(once.sites.iter().all(|s| !s.species.is_empty()));
    }

    #[test]
    fn auc_invariant_under_monotone_transform(
        scores in prop::collection::vec(0u8..12, 4..40),
        labels in prop::collection::vec(any::<bool>(), 4..40),
        a in 0.1f32..4.0,
        b in -2.0f32..2.0,
    ) {
        let m = scores.len().min(labels.len());
        let scores: Vec<f32> = scores[..m].iter().map(|&v| v as f32 / 11.0).collect();
        let labels = labels[..m].to_vec();
        // Strictly increasing map: exp preserves order and tie structure.
        let mapped: Vec<f32> = scores.iter().map(|&v| (a * v + b).exp()).collect();
        prop_assert_eq!(species_auc(&scores, &labels), species_auc(&mapped, &labels));
    }

    #[test]
    fn auc_complement_identity_without_ties(
        base in prop::collection::vec(0i32..10_000, 4..40),
        labels in prop::collection::vec(any::<bool>(), 4..40),
    ) {
        let m = base.len().min(labels.len());
        // Distinct scores by construction.
        let mut scores: Vec<f32> = Vec::with_capacity(m);
        let mut seen = std::collections::HashSet::new();
        for (i, &v) in base[..m].iter().enumerate() {
            let mut v = v;
            while !seen.insert(v) {
                v += 10_000 + i as i32;
            }
            scores.push(v as f32);
        }
        let labels = labels[..m].to_vec();
        let p = labels.iter().filter(|&&l| l).count();
        prop_assume!(p > 0 && p < m);
        let neg: Vec<f32> = scores.iter().map(|&s| -s).collect();
        let x = species_auc(&scores, &labels).unwrap();
        let y = species_auc(&neg, &labels).unwrap();
        prop_assert_eq!(x + y, 1.0);
    }

    #[test]
    fn auc_matches_pairwise_oracle(
        quant in prop::collection::vec(0u8..6, 2..50),
        labels in prop::collection::vec(any::<bool>(), 2..50),
    ) {
        let m = quant.len().min(labels.len());
        let scores: Vec<f32> = quant[..m].iter().map(|&v| v as f32 / 5.0).collect();
        let labels = labels[..m].to_vec();
        prop_assert_eq!(
            species_auc(&scores, &labels),
            species_auc_pairwise(&scores, &labels)
        );
    }

    #[test]
    fn f1_symmetric_and_one_iff_equal(
        p in prop::collection::btree_set(0u32..12, 0..8),
        t in prop::collection::btree_set(0u32..12, 0..8),
    ) {
        let p: Vec<u32> = p.into_iter().collect();
        let t: Vec<u32> = t.into_iter().collect();
        let a = site_f1(&p, &t);
        let b = site_f1(&t, &p);
        prop_assert_eq!(a, b);
        prop_assert!((0.0..=1.0).contains(&a));
        if p == t {
            prop_assert_eq!(a, 1.0);
        } else {
            prop_assert!(a < 1.0);
        }
    }

    #[test]
    fn loss_is_sample_and_species_permutation_invariant(
        preds in prop::collection::vec(0.02f32..0.98, 12),
        flip in prop::collection::vec(any::<bool>(), 12),
        pw in 1.0f32..5.0,
    ) {
        let labels: Vec<f32> = flip.iter().map(|&b| b as u8 as f32).collect();
        let base = weighted_loss(
            &Tensor::from_vec(&[3, 4], preds.clone()),
            &Tensor::from_vec(&[3, 4], labels.clone()),
            pw,
        ).unwrap();
        // Swap samples 0 and 2.
        let mut preds_s = preds.clone();
        let mut labels_s = labels.clone();
        preds_s.swap(0, 8); preds_s.swap(1, 9); preds_s.swap(2, 10); preds_s.swap(3, 11);
        labels_s.swap(0, 8); labels_s.swap(1, 9); labels_s.swap(2, 10); labels_s.swap(3, 11);
        let swapped = weighted_loss(
            &Tensor::from_vec(&[3, 4], preds_s),
            &Tensor::from_vec(&[3, 4], labels_s),
            pw,
        ).unwrap();
        prop_assert!((base - swapped).abs() < 1e-12);
        // Swap species columns 1 and 3.
        let mut preds_c = preds.clone();
        let mut labels_c = labels.clone();
        for row in 0..3 {
            preds_c.swap(row * 4 + 1, row * 4 + 3);
            labels_c.swap(row * 4 + 1, row * 4 + 3);
        }
        let col_swapped = weighted_loss(
            &Tensor::from_vec(&[3, 4], preds_c),
            &Tensor::from_vec(&[3, 4], labels_c),
            pw,
        ).unwrap();
        prop_assert!((base - col_swapped).abs() < 1e-12);
    }
}

/// Normalized values over a band's valid pixels have mean 0 and unit std.
#[test]
fn normalization_is_exact_over_valid_pixels() {
    let values: Vec<f32> = (0..256).map(|i| ((i * 31 % 97) as f32) * 0.37 - 11.0).collect();
    let r = raster_16(values);
    let stats = r.band_stats().unwrap()[0];
    let normalized: Vec<f64> = r
        .band(0)
        .iter()
        .map(|&v| (v as f64 - stats.mean) / stats.std)
        .collect();
    let n = normalized.len() as f64;
    let mean = normalized.iter().sum::<f64>() / n;
    let var = normalized.iter().map(|v| v * v).sum::<f64>() / n - mean * mean;
    assert!(mean.abs() < 1e-5, "mean {mean}");
    assert!((var.sqrt() - 1.0).abs() < 1e-5, "std {}", var.sqrt());
}
