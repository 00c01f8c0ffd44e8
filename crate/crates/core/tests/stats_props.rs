mod common;

use std::collections::BTreeMap;

use proptest::prelude::*;

use pvi_core::catalog::{filter_critical, filter_pc_pvi, selected, PviRecord};
use pvi_core::config::{CatalogFormat, RunParams};
use pvi_core::export::render_run;
use pvi_core::motion::MotionLabel;
use pvi_core::pipeline::run_pipeline;
use pvi_core::stats::{default_bands, odds_ratio_table, Counts};
use pvi_core::testkit::fixture_set;

fn population() -> impl Strategy<Value = (BTreeMap<String, MotionLabel>, Vec<PviRecord>)> {
    prop::collection::vec((any::<bool>(), prop::option::of(-6.0..6.0f64)), 0..200).prop_map(|v| {
        let mut pop = BTreeMap::new();
        let mut recs = Vec::new();
        for (i, (non_ordinary, pet)) in v.into_iter().enumerate() {
            let id = format!("p{i:04}");
            let label = if non_ordinary { MotionLabel::NonOrdinary } else { MotionLabel::Ordinary };
            pop.insert(id.clone(), label);
            if let Some(pet) = pet.filter(|p| p.abs() <= 4.0) {
                recs.push(common::record(&id, "v", pet));
            }
        }
        (pop, recs)
    })
}

fn subset(inner: &[PviRecord], outer: &[PviRecord]) -> bool {
    inner
        .iter()
        .all(|r| outer.iter().any(|o| o.pedestrian_id == r.pedestrian_id && o.vehicle_id == r.vehicle_id))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn swapping_groups_inverts_odds_ratio(a in 0u64..500, b in 0u64..500, c in 0u64..5000, d in 0u64..5000) {
        let n = Counts { a, b, c, d };
        if let (Some(o), Some(s)) = (n.odds_ratio(), n.swapped().odds_ratio()) {
            prop_assert!((o.odds_ratio * s.odds_ratio - 1.0).abs() < 1e-12);
            prop_assert!((o.ci95.0.ln() + s.ci95.1.ln()).abs() < 1e-9);
            prop_assert!((o.ci95.1.ln() + s.ci95.0.ln()).abs() < 1e-9);
        }
    }

    #[test]
    fn band_counts_partition_population((pop, recs) in population()) {
        let rows = odds_ratio_table(&pop, &recs, &default_bands(), 4.0).unwrap();
        let (bands, pc) = rows.split_at(rows.len() - 1);
        let in_bands: u64 = bands.iter().map(|r| r.n_nonordinary_in + r.n_ordinary_in).sum();
        prop_assert!(in_bands <= pop.len() as u64);
        for r in &rows {
            let c = r.counts();
            prop_assert_eq!(c.a + c.b + c.c + c.d, pop.len() as u64);
        }
        let shares: f64 = bands.iter().map(|r| r.share_pct).sum();
        prop_assert!((shares - pc[0].share_pct).abs() < 1e-9);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn pipeline_is_monotone_and_deterministic(seed in 0u64..10_000, n in 1usize..16, noise in 0.0..0.02f64) {
        let s = common::scene();
        let set = fixture_set(n, seed, noise, &s).unwrap();
        let tracks = set.tracks();
        let params = RunParams::default();
        let a = run_pipeline(&tracks, &s, &[], &params).unwrap();
        let b = run_pipeline(&tracks, &s, &[], &params).unwrap();
        let sel = selected(&a.records);
        prop_assert!(subset(&a.critical, &a.pc));
        prop_assert!(subset(&a.pc, &sel));
        prop_assert_eq!(filter_pc_pvi(&a.records, params.pc_window), a.pc.clone());
        prop_assert_eq!(filter_critical(&a.pc, params.critical_pet), a.critical.clone());
        prop_assert!(a.counts.is_monotone());
        for format in [CatalogFormat::Jsonl, CatalogFormat::Csv] {
            let (fa, ma) = render_run(&a, &params, format, vec![]);
            let (fb, _) = render_run(&b, &params, format, vec![]);
            prop_assert_eq!(fa, fb);
            prop_assert!(ma.is_consistent());
        }
    }
}
