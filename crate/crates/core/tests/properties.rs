mod common;

use cellsense::estimators::{cell_log_posterior, cellsense_locate, hybrid_locate, EstimatorParams};
use cellsense::gp::gp_locate;
use cellsense::math::{normalized_weights, top_k_indices};
use cellsense::radio_map::TowerHistogram;
use cellsense::synth::{generate_trace, make_preset, scan_at, Route};
use cellsense::{asu_to_dbm, dbm_to_asu, PlanarPoint, PlanarRect, RssiAsu, ScanVector};
use common::*;
use proptest::prelude::*;

fn inside_bbox(p: &PlanarPoint, pts: &[PlanarPoint]) -> bool {
    let b = PlanarRect::bounding(pts.iter()).unwrap();
    let eps = 1e-9;
    p.x >= b.min.x - eps && p.x <= b.max.x + eps && p.y >= b.min.y - eps && p.y <= b.max.y + eps
}

fn distance_to_polyline(p: &PlanarPoint, pts: &[PlanarPoint]) -> f64 {
    pts.windows(2)
        .map(|w| {
            let (a, b) = (w[0], w[1]);
            let (dx, dy) = (b.x - a.x, b.y - a.y);
            let len2 = dx * dx + dy * dy;
            let t = if len2 == 0.0 { 0.0 } else { (((p.x - a.x) * dx + (p.y - a.y) * dy) / len2).clamp(0.0, 1.0) };
            p.distance(&PlanarPoint::new(a.x + t * dx, a.y + t * dy))
        })
        .fold(f64::INFINITY, f64::min)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn top_k_and_weights_ignore_uniform_shifts(
        raw in prop::collection::vec(-4000i32..4000, 1..40),
        shift in -100_000i32..100_000,
        k in 1usize..12,
    ) {
        // eighths are exact in binary, so the shift itself never rounds
        let v: Vec<f64> = raw.iter().map(|&x| x as f64 / 8.0).collect();
        let shifted: Vec<f64> = v.iter().map(|x| x + shift as f64).collect();
        prop_assert_eq!(top_k_indices(&v, k), top_k_indices(&shifted, k));
        prop_assert_eq!(top_k_indices(&v, 1)[0], top_k_indices(&shifted, 1)[0]);
        for (a, b) in normalized_weights(&v).iter().zip(normalized_weights(&shifted)) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }
}

proptest! {
    #[test]
    fn unsmoothed_likelihoods_sum_to_one(counts in prop::array::uniform32(0u32..50), alpha in 0.0f64..3.0) {
        prop_assume!(counts.iter().sum::<u32>() > 0);
        let h = TowerHistogram::from_counts(counts);
        let total: f64 = (0..32).map(|a| h.probability(RssiAsu::new(a).unwrap(), alpha)).sum();
        prop_assert!((total - 1.0).abs() < 1e-12);
        let raw: f64 = (0..32).map(|a| h.probability(RssiAsu::new(a).unwrap(), 0.0)).sum();
        prop_assert!((raw - 1.0).abs() < 1e-12);
    }

    #[test]
    fn log_scores_match_probability_products(seed in any::<u64>(), n in 1usize..=3) {
        let mut rng = rng(seed);
        let map = random_map(&mut rng);
        let scans = random_window(&mut rng, n);
        let post = cell_log_posterior(&map, &window(&scans), &EstimatorParams::new(n, 1));
        for ((_, log_score), cell) in post.iter().zip(map.cells()) {
            let p = window_probability(cell, &scans);
            prop_assert!(p > 0.0);
            prop_assert!((log_score - p.ln()).abs() <= 1e-12 * p.ln().abs().max(1.0));
        }
    }

    #[test]
    fn estimates_stay_in_their_hulls(seed in any::<u64>(), k in 1usize..5) {
        let mut rng = rng(seed);
        let map = random_map(&mut rng);
        let scans = random_window(&mut rng, 2);
        let est = cellsense_locate(&map, &window(&scans), &EstimatorParams::new(2, k)).unwrap();
        let centroids: Vec<PlanarPoint> = est
            .contributing_cells
            .iter()
            .map(|(idx, _)| map.cell(*idx).unwrap().centroid())
            .collect();
        prop_assert!(inside_bbox(&est.location, &centroids));
        let weights: f64 = est.contributing_cells.iter().map(|c| c.1).sum();
        prop_assert!((weights - 1.0).abs() < 1e-12);

        let h = hybrid_locate(&map, &window(&scans[..1]), &EstimatorParams::new(1, k)).unwrap();
        let cell = map.cell(h.contributing_cells[0].0).unwrap();
        let pts: Vec<PlanarPoint> = cell.points().iter().map(|p| p.location).collect();
        prop_assert!(inside_bbox(&h.location, &pts));

        let grid = random_gp_grid(&mut rng);
        let gscans = gp_window(&mut rng, &grid, 2);
        let g = gp_locate(&grid, &window(&gscans)).unwrap();
        prop_assert!(inside_bbox(&g.location, grid.points()));
    }

    #[test]
    fn repeating_a_scan_never_narrows_the_lead(seed in any::<u64>(), n in 1usize..5) {
        let mut rng = rng(seed);
        let map = random_map(&mut rng);
        let scan = random_window(&mut rng, 1).remove(0);
        let repeat = |m: usize| -> Vec<ScanVector> {
            (0..m).map(|t| ScanVector::new(t as i64, scan.readings().clone(), None).unwrap()).collect()
        };
        let (short, long) = (repeat(n), repeat(n + 1));
        let a = cell_log_posterior(&map, &window(&short), &EstimatorParams::new(n, 1));
        let b = cell_log_posterior(&map, &window(&long), &EstimatorParams::new(n + 1, 1));
        let best = top_k_indices(&a.iter().map(|x| x.1).collect::<Vec<_>>(), 1)[0];
        for i in 0..a.len() {
            let before = a[best].1 - a[i].1;
            let after = b[best].1 - b[i].1;
            prop_assert!(after >= before - 1e-9 * before.abs().max(1.0));
        }
    }

    #[test]
    fn asu_conversion_round_trips(asu in 0i64..=31) {
        let a = RssiAsu::new(asu).unwrap();
        prop_assert_eq!(asu_to_dbm(a), 2.0 * asu as f64 - 113.0);
        prop_assert_eq!(dbm_to_asu(asu_to_dbm(a)), a);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn stronger_tower_stays_audible(seed in 0u64..1000, x in 0.0f64..1400.0, y in 0.0f64..1400.0, boost in 0.0f64..20.0) {
        let world = make_preset("rural", seed).unwrap().world;
        let p = PlanarPoint::new(x, y);
        let Ok(scan) = scan_at(&world, &p, 0) else { return Ok(()) };
        for (id, asu) in scan.readings() {
            let base = world.towers()[world.tower_index(id.as_str()).unwrap()].tx_power_dbm;
            let louder = world.with_tower_power(id.as_str(), base + boost).unwrap();
            let again = scan_at(&louder, &p, 0).unwrap();
            prop_assert!(again.readings().get(id).is_some_and(|a| a >= asu));
        }
    }

    #[test]
    fn synthetic_truth_lies_on_the_route(seed in 0u64..1000) {
        let preset = make_preset("rural", seed).unwrap();
        let route = Route::new(preset.test_route.waypoints().to_vec(), preset.test_route.speed()).unwrap();
        let trace = generate_trace(&preset.world, &route, 9);
        let proj = preset.world.projection();
        prop_assert!(!trace.is_empty());
        for s in &trace {
            let p = proj.project(s.truth().unwrap());
            prop_assert!(distance_to_polyline(&p, route.waypoints()) < 1e-6);
            prop_assert!(s.readings().len() <= 7);
        }
        prop_assert!(trace.windows(2).all(|w| w[0].timestamp() < w[1].timestamp()));
        prop_assert_eq!(generate_trace(&preset.world, &route, 9), trace);
    }
}
