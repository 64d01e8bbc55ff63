//! Random small instances and brute-force reference implementations.
//!
//! The references work in the probability domain straight from the raw
//! fingerprint points of each cell, without going through histograms, log
//! scores or any helper of the library under test.
#![allow(dead_code)]

use std::collections::BTreeMap;

use cellsense::estimators::ScanWindow;
use cellsense::gp::{PrecomputedGrid, TowerField};
use cellsense::radio_map::FingerprintPoint;
use cellsense::{GeoPoint, GridCell, PlanarPoint, RadioMap, Readings, RssiAsu, ScanVector, TowerId};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const ALPHA: f64 = 0.5;
pub const P_MIN: f64 = 1e-4;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn tower(i: usize) -> TowerId {
    TowerId::new(format!("T{i}")).unwrap()
}

/// Readings for a random non-empty subset of `n_towers` towers, ASU near `base[t]`.
pub fn random_readings(rng: &mut impl Rng, n_towers: usize, base: &[i64]) -> Readings {
    loop {
        let mut r = Readings::new();
        for (t, b) in base.iter().enumerate().take(n_towers) {
            if rng.random_bool(0.7) {
                let asu = (b + rng.random_range(-3..=3)).clamp(0, 31);
                r.insert(tower(t), RssiAsu::new(asu).unwrap());
            }
        }
        if !r.is_empty() {
            return r;
        }
    }
}

/// Map with at most 10 cells of at most 10 points each over at most 5 towers.
pub fn random_map(rng: &mut impl Rng) -> RadioMap {
    let g = 50.0;
    let n_towers = rng.random_range(1..=5);
    let n_cells = rng.random_range(1..=10);
    let mut slots: Vec<(u32, u32)> = (0..4).flat_map(|r| (0..4).map(move |c| (r, c))).collect();
    // corner point pins the anchor at (0, 0) so cells land where placed
    let mut points = vec![FingerprintPoint {
        location: PlanarPoint::new(0.0, 0.0),
        readings: random_readings(rng, n_towers, &[15; 5]),
    }];
    slots.retain(|s| *s != (0, 0));
    let mut chosen = vec![(0, 0)];
    for _ in 1..n_cells {
        let i = rng.random_range(0..slots.len());
        chosen.push(slots.swap_remove(i));
    }
    for (k, &(row, col)) in chosen.iter().enumerate() {
        let base: Vec<i64> = (0..5).map(|_| rng.random_range(0..=31)).collect();
        let n = rng.random_range(1..=10) - usize::from(k == 0);
        for _ in 0..n {
            let x = col as f64 * g + rng.random_range(0.5..g - 0.5);
            let y = row as f64 * g + rng.random_range(0.5..g - 0.5);
            points.push(FingerprintPoint {
                location: PlanarPoint::new(x, y),
                readings: random_readings(rng, n_towers, &base),
            });
        }
    }
    RadioMap::from_points(GeoPoint::new(30.0, 31.0).unwrap(), g, points).unwrap()
}

/// One to three scans; sometimes with a tower the map has never heard.
pub fn random_window(rng: &mut impl Rng, n_scans: usize) -> Vec<ScanVector> {
    let base: Vec<i64> = (0..5).map(|_| rng.random_range(0..=31)).collect();
    (0..n_scans)
        .map(|t| {
            let mut r = random_readings(rng, 5, &base);
            if rng.random_bool(0.2) {
                r.insert(TowerId::new("ZZ").unwrap(), RssiAsu::new(rng.random_range(0..=31)).unwrap());
            }
            ScanVector::new(t as i64, r, None).unwrap()
        })
        .collect()
}

/// Smoothed frequency of `asu` among the cell's points that heard `tower`.
pub fn likelihood(cell: &GridCell, tower: &TowerId, asu: RssiAsu) -> f64 {
    let heard: Vec<u8> = cell.points().iter().filter_map(|p| p.readings.get(tower).map(|a| a.value())).collect();
    if heard.is_empty() {
        return P_MIN;
    }
    let hits = heard.iter().filter(|&&a| a == asu.value()).count() as f64;
    (hits + ALPHA) / (heard.len() as f64 + 32.0 * ALPHA)
}

pub fn window_probability(cell: &GridCell, scans: &[ScanVector]) -> f64 {
    let mut p = 1.0;
    for s in scans {
        for (t, a) in s.readings() {
            p *= likelihood(cell, t, *a);
        }
    }
    p
}

pub fn mean_location(points: &[PlanarPoint]) -> PlanarPoint {
    let n = points.len() as f64;
    PlanarPoint::new(points.iter().map(|p| p.x).sum::<f64>() / n, points.iter().map(|p| p.y).sum::<f64>() / n)
}

fn raw_centroid(cell: &GridCell) -> PlanarPoint {
    mean_location(&cell.points().iter().map(|p| p.location).collect::<Vec<_>>())
}

/// Cells ranked by probability, ties in map order.
fn ranked(map: &RadioMap, scans: &[ScanVector]) -> Vec<(usize, f64)> {
    let mut r: Vec<(usize, f64)> =
        map.cells().iter().enumerate().map(|(i, c)| (i, window_probability(c, scans))).collect();
    r.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    r
}

pub fn cellsense_oracle(map: &RadioMap, scans: &[ScanVector], k: usize) -> PlanarPoint {
    let top: Vec<(usize, f64)> = ranked(map, scans).into_iter().take(k).collect();
    let total: f64 = top.iter().map(|t| t.1).sum();
    let mut loc = PlanarPoint::new(0.0, 0.0);
    for (i, p) in top {
        let c = raw_centroid(&map.cells()[i]);
        loc.x += p / total * c.x;
        loc.y += p / total * c.y;
    }
    loc
}

fn dense(r: &Readings) -> BTreeMap<String, f64> {
    r.iter().map(|(t, a)| (t.to_string(), a.value() as f64)).collect()
}

fn euclid(a: &BTreeMap<String, f64>, b: &BTreeMap<String, f64>) -> f64 {
    let mut keys: Vec<&String> = a.keys().chain(b.keys()).collect();
    keys.sort();
    keys.dedup();
    keys.iter().map(|k| (a.get(*k).unwrap_or(&0.0) - b.get(*k).unwrap_or(&0.0)).powi(2)).sum::<f64>().sqrt()
}

pub fn hybrid_oracle(map: &RadioMap, scans: &[ScanVector], k: usize) -> PlanarPoint {
    let first = std::slice::from_ref(&scans[0]);
    let best = &map.cells()[ranked(map, first)[0].0];
    let q = dense(scans[0].readings());
    let mut d: Vec<(f64, usize)> =
        best.points().iter().enumerate().map(|(i, p)| (euclid(&dense(&p.readings), &q), i)).collect();
    d.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
    let chosen: Vec<PlanarPoint> = d.iter().take(k).map(|&(_, i)| best.points()[i].location).collect();
    mean_location(&chosen)
}

pub fn deterministic_oracle(map: &RadioMap, scans: &[ScanVector], k: usize) -> PlanarPoint {
    let mut sums: BTreeMap<String, (f64, f64)> = BTreeMap::new();
    for s in scans {
        for (t, a) in s.readings() {
            let e = sums.entry(t.to_string()).or_default();
            e.0 += a.value() as f64;
            e.1 += 1.0;
        }
    }
    let query: BTreeMap<String, f64> = sums.into_iter().map(|(t, (s, n))| (t, s / n)).collect();
    let mut d: Vec<(f64, usize)> = map
        .cells()
        .iter()
        .enumerate()
        .map(|(i, cell)| {
            let mut acc: BTreeMap<String, (f64, f64)> = BTreeMap::new();
            for p in cell.points() {
                for (t, a) in &p.readings {
                    let e = acc.entry(t.to_string()).or_default();
                    e.0 += a.value() as f64;
                    e.1 += 1.0;
                }
            }
            let fp = acc.into_iter().map(|(t, (s, n))| (t, s / n)).collect();
            (euclid(&fp, &query), i)
        })
        .collect();
    d.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
    let top = &d[..k.min(d.len())];
    let w: Vec<f64> = top.iter().map(|(dist, _)| 1.0 / (dist + 1e-6)).collect();
    let total: f64 = w.iter().sum();
    let mut loc = PlanarPoint::new(0.0, 0.0);
    for ((_, i), w) in top.iter().zip(&w) {
        let c = raw_centroid(&map.cells()[*i]);
        loc.x += w / total * c.x;
        loc.y += w / total * c.y;
    }
    loc
}

/// Random grid of up to 9 points and fields for up to 5 towers.
pub fn random_gp_grid(rng: &mut impl Rng) -> PrecomputedGrid {
    let n = rng.random_range(1..=9);
    let points: Vec<PlanarPoint> =
        (0..n).map(|_| PlanarPoint::new(rng.random_range(0.0..500.0), rng.random_range(0.0..500.0))).collect();
    let towers = (0..rng.random_range(1..=5))
        .map(|t| TowerField {
            tower: tower(t),
            noise_var: rng.random_range(1.0..16.0),
            mean: (0..n).map(|_| rng.random_range(0.0..31.0)).collect(),
            var: (0..n).map(|_| rng.random_range(0.0..20.0)).collect(),
        })
        .collect();
    PrecomputedGrid::new(points, towers).unwrap()
}

/// Scans read near the field means of one random grid point, so the
/// probability-domain reference does not underflow.
pub fn gp_window(rng: &mut impl Rng, grid: &PrecomputedGrid, n_scans: usize) -> Vec<ScanVector> {
    let at = rng.random_range(0..grid.points().len());
    (0..n_scans)
        .map(|t| {
            let mut r = Readings::new();
            for (i, f) in grid.towers().iter().enumerate() {
                if i == 0 || rng.random_bool(0.8) {
                    let asu = (f.mean[at].round() as i64 + rng.random_range(-2..=2)).clamp(0, 31);
                    r.insert(f.tower.clone(), RssiAsu::new(asu).unwrap());
                }
            }
            r.entry(TowerId::new("ZZ").unwrap()).or_insert(RssiAsu::new(9).unwrap());
            ScanVector::new(t as i64, r, None).unwrap()
        })
        .collect()
}

pub fn gp_oracle(grid: &PrecomputedGrid, scans: &[ScanVector]) -> PlanarPoint {
    let w: Vec<f64> = (0..grid.points().len())
        .map(|i| {
            let mut p = 1.0;
            for s in scans {
                for (t, a) in s.readings() {
                    if let Some(f) = grid.towers().iter().find(|f| &f.tower == t) {
                        let var = f.var[i] + f.noise_var;
                        let r = a.value() as f64 - f.mean[i];
                        p *= (-r * r / (2.0 * var)).exp() / (2.0 * std::f64::consts::PI * var).sqrt();
                    }
                }
            }
            p
        })
        .collect();
    let total: f64 = w.iter().sum();
    assert!(total > 1e-250, "reference underflowed");
    let mut loc = PlanarPoint::new(0.0, 0.0);
    for (p, w) in grid.points().iter().zip(&w) {
        loc.x += w / total * p.x;
        loc.y += w / total * p.y;
    }
    loc
}

pub fn window(scans: &[ScanVector]) -> ScanWindow<'_> {
    ScanWindow::new(scans).unwrap()
}

/// Gaussian elimination with partial pivoting; returns the solutions for
/// every right-hand side and `ln |det A|`.
pub fn dense_solve(mut a: Vec<Vec<f64>>, mut rhs: Vec<Vec<f64>>) -> (Vec<Vec<f64>>, f64) {
    let n = a.len();
    let mut log_det = 0.0;
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs())).unwrap();
        a.swap(col, piv);
        for r in rhs.iter_mut() {
            r.swap(col, piv);
        }
        log_det += a[col][col].abs().ln();
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            let (upper, lower) = a.split_at_mut(row);
            for (x, y) in lower[0][col..].iter_mut().zip(&upper[col][col..]) {
                *x -= f * y;
            }
            for r in rhs.iter_mut() {
                r[row] -= f * r[col];
            }
        }
    }
    for r in rhs.iter_mut() {
        for row in (0..n).rev() {
            let s: f64 = (row + 1..n).map(|c| a[row][c] * r[c]).sum();
            r[row] = (r[row] - s) / a[row][row];
        }
    }
    (rhs, log_det)
}

pub fn se(p: &PlanarPoint, q: &PlanarPoint, h: &cellsense::gp::GpHyperparams) -> f64 {
    let d2 = (p.x - q.x).powi(2) + (p.y - q.y).powi(2);
    h.sigma_f2 * (-d2 / (2.0 * h.length_scale.powi(2))).exp()
}

pub fn noisy_gram(data: &cellsense::gp::TrainingSet, h: &cellsense::gp::GpHyperparams) -> Vec<Vec<f64>> {
    let n = data.len();
    (0..n)
        .map(|i| {
            (0..n)
                .map(|j| se(&data.locations[i], &data.locations[j], h) + if i == j { h.sigma_n2 } else { 0.0 })
                .collect()
        })
        .collect()
}

/// Posterior mean and variance of the noiseless function at `q`, data centered on its mean.
pub fn naive_posterior(
    data: &cellsense::gp::TrainingSet,
    h: &cellsense::gp::GpHyperparams,
    q: &PlanarPoint,
) -> (f64, f64) {
    let offset = data.values.iter().sum::<f64>() / data.len() as f64;
    let y: Vec<f64> = data.values.iter().map(|v| v - offset).collect();
    let ks: Vec<f64> = data.locations.iter().map(|p| se(q, p, h)).collect();
    let (sol, _) = dense_solve(noisy_gram(data, h), vec![y, ks.clone()]);
    let mean = offset + ks.iter().zip(&sol[0]).map(|(a, b)| a * b).sum::<f64>();
    let var = h.sigma_f2 - ks.iter().zip(&sol[1]).map(|(a, b)| a * b).sum::<f64>();
    (mean, var)
}

pub fn naive_lml(data: &cellsense::gp::TrainingSet, h: &cellsense::gp::GpHyperparams) -> f64 {
    let offset = data.values.iter().sum::<f64>() / data.len() as f64;
    let y: Vec<f64> = data.values.iter().map(|v| v - offset).collect();
    let (sol, log_det) = dense_solve(noisy_gram(data, h), vec![y.clone()]);
    let fit: f64 = y.iter().zip(&sol[0]).map(|(a, b)| a * b).sum();
    -0.5 * fit - 0.5 * log_det - 0.5 * data.len() as f64 * (2.0 * std::f64::consts::PI).ln()
}

/// Smooth synthetic field sampled at `n` random points in a 2 km square, with noise.
pub fn random_training_set(rng: &mut impl Rng, n: usize) -> cellsense::gp::TrainingSet {
    let locations: Vec<PlanarPoint> =
        (0..n).map(|_| PlanarPoint::new(rng.random_range(0.0..2000.0), rng.random_range(0.0..2000.0))).collect();
    let (a, b) = (rng.random_range(100.0..600.0), rng.random_range(100.0..600.0));
    let values = locations
        .iter()
        .map(|p| {
            (15.0 + 8.0 * (p.x / a).sin() * (p.y / b).cos() + rng.random_range(-2.0..2.0)).round().clamp(0.0, 31.0)
        })
        .collect();
    cellsense::gp::TrainingSet { locations, values }
}
