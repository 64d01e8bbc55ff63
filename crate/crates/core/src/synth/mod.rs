//! Synthetic GSM world used as the evaluation substrate.
//!
//! Received power follows a log-distance path-loss law plus a static
//! shadowing field per tower: Normal values on a seeded lattice, bilinearly
//! interpolated, so revisiting a spot gives the same mean RSSI. Each generated
//! trace adds its own i.i.d. measurement noise on top.

mod preset;
mod route;

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geo::{
    dbm_to_asu, GeoPoint, PlanarPoint, PlanarRect, Projection, Readings, ScanVector, TowerId, MAX_READINGS,
};
use crate::math::derive_seed;

pub use preset::{make_preset, Preset, PresetKind};
pub use route::Route;

/// Weakest power a handset still reports (ASU 0).
pub const AUDIBLE_THRESHOLD_DBM: f64 = -113.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathLoss {
    /// Loss at the reference distance (dB).
    pub p0_db: f64,
    pub d0_m: f64,
    pub exponent: f64,
    pub shadow_sigma_db: f64,
    pub shadow_grid_spacing_m: f64,
}

impl Default for PathLoss {
    fn default() -> Self {
        PathLoss { p0_db: 30.0, d0_m: 10.0, exponent: 3.0, shadow_sigma_db: 6.0, shadow_grid_spacing_m: 100.0 }
    }
}

impl PathLoss {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::InvalidArgument(format!("path loss: {what}")));
        if !self.p0_db.is_finite() {
            return bad("p0 must be finite");
        }
        if !(self.d0_m > 0.0 && self.d0_m.is_finite()) {
            return bad("d0 must be positive");
        }
        if !(2.0..=5.0).contains(&self.exponent) {
            return bad("exponent must lie in [2, 5]");
        }
        if !(self.shadow_sigma_db >= 0.0 && self.shadow_sigma_db.is_finite()) {
            return bad("shadowing sigma must be non-negative");
        }
        if !(self.shadow_grid_spacing_m > 0.0 && self.shadow_grid_spacing_m.is_finite()) {
            return bad("shadowing lattice spacing must be positive");
        }
        Ok(())
    }

    /// Deterministic part of the loss at distance `d`.
    pub fn loss_db(&self, d: f64) -> f64 {
        self.p0_db + 10.0 * self.exponent * (d.max(self.d0_m) / self.d0_m).log10()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthTower {
    pub id: TowerId,
    pub position: PlanarPoint,
    pub tx_power_dbm: f64,
}

/// Shadowing values on a regular lattice covering the world bounds.
#[derive(Debug, Clone, PartialEq)]
struct ShadowField {
    nx: usize,
    ny: usize,
    values: Vec<f64>,
}

impl ShadowField {
    fn generate(bounds: &PlanarRect, spacing: f64, sigma: f64, seed: u64) -> Self {
        let nx = (bounds.width() / spacing).ceil() as usize + 1;
        let ny = (bounds.height() / spacing).ceil() as usize + 1;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let values = if sigma > 0.0 {
            let normal = Normal::new(0.0, sigma).expect("finite sigma");
            (0..nx * ny).map(|_| normal.sample(&mut rng)).collect()
        } else {
            vec![0.0; nx * ny]
        };
        ShadowField { nx, ny, values }
    }

    /// Bilinear interpolation; positions outside the lattice use the nearest edge.
    fn at(&self, bounds: &PlanarRect, spacing: f64, p: &PlanarPoint) -> f64 {
        let fx = ((p.x - bounds.min.x) / spacing).clamp(0.0, (self.nx - 1) as f64);
        let fy = ((p.y - bounds.min.y) / spacing).clamp(0.0, (self.ny - 1) as f64);
        let i = (fx.floor() as usize).min(self.nx.saturating_sub(2));
        let j = (fy.floor() as usize).min(self.ny.saturating_sub(2));
        let (tx, ty) = (fx - i as f64, fy - j as f64);
        let v = |a: usize, b: usize| self.values[b.min(self.ny - 1) * self.nx + a.min(self.nx - 1)];
        let bottom = v(i, j) * (1.0 - tx) + v(i + 1, j) * tx;
        let top = v(i, j + 1) * (1.0 - tx) + v(i + 1, j + 1) * tx;
        bottom * (1.0 - ty) + top * ty
    }
}

/// Towers, propagation model and the static shadowing fields derived from `seed`.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthWorld {
    origin: GeoPoint,
    bounds: PlanarRect,
    towers: Vec<SynthTower>,
    pathloss: PathLoss,
    measurement_sigma_db: f64,
    seed: u64,
    shadow: Vec<ShadowField>,
}

impl SynthWorld {
    /// `origin` anchors the planar frame when scans are given geographic ground truth.
    pub fn new(
        origin: GeoPoint,
        bounds: PlanarRect,
        towers: Vec<SynthTower>,
        pathloss: PathLoss,
        measurement_sigma_db: f64,
        seed: u64,
    ) -> Result<Self> {
        pathloss.validate()?;
        if !(measurement_sigma_db >= 0.0 && measurement_sigma_db.is_finite()) {
            return Err(Error::InvalidArgument("measurement sigma must be non-negative".into()));
        }
        if !towers.iter().any(|t| bounds.contains(&t.position)) {
            return Err(Error::InvalidArgument("world needs at least one tower inside its bounds".into()));
        }
        let mut ids: Vec<&TowerId> = towers.iter().map(|t| &t.id).collect();
        ids.sort();
        if ids.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidArgument("duplicate tower id".into()));
        }
        if towers.iter().any(|t| !t.tx_power_dbm.is_finite()) {
            return Err(Error::InvalidArgument("tower power must be finite".into()));
        }
        let shadow = (0..towers.len())
            .map(|i| {
                ShadowField::generate(
                    &bounds,
                    pathloss.shadow_grid_spacing_m,
                    pathloss.shadow_sigma_db,
                    derive_seed(seed, i as u64),
                )
            })
            .collect();
        Ok(SynthWorld { origin, bounds, towers, pathloss, measurement_sigma_db, seed, shadow })
    }

    pub fn origin(&self) -> GeoPoint {
        self.origin
    }

    pub fn projection(&self) -> Projection {
        Projection::new(self.origin)
    }

    pub fn bounds(&self) -> PlanarRect {
        self.bounds
    }

    pub fn towers(&self) -> &[SynthTower] {
        &self.towers
    }

    pub fn pathloss(&self) -> &PathLoss {
        &self.pathloss
    }

    pub fn measurement_sigma_db(&self) -> f64 {
        self.measurement_sigma_db
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Same world with one tower's transmit power changed. Shadowing is kept.
    pub fn with_tower_power(&self, id: &str, tx_power_dbm: f64) -> Result<SynthWorld> {
        let mut w = self.clone();
        let tower = w
            .towers
            .iter_mut()
            .find(|t| t.id.as_str() == id)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown tower {id}")))?;
        if !tx_power_dbm.is_finite() {
            return Err(Error::InvalidArgument("tower power must be finite".into()));
        }
        tower.tx_power_dbm = tx_power_dbm;
        Ok(w)
    }

    pub fn tower_index(&self, id: &str) -> Option<usize> {
        self.towers.iter().position(|t| t.id.as_str() == id)
    }

    pub fn tower_geo_locations(&self) -> BTreeMap<TowerId, GeoPoint> {
        let proj = self.projection();
        self.towers.iter().map(|t| (t.id.clone(), proj.unproject(&t.position))).collect()
    }

    /// Mean received power of tower `tower` (index into [`SynthWorld::towers`]) at `p`.
    pub fn received_dbm(&self, tower: usize, p: &PlanarPoint) -> f64 {
        let t = &self.towers[tower];
        let shadow = self.shadow[tower].at(&self.bounds, self.pathloss.shadow_grid_spacing_m, p);
        t.tx_power_dbm - self.pathloss.loss_db(t.position.distance(p)) + shadow
    }

    /// Builds a scan from per-tower powers: audible towers, strongest seven, quantized.
    fn scan_from_powers(&self, powers: &[f64], p: &PlanarPoint, t: i64) -> Result<ScanVector> {
        let mut audible: Vec<(usize, f64)> =
            powers.iter().copied().enumerate().filter(|(_, dbm)| *dbm >= AUDIBLE_THRESHOLD_DBM).collect();
        if audible.is_empty() {
            return Err(Error::EmptyScan(t));
        }
        // Stable sort: equal powers keep tower order.
        audible.sort_by(|a, b| b.1.total_cmp(&a.1));
        audible.truncate(MAX_READINGS);
        let readings: Readings = audible.iter().map(|&(i, dbm)| (self.towers[i].id.clone(), dbm_to_asu(dbm))).collect();
        ScanVector::new(t, readings, Some(self.projection().unproject(p)))
    }
}

/// Noise-free scan at `p` with timestamp `t`.
pub fn scan_at(world: &SynthWorld, p: &PlanarPoint, t: i64) -> Result<ScanVector> {
    let powers: Vec<f64> = (0..world.towers.len()).map(|i| world.received_dbm(i, p)).collect();
    world.scan_from_powers(&powers, p, t)
}

/// Walks `route` at one scan per second, adding measurement noise seeded by `trace_seed`.
///
/// A noise value is drawn for every tower at every step whether or not the
/// tower ends up audible, so the noise a tower sees never depends on the
/// others. Positions where nothing is audible produce no scan.
pub fn generate_trace(world: &SynthWorld, route: &Route, trace_seed: u64) -> Vec<ScanVector> {
    trace_powers(world, route, trace_seed)
        .into_iter()
        .filter_map(|(t, p, powers)| match world.scan_from_powers(&powers, &p, t) {
            Ok(scan) => Some(scan),
            Err(_) => {
                log::debug!("no tower audible at t={t}");
                None
            }
        })
        .collect()
}

/// Per-tower noisy powers behind [`generate_trace`], for consistency checks.
pub fn trace_powers(world: &SynthWorld, route: &Route, trace_seed: u64) -> Vec<(i64, PlanarPoint, Vec<f64>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(world.seed, trace_seed));
    let noise =
        (world.measurement_sigma_db > 0.0).then(|| Normal::new(0.0, world.measurement_sigma_db).expect("finite sigma"));
    route
        .sample_positions()
        .into_iter()
        .map(|(t, p)| {
            let powers = (0..world.towers.len())
                .map(|i| world.received_dbm(i, &p) + noise.map_or(0.0, |n| n.sample(&mut rng)))
                .collect();
            (t, p, powers)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geo::RssiAsu;

    fn rect(w: f64, h: f64) -> PlanarRect {
        PlanarRect::new(PlanarPoint::new(0.0, 0.0), PlanarPoint::new(w, h)).unwrap()
    }

    fn tower(id: &str, x: f64, y: f64, tx: f64) -> SynthTower {
        SynthTower { id: TowerId::new(id).unwrap(), position: PlanarPoint::new(x, y), tx_power_dbm: tx }
    }

    fn flat_world(towers: Vec<SynthTower>, n: f64) -> SynthWorld {
        let pl = PathLoss { exponent: n, shadow_sigma_db: 0.0, ..PathLoss::default() };
        SynthWorld::new(GeoPoint::new(30.0, 31.0).unwrap(), rect(1000.0, 1000.0), towers, pl, 0.0, 1).unwrap()
    }

    #[test]
    fn reference_distance_loss() {
        let w = flat_world(vec![tower("A", 500.0, 500.0, -20.0)], 3.0);
        assert_eq!(w.received_dbm(0, &PlanarPoint::new(510.0, 500.0)), -50.0);
        // inside d0 the loss is clamped
        assert_eq!(w.received_dbm(0, &PlanarPoint::new(502.0, 500.0)), -50.0);
    }

    #[test]
    fn ten_reference_distances_cost_thirty_db() {
        let w = flat_world(vec![tower("A", 500.0, 500.0, -20.0)], 3.0);
        let v = w.received_dbm(0, &PlanarPoint::new(500.0, 600.0));
        assert!((v - (-20.0 - 30.0 - 30.0)).abs() < 1e-12);
    }

    #[test]
    fn shadowing_is_static() {
        let pl = PathLoss::default();
        let w = SynthWorld::new(
            GeoPoint::new(30.0, 31.0).unwrap(),
            rect(1000.0, 800.0),
            vec![tower("A", 10.0, 10.0, 0.0)],
            pl,
            2.0,
            9,
        )
        .unwrap();
        let p = PlanarPoint::new(333.3, 271.9);
        assert_eq!(w.received_dbm(0, &p), w.received_dbm(0, &p));
        let again = SynthWorld::new(w.origin(), w.bounds(), w.towers().to_vec(), pl, 2.0, 9).unwrap();
        assert_eq!(w.received_dbm(0, &p), again.received_dbm(0, &p));
        let other = SynthWorld::new(w.origin(), w.bounds(), w.towers().to_vec(), pl, 2.0, 10).unwrap();
        assert_ne!(w.received_dbm(0, &p), other.received_dbm(0, &p));
    }

    #[test]
    fn shadow_field_interpolates_lattice_nodes() {
        let b = rect(300.0, 200.0);
        let f = ShadowField::generate(&b, 100.0, 5.0, 3);
        assert_eq!((f.nx, f.ny), (4, 3));
        assert_eq!(f.at(&b, 100.0, &PlanarPoint::new(100.0, 200.0)), f.values[2 * 4 + 1]);
        assert_eq!(f.at(&b, 100.0, &PlanarPoint::new(300.0, 200.0)), f.values[11]);
        let mid = f.at(&b, 100.0, &PlanarPoint::new(50.0, 0.0));
        assert!((mid - 0.5 * (f.values[0] + f.values[1])).abs() < 1e-12);
        // outside the bounds: clamped to the edge
        assert_eq!(f.at(&b, 100.0, &PlanarPoint::new(-40.0, -40.0)), f.values[0]);
    }

    #[test]
    fn single_tower_scan() {
        let w = flat_world(vec![tower("A", 500.0, 500.0, -20.0)], 3.0);
        let s = scan_at(&w, &PlanarPoint::new(510.0, 500.0), 4).unwrap();
        assert_eq!(s.readings().len(), 1);
        assert_eq!(s.readings()["A"], dbm_to_asu(-50.0));
        assert_eq!(s.timestamp(), 4);
    }

    #[test]
    fn keeps_seven_strongest() {
        let towers: Vec<_> = (0..10).map(|i| tower(&format!("T{i}"), 500.0, 500.0, -30.0 - i as f64 * 2.0)).collect();
        let w = flat_world(towers, 3.0);
        let s = scan_at(&w, &PlanarPoint::new(500.0, 500.0), 0).unwrap();
        let ids: Vec<&str> = s.readings().keys().map(|t| t.as_str()).collect();
        assert_eq!(ids, ["T0", "T1", "T2", "T3", "T4", "T5", "T6"]);
    }

    #[test]
    fn threshold_boundary_is_audible_at_asu_zero() {
        // -83 - 30 = -113 at the reference distance
        let w = flat_world(vec![tower("A", 500.0, 500.0, -83.0), tower("B", 500.0, 500.0, -83.0 - 1e-9)], 3.0);
        let s = scan_at(&w, &PlanarPoint::new(505.0, 500.0), 0).unwrap();
        assert_eq!(s.readings().len(), 1);
        assert_eq!(s.readings()["A"], RssiAsu::MIN);
    }

    #[test]
    fn silence_is_an_error() {
        let w = flat_world(vec![tower("A", 0.0, 0.0, -90.0)], 3.0);
        assert!(matches!(scan_at(&w, &PlanarPoint::new(900.0, 900.0), 3), Err(Error::EmptyScan(3))));
    }

    #[test]
    fn world_validation() {
        let o = GeoPoint::new(0.0, 0.0).unwrap();
        let t = vec![tower("A", 1.0, 1.0, 0.0)];
        let bad_n = PathLoss { exponent: 1.5, ..PathLoss::default() };
        assert!(SynthWorld::new(o, rect(10.0, 10.0), t.clone(), bad_n, 0.0, 0).is_err());
        let outside = vec![tower("A", 50.0, 1.0, 0.0)];
        assert!(SynthWorld::new(o, rect(10.0, 10.0), outside, PathLoss::default(), 0.0, 0).is_err());
        let dup = vec![tower("A", 1.0, 1.0, 0.0), tower("A", 2.0, 1.0, 0.0)];
        assert!(SynthWorld::new(o, rect(10.0, 10.0), dup, PathLoss::default(), 0.0, 0).is_err());
    }

    #[test]
    fn trace_matches_powers() {
        let towers: Vec<_> =
            (0..12).map(|i| tower(&format!("T{i:02}"), 80.0 * i as f64, 40.0 * i as f64, -45.0)).collect();
        let pl = PathLoss::default();
        let w = SynthWorld::new(GeoPoint::new(30.0, 31.0).unwrap(), rect(1000.0, 1000.0), towers, pl, 2.0, 5).unwrap();
        let route = Route::new(vec![PlanarPoint::new(0.0, 0.0), PlanarPoint::new(900.0, 450.0)], 7.0).unwrap();
        let trace = generate_trace(&w, &route, 11);
        let powers = trace_powers(&w, &route, 11);
        let mut scans = trace.iter();
        for (t, _, pw) in &powers {
            let audible = pw.iter().filter(|d| **d >= AUDIBLE_THRESHOLD_DBM).count();
            if audible == 0 {
                continue;
            }
            let s = scans.next().unwrap();
            assert_eq!(s.timestamp(), *t);
            for (id, asu) in s.readings() {
                let i = w.tower_index(id.as_str()).unwrap();
                assert_eq!(*asu, dbm_to_asu(pw[i]));
            }
        }
        assert!(scans.next().is_none());
    }
}
