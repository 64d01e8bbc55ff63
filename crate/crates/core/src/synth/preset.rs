use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{generate_trace, PathLoss, Route, SynthTower, SynthWorld};
use crate::error::{Error, Result};
use crate::geo::{GeoPoint, PlanarPoint, PlanarRect, ScanVector, TowerId};
use crate::math::derive_seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PresetKind {
    Rural,
    Urban,
}

impl PresetKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            PresetKind::Rural => "rural",
            PresetKind::Urban => "urban",
        }
    }
}

impl fmt::Display for PresetKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PresetKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "rural" => Ok(PresetKind::Rural),
            "urban" => Ok(PresetKind::Urban),
            _ => Err(Error::UnknownPreset(s.to_string())),
        }
    }
}

struct Spec {
    origin: (f64, f64),
    side_m: f64,
    n_towers: usize,
    tx_power_dbm: f64,
    pathloss: PathLoss,
    speed: f64,
    streets: usize,
    test_steps: usize,
}

fn spec(kind: PresetKind) -> Spec {
    match kind {
        // 1.96 km², 26 towers/km²
        PresetKind::Rural => Spec {
            origin: (30.07, 31.02),
            side_m: 1400.0,
            n_towers: 51,
            tx_power_dbm: -39.0,
            pathloss: PathLoss {
                exponent: 3.0,
                shadow_sigma_db: 6.0,
                shadow_grid_spacing_m: 200.0,
                ..PathLoss::default()
            },
            speed: 12.0,
            streets: 7,
            test_steps: 34,
        },
        // 5.45 km², 25 towers/km², shorter range
        PresetKind::Urban => Spec {
            origin: (31.20, 29.92),
            side_m: 2335.0,
            n_towers: 137,
            tx_power_dbm: -39.5,
            pathloss: PathLoss { exponent: 3.5, shadow_sigma_db: 8.0, ..PathLoss::default() },
            speed: 6.0,
            streets: 4,
            test_steps: 13,
        },
    }
}

/// A seeded world with a war-driving route and an independent test route.
#[derive(Debug, Clone)]
pub struct Preset {
    pub kind: PresetKind,
    pub world: SynthWorld,
    pub train_route: Route,
    pub test_route: Route,
    pub train_seed: u64,
    pub test_seed: u64,
}

impl Preset {
    pub fn training_trace(&self) -> Vec<ScanVector> {
        generate_trace(&self.world, &self.train_route, self.train_seed)
    }

    pub fn test_trace(&self) -> Vec<ScanVector> {
        generate_trace(&self.world, &self.test_route, self.test_seed)
    }
}

/// Builds the `rural` or `urban` preset.
///
/// Towers are placed uniformly at random over a square. Both routes follow a
/// square street grid: training drives every street once in a serpentine,
/// testing is a random walk between intersections.
pub fn make_preset(name: &str, seed: u64) -> Result<Preset> {
    let kind: PresetKind = name.parse()?;
    let s = spec(kind);
    let bounds = PlanarRect::new(PlanarPoint::new(0.0, 0.0), PlanarPoint::new(s.side_m, s.side_m))?;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 0));
    let towers = (0..s.n_towers)
        .map(|i| SynthTower {
            id: TowerId::new(format!("T{i:03}")).expect("non-empty"),
            position: PlanarPoint::new(rng.random_range(0.0..s.side_m), rng.random_range(0.0..s.side_m)),
            tx_power_dbm: s.tx_power_dbm,
        })
        .collect();
    let origin = GeoPoint::new(s.origin.0, s.origin.1)?;
    let world = SynthWorld::new(origin, bounds, towers, s.pathloss, 2.0, seed)?;

    let spacing = s.side_m / s.streets as f64;
    let lines: Vec<f64> = (0..s.streets).map(|k| spacing / 2.0 + k as f64 * spacing).collect();
    let train_route = Route::new(serpentine(&lines), s.speed)?;
    let mut walk_rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 1));
    let test_route = Route::new(random_walk(&lines, s.test_steps, &mut walk_rng), s.speed)?;
    Ok(Preset {
        kind,
        world,
        train_route,
        test_route,
        train_seed: derive_seed(seed, 2),
        test_seed: derive_seed(seed, 3),
    })
}

/// Every horizontal street, then every vertical one, alternating direction.
fn serpentine(lines: &[f64]) -> Vec<PlanarPoint> {
    let (lo, hi) = (lines[0], lines[lines.len() - 1]);
    let mut pts = Vec::with_capacity(lines.len() * 4);
    for (k, &y) in lines.iter().enumerate() {
        let (a, b) = if k % 2 == 0 { (lo, hi) } else { (hi, lo) };
        pts.push(PlanarPoint::new(a, y));
        pts.push(PlanarPoint::new(b, y));
    }
    let end_x = pts.last().expect("at least one street").x;
    // walk the vertical streets starting from the side the horizontals ended on
    let order: Vec<f64> = if end_x == hi { lines.iter().rev().copied().collect() } else { lines.to_vec() };
    for (k, &x) in order.iter().enumerate() {
        let (a, b) = if k % 2 == 0 { (hi, lo) } else { (lo, hi) };
        pts.push(PlanarPoint::new(x, a));
        pts.push(PlanarPoint::new(x, b));
    }
    pts.dedup();
    pts
}

/// `steps` moves between neighbouring intersections, never reversing directly.
/// The start is moved a random fraction along the first block so test scans
/// do not line up with the training scans at intersections.
fn random_walk(lines: &[f64], steps: usize, rng: &mut impl Rng) -> Vec<PlanarPoint> {
    let n = lines.len() as i64;
    let mut at = (rng.random_range(0..n), rng.random_range(0..n));
    let mut prev: Option<(i64, i64)> = None;
    let mut pts = vec![PlanarPoint::new(lines[at.0 as usize], lines[at.1 as usize])];
    let phase: f64 = rng.random_range(0.0..1.0);
    for step in 0..steps {
        let options: Vec<(i64, i64)> = [(1, 0), (-1, 0), (0, 1), (0, -1)]
            .iter()
            .map(|(dx, dy)| (at.0 + dx, at.1 + dy))
            .filter(|&(i, j)| (0..n).contains(&i) && (0..n).contains(&j) && Some((i, j)) != prev)
            .collect();
        let next = options[rng.random_range(0..options.len())];
        prev = Some(at);
        at = next;
        let p = PlanarPoint::new(lines[at.0 as usize], lines[at.1 as usize]);
        if step == 0 {
            let q = pts[0];
            pts[0] = PlanarPoint::new(q.x + phase * (p.x - q.x), q.y + phase * (p.y - q.y));
        }
        pts.push(p);
    }
    pts
}
