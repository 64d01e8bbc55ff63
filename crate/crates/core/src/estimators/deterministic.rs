use std::collections::BTreeMap;

use super::{sparse_distance, tower_slot, EstimatorParams, Localizer, LocationEstimate, ScanWindow, Technique};
use crate::error::{Error, Result};
use crate::geo::{PlanarPoint, TowerId};
use crate::math::top_k_indices;
use crate::radio_map::RadioMap;

/// Added to every neighbour distance before inverting it into a weight.
pub const INVERSE_DISTANCE_EPS: f64 = 1e-6;

/// KNN over grid cells in signal space.
///
/// Each cell is summarized by the mean ASU of every tower it heard; the
/// window's readings are averaged per tower into one query vector. The `k`
/// nearest cells are averaged with weights `1 / (d + 1e-6)`.
pub fn deterministic_locate(
    map: &RadioMap,
    window: &ScanWindow<'_>,
    params: &EstimatorParams,
) -> Result<LocationEstimate> {
    Deterministic::new(map, *params)?.locate(window)
}

#[derive(Debug, Clone)]
pub struct Deterministic<'m> {
    map: &'m RadioMap,
    params: EstimatorParams,
    /// Per cell: `(tower slot, mean ASU)` sorted by slot.
    fingerprints: Vec<Vec<(usize, f64)>>,
}

impl<'m> Deterministic<'m> {
    pub fn new(map: &'m RadioMap, params: EstimatorParams) -> Result<Self> {
        params.validate()?;
        if map.cells().is_empty() {
            return Err(Error::EmptyMap);
        }
        let fingerprints = map
            .cells()
            .iter()
            .map(|cell| {
                cell.histograms()
                    .iter()
                    .map(|(t, h)| (tower_slot(map.towers(), t).expect("registered"), h.mean_asu()))
                    .collect()
            })
            .collect();
        Ok(Deterministic { map, params, fingerprints })
    }

    /// Per-tower mean of the window's readings. Towers missing from the
    /// registry get slots past its end so they still count in the distance.
    fn query(&self, window: &ScanWindow<'_>) -> Vec<(usize, f64)> {
        let mut sums: BTreeMap<&TowerId, (f64, u32)> = BTreeMap::new();
        for scan in window.scans() {
            for (t, a) in scan.readings() {
                let e = sums.entry(t).or_insert((0.0, 0));
                e.0 += a.value() as f64;
                e.1 += 1;
            }
        }
        let registry = self.map.towers();
        let mut extra = registry.len();
        let mut out: Vec<(usize, f64)> = sums
            .into_iter()
            .map(|(t, (sum, n))| {
                let slot = tower_slot(registry, t).unwrap_or_else(|| {
                    extra += 1;
                    extra - 1
                });
                (slot, sum / n as f64)
            })
            .collect();
        out.sort_by_key(|e| e.0);
        out
    }
}

impl Localizer for Deterministic<'_> {
    fn technique(&self) -> Technique {
        Technique::Deterministic
    }

    fn window_len(&self) -> usize {
        self.params.n_samples
    }

    fn locate(&self, window: &ScanWindow<'_>) -> Result<LocationEstimate> {
        let query = self.query(window);
        let distances: Vec<f64> =
            self.fingerprints.iter().map(|fp| sparse_distance(fp.iter().copied(), query.iter().copied())).collect();
        let neg: Vec<f64> = distances.iter().map(|d| -d).collect();
        let nearest = top_k_indices(&neg, self.params.k);
        let raw: Vec<f64> = nearest.iter().map(|&i| 1.0 / (distances[i] + INVERSE_DISTANCE_EPS)).collect();
        let total: f64 = raw.iter().sum();
        let mut location = PlanarPoint::default();
        let mut contributing = Vec::with_capacity(nearest.len());
        for (&i, &w) in nearest.iter().zip(&raw) {
            let w = w / total;
            let cell = &self.map.cells()[i];
            location.x += w * cell.centroid().x;
            location.y += w * cell.centroid().y;
            contributing.push((cell.index(), w));
        }
        Ok(LocationEstimate { location, log_score: None, contributing_cells: contributing })
    }
}
