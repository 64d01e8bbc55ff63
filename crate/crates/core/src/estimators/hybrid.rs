use super::cellsense::{direct_scores, LogLikelihoodTable};
use super::{rssi_distance, EstimatorParams, Localizer, LocationEstimate, ScanWindow, Technique};
use crate::error::{Error, Result};
use crate::geo::{PlanarPoint, ScanVector};
use crate::math::top_k_indices;
use crate::radio_map::RadioMap;

/// Two-phase estimate: most probable cell from the first scan of the window,
/// then the unweighted mean of the `params.k` fingerprint points inside that
/// cell closest to the same scan in signal space.
pub fn hybrid_locate(map: &RadioMap, window: &ScanWindow<'_>, params: &EstimatorParams) -> Result<LocationEstimate> {
    check(map, params)?;
    let scan = window.first();
    let scores = direct_scores(map, std::slice::from_ref(scan), &params.smoothing);
    Ok(refine(map, &scores, scan, params.k))
}

fn check(map: &RadioMap, params: &EstimatorParams) -> Result<()> {
    params.validate()?;
    if map.cells().is_empty() {
        return Err(Error::EmptyMap);
    }
    if !map.points_retained() {
        return Err(Error::PointsStripped);
    }
    Ok(())
}

fn refine(map: &RadioMap, scores: &[f64], scan: &ScanVector, k: usize) -> LocationEstimate {
    let best = top_k_indices(scores, 1)[0];
    let cell = &map.cells()[best];
    let mut ranked: Vec<(f64, usize)> =
        cell.points().iter().enumerate().map(|(i, p)| (rssi_distance(&p.readings, scan.readings()), i)).collect();
    // Stable: equal distances keep insertion order.
    ranked.sort_by(|a, b| a.0.total_cmp(&b.0));
    ranked.truncate(k);
    let location = PlanarPoint::mean(ranked.iter().map(|&(_, i)| &cell.points()[i].location))
        .expect("stored cells hold at least one point");
    LocationEstimate { location, log_score: Some(scores[best]), contributing_cells: vec![(cell.index(), 1.0)] }
}

/// [`hybrid_locate`] with precomputed log-likelihood tables for the rough phase.
#[derive(Debug, Clone)]
pub struct Hybrid<'m> {
    map: &'m RadioMap,
    params: EstimatorParams,
    table: LogLikelihoodTable,
}

impl<'m> Hybrid<'m> {
    pub fn new(map: &'m RadioMap, params: EstimatorParams) -> Result<Self> {
        check(map, &params)?;
        let table = LogLikelihoodTable::new(map, &params.smoothing);
        Ok(Hybrid { map, params, table })
    }
}

impl Localizer for Hybrid<'_> {
    fn technique(&self) -> Technique {
        Technique::Hybrid
    }

    fn window_len(&self) -> usize {
        self.params.n_samples
    }

    fn locate(&self, window: &ScanWindow<'_>) -> Result<LocationEstimate> {
        let scan = window.first();
        let obs = LogLikelihoodTable::resolve(self.map, std::slice::from_ref(scan));
        let scores = self.table.scores(&obs);
        Ok(refine(self.map, &scores, scan, self.params.k))
    }
}
