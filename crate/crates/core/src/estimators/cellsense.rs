use super::{tower_slot, EstimatorParams, Localizer, LocationEstimate, ScanWindow, Technique};
use crate::error::{Error, Result};
use crate::geo::{PlanarPoint, ScanVector, ASU_LEVELS};
use crate::math::{normalized_weights, top_k_indices};
use crate::radio_map::{cell_likelihood, CellIndex, RadioMap, SmoothingParams};

/// Unnormalized log posterior of every cell under a uniform location prior.
///
/// Sums `ln P(s_ij | cell)` over every scan `j` in the window and every tower
/// `i` observed in that scan. Returned in cell order.
pub fn cell_log_posterior(map: &RadioMap, window: &ScanWindow<'_>, params: &EstimatorParams) -> Vec<(CellIndex, f64)> {
    let scores = direct_scores(map, window.scans(), &params.smoothing);
    map.cells().iter().map(|c| c.index()).zip(scores).collect()
}

pub(crate) fn direct_scores(map: &RadioMap, scans: &[ScanVector], smoothing: &SmoothingParams) -> Vec<f64> {
    map.cells()
        .iter()
        .map(|cell| {
            let mut score = 0.0;
            for scan in scans {
                for (tower, asu) in scan.readings() {
                    score += cell_likelihood(cell, tower.as_str(), *asu, smoothing).ln();
                }
            }
            score
        })
        .collect()
}

/// Weighted average of the `k` highest-scoring cell centroids.
///
/// Weights are the posteriors renormalized over the selected cells.
pub(crate) fn weighted_top_k(map: &RadioMap, scores: &[f64], k: usize) -> LocationEstimate {
    let best = top_k_indices(scores, k);
    let weights = normalized_weights(&best.iter().map(|&i| scores[i]).collect::<Vec<_>>());
    let mut location = PlanarPoint::default();
    let mut contributing = Vec::with_capacity(best.len());
    for (&i, &w) in best.iter().zip(&weights) {
        let cell = &map.cells()[i];
        location.x += w * cell.centroid().x;
        location.y += w * cell.centroid().y;
        contributing.push((cell.index(), w));
    }
    LocationEstimate { location, log_score: Some(scores[best[0]]), contributing_cells: contributing }
}

/// Probabilistic estimate from the whole window.
pub fn cellsense_locate(map: &RadioMap, window: &ScanWindow<'_>, params: &EstimatorParams) -> Result<LocationEstimate> {
    params.validate()?;
    if map.cells().is_empty() {
        return Err(Error::EmptyMap);
    }
    let scores = direct_scores(map, window.scans(), &params.smoothing);
    Ok(weighted_top_k(map, &scores, params.k))
}

/// `ln P(asu | cell, tower)` for every cell that heard each tower.
///
/// Cells without a histogram for a tower all score `ln p_min` for it, so only
/// the cells that heard the tower are stored; each reading touches those and
/// the floor terms are added per cell at the end.
#[derive(Debug, Clone)]
pub(crate) struct LogLikelihoodTable {
    n_cells: usize,
    towers: Vec<TowerColumns>,
    log_floor: f64,
}

#[derive(Debug, Clone, Default)]
struct TowerColumns {
    cells: Vec<u32>,
    /// `[asu][j]` for the `j`-th entry of `cells`.
    log_p: Vec<f64>,
}

impl LogLikelihoodTable {
    pub(crate) fn new(map: &RadioMap, smoothing: &SmoothingParams) -> Self {
        let n_cells = map.cells().len();
        let mut heard: Vec<Vec<(u32, &crate::radio_map::TowerHistogram)>> = vec![Vec::new(); map.towers().len()];
        for (c, cell) in map.cells().iter().enumerate() {
            for (tower, hist) in cell.histograms() {
                let t = tower_slot(map.towers(), tower).expect("registry covers every histogram");
                heard[t].push((c as u32, hist));
            }
        }
        let towers = heard
            .into_iter()
            .map(|entries| {
                let m = entries.len();
                let mut log_p = vec![0.0; ASU_LEVELS * m];
                for (j, (_, hist)) in entries.iter().enumerate() {
                    for asu in 0..ASU_LEVELS {
                        let level = crate::geo::RssiAsu::new(asu as i64).expect("in range");
                        log_p[asu * m + j] = hist.probability(level, smoothing.alpha).ln();
                    }
                }
                TowerColumns { cells: entries.iter().map(|(c, _)| *c).collect(), log_p }
            })
            .collect();
        LogLikelihoodTable { n_cells, towers, log_floor: smoothing.p_min.ln() }
    }

    /// Readings of each scan resolved to `(tower slot, asu)`.
    pub(crate) fn resolve(map: &RadioMap, scans: &[ScanVector]) -> Vec<(Option<usize>, usize)> {
        scans.iter().flat_map(|s| s.readings().iter().map(|(t, a)| (tower_slot(map.towers(), t), a.index()))).collect()
    }

    pub(crate) fn scores(&self, observations: &[(Option<usize>, usize)]) -> Vec<f64> {
        let mut sums = vec![0.0; self.n_cells];
        let mut hits = vec![0u32; self.n_cells];
        for &(tower, asu) in observations {
            let Some(t) = tower else { continue };
            let tc = &self.towers[t];
            let m = tc.cells.len();
            for (&c, &v) in tc.cells.iter().zip(&tc.log_p[asu * m..(asu + 1) * m]) {
                sums[c as usize] += v;
                hits[c as usize] += 1;
            }
        }
        let n_obs = observations.len() as u32;
        sums.iter().zip(&hits).map(|(s, &h)| s + f64::from(n_obs - h) * self.log_floor).collect()
    }
}

/// [`cellsense_locate`] with the per-cell log-likelihoods precomputed.
#[derive(Debug, Clone)]
pub struct CellSense<'m> {
    map: &'m RadioMap,
    params: EstimatorParams,
    table: LogLikelihoodTable,
}

impl<'m> CellSense<'m> {
    pub fn new(map: &'m RadioMap, params: EstimatorParams) -> Result<Self> {
        params.validate()?;
        if map.cells().is_empty() {
            return Err(Error::EmptyMap);
        }
        let table = LogLikelihoodTable::new(map, &params.smoothing);
        Ok(CellSense { map, params, table })
    }

    pub fn params(&self) -> &EstimatorParams {
        &self.params
    }

    pub fn log_posterior(&self, window: &ScanWindow<'_>) -> Vec<f64> {
        let obs = LogLikelihoodTable::resolve(self.map, window.scans());
        self.table.scores(&obs)
    }
}

impl Localizer for CellSense<'_> {
    fn technique(&self) -> Technique {
        Technique::CellSense
    }

    fn window_len(&self) -> usize {
        self.params.n_samples
    }

    fn locate(&self, window: &ScanWindow<'_>) -> Result<LocationEstimate> {
        let scores = self.log_posterior(window);
        Ok(weighted_top_k(self.map, &scores, self.params.k))
    }
}
