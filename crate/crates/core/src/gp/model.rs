use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{GpHyperparams, HyperGrid};
use crate::error::{Error, Result};
use crate::geo::{PlanarPoint, TowerId};
use crate::math::derive_seed;
use crate::radio_map::RadioMap;

const JITTER_RETRIES: usize = 3;
const JITTER_BASE: f64 = 1e-8;

/// Locations and ASU values heard from one tower.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainingSet {
    pub locations: Vec<PlanarPoint>,
    pub values: Vec<f64>,
}

impl TrainingSet {
    pub fn len(&self) -> usize {
        self.locations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.locations.is_empty()
    }

    /// Every fingerprint point of `map`, grouped by the towers it heard.
    pub fn per_tower(map: &RadioMap) -> Result<BTreeMap<TowerId, TrainingSet>> {
        if !map.points_retained() {
            return Err(Error::PointsStripped);
        }
        let mut sets: BTreeMap<TowerId, TrainingSet> = BTreeMap::new();
        for cell in map.cells() {
            for p in cell.points() {
                for (tower, asu) in &p.readings {
                    let set = sets.entry(tower.clone()).or_default();
                    set.locations.push(p.location);
                    set.values.push(asu.value() as f64);
                }
            }
        }
        Ok(sets)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GpConfig {
    pub hyper_grid: HyperGrid,
    /// Larger training sets are uniformly subsampled down to this size.
    pub max_training_points: usize,
    pub seed: u64,
}

impl Default for GpConfig {
    fn default() -> Self {
        GpConfig { hyper_grid: HyperGrid::default(), max_training_points: 500, seed: 0x5eed }
    }
}

/// Fitted zero-mean GP on centered ASU values for one tower.
#[derive(Debug, Clone)]
pub struct GpTowerModel {
    locations: Vec<PlanarPoint>,
    values: Vec<f64>,
    /// Training mean, subtracted before fitting and added back on prediction.
    offset: f64,
    hyper: GpHyperparams,
    /// Extra diagonal term that was needed for the factorization to succeed.
    jitter: f64,
    /// Lower Cholesky factor of `K + (σ_n² + jitter) I`.
    chol_lower: DMatrix<f64>,
    /// `(K + σ_n² I)⁻¹ (y − offset)`.
    weights: DVector<f64>,
    log_marginal_likelihood: f64,
}

impl GpTowerModel {
    pub fn hyper(&self) -> &GpHyperparams {
        &self.hyper
    }

    pub fn offset(&self) -> f64 {
        self.offset
    }

    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    pub fn training_locations(&self) -> &[PlanarPoint] {
        &self.locations
    }

    pub fn training_values(&self) -> &[f64] {
        &self.values
    }

    pub fn log_marginal_likelihood(&self) -> f64 {
        self.log_marginal_likelihood
    }

    /// Lower Cholesky factor of the regularized kernel matrix.
    pub fn cholesky_lower(&self) -> &DMatrix<f64> {
        &self.chol_lower
    }

    /// Fits with fixed hyperparameters.
    pub fn fit(data: &TrainingSet, hyper: GpHyperparams) -> Result<GpTowerModel> {
        hyper.validate()?;
        check_data(data)?;
        let sq = squared_distances(&data.locations);
        fit_with_distances(data, &sq, hyper)
    }

    fn kernel_column(&self, p: &PlanarPoint) -> DVector<f64> {
        DVector::from_iterator(self.locations.len(), self.locations.iter().map(|q| super::kernel(p, q, &self.hyper)))
    }

    /// Posterior mean and variance at many points at once (one triangular solve).
    pub fn predict_many(&self, points: &[PlanarPoint]) -> (Vec<f64>, Vec<f64>) {
        let n = self.locations.len();
        let cross =
            DMatrix::from_fn(n, points.len(), |i, j| super::kernel(&points[j], &self.locations[i], &self.hyper));
        let means = cross.tr_mul(&self.weights).iter().map(|m| m + self.offset).collect();
        let solved = self.chol_lower.solve_lower_triangular(&cross).expect("Cholesky factor has a positive diagonal");
        let vars = solved.column_iter().map(|c| (self.hyper.sigma_f2 - c.norm_squared()).max(0.0)).collect();
        (means, vars)
    }
}

fn check_data(data: &TrainingSet) -> Result<()> {
    if data.locations.len() != data.values.len() {
        return Err(Error::InvalidArgument("training locations and values differ in length".into()));
    }
    if data.len() < 2 {
        return Err(Error::InvalidArgument(format!("GP needs at least 2 training points, got {}", data.len())));
    }
    Ok(())
}

fn squared_distances(locs: &[PlanarPoint]) -> DMatrix<f64> {
    DMatrix::from_fn(locs.len(), locs.len(), |i, j| {
        let dx = locs[i].x - locs[j].x;
        let dy = locs[i].y - locs[j].y;
        dx * dx + dy * dy
    })
}

fn fit_with_distances(data: &TrainingSet, sq: &DMatrix<f64>, hyper: GpHyperparams) -> Result<GpTowerModel> {
    let n = data.len();
    let offset = data.values.iter().sum::<f64>() / n as f64;
    let centered = DVector::from_iterator(n, data.values.iter().map(|v| v - offset));
    let inv_two_l2 = 1.0 / (2.0 * hyper.length_scale * hyper.length_scale);
    let base = sq.map(|d| hyper.sigma_f2 * (-d * inv_two_l2).exp());

    let mut jitter = 0.0;
    for attempt in 0..=JITTER_RETRIES {
        if attempt > 0 {
            jitter = JITTER_BASE * hyper.sigma_f2 * 10f64.powi(attempt as i32 - 1);
        }
        let mut k = base.clone();
        for i in 0..n {
            k[(i, i)] += hyper.sigma_n2 + jitter;
        }
        if let Some(chol) = k.cholesky() {
            let weights = chol.solve(&centered);
            let chol_lower = chol.unpack();
            let log_det_half: f64 = (0..n).map(|i| chol_lower[(i, i)].ln()).sum();
            let lml = -0.5 * centered.dot(&weights) - log_det_half - 0.5 * n as f64 * (2.0 * std::f64::consts::PI).ln();
            return Ok(GpTowerModel {
                locations: data.locations.clone(),
                values: data.values.clone(),
                offset,
                hyper,
                jitter,
                chol_lower,
                weights,
                log_marginal_likelihood: lml,
            });
        }
    }
    Err(Error::Factorization)
}

/// Standard GP log marginal likelihood of the centered data under `hyper`.
pub fn log_marginal_likelihood(data: &TrainingSet, hyper: GpHyperparams) -> Result<f64> {
    GpTowerModel::fit(data, hyper).map(|m| m.log_marginal_likelihood)
}

/// Seeded uniform subsample preserving the original order.
pub(crate) fn subsample(data: &TrainingSet, max: usize, seed: u64) -> TrainingSet {
    if data.len() <= max {
        return data.clone();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut idx = rand::seq::index::sample(&mut rng, data.len(), max).into_vec();
    idx.sort_unstable();
    TrainingSet {
        locations: idx.iter().map(|&i| data.locations[i]).collect(),
        values: idx.iter().map(|&i| data.values[i]).collect(),
    }
}

/// Fits one tower, choosing the hyperparameters with the highest log marginal likelihood.
///
/// Candidates whose factorization fails even with jitter are skipped; ties keep
/// the earlier candidate in [`HyperGrid::candidates`] order.
pub fn gp_fit(data: &TrainingSet, config: &GpConfig) -> Result<GpTowerModel> {
    check_data(data)?;
    let data = subsample(data, config.max_training_points.max(2), config.seed);
    let sq = squared_distances(&data.locations);
    let mut best: Option<GpTowerModel> = None;
    for hyper in config.hyper_grid.candidates() {
        hyper.validate()?;
        let Ok(model) = fit_with_distances(&data, &sq, hyper) else {
            continue;
        };
        if best.as_ref().is_none_or(|b| model.log_marginal_likelihood > b.log_marginal_likelihood) {
            best = Some(model);
        }
    }
    best.ok_or(Error::Factorization)
}

/// Posterior mean and variance at `p`.
pub fn gp_predict(model: &GpTowerModel, p: &PlanarPoint) -> (f64, f64) {
    let k = model.kernel_column(p);
    let mean = model.offset + k.dot(&model.weights);
    let v = model.chol_lower.solve_lower_triangular(&k).expect("Cholesky factor has a positive diagonal");
    (mean, (model.hyper.sigma_f2 - v.norm_squared()).max(0.0))
}

/// Fits every tower of `map` heard at two or more fingerprint points, in parallel.
pub fn fit_towers(map: &RadioMap, config: &GpConfig) -> Result<BTreeMap<TowerId, GpTowerModel>> {
    let sets: Vec<(TowerId, TrainingSet)> =
        TrainingSet::per_tower(map)?.into_iter().filter(|(_, s)| s.len() >= 2).collect();
    sets.into_par_iter()
        .enumerate()
        .map(|(i, (tower, set))| {
            let cfg = GpConfig { seed: derive_seed(config.seed, i as u64), ..config.clone() };
            gp_fit(&set, &cfg).map(|m| (tower, m))
        })
        .collect()
}
