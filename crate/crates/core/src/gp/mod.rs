//! Gaussian-process modeling baseline.
//!
//! One independent GP per tower regresses ASU on planar position with a
//! squared-exponential kernel. Hyperparameters are picked by maximizing the
//! log marginal likelihood over a small grid. The fitted models are evaluated
//! once on a regular lattice ([`PrecomputedGrid`]); localization weights every
//! lattice point by the Gaussian likelihood of the observed readings and
//! returns the weighted average of all points.

mod grid;
mod model;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geo::PlanarPoint;

pub use grid::{
    gp_build_grid, gp_grid_for_map, gp_locate, load_gp_grid, save_gp_grid, spacing_for_target, GpLocalizer,
    PrecomputedGrid, TowerField,
};
pub use model::{fit_towers, gp_fit, gp_predict, log_marginal_likelihood, GpConfig, GpTowerModel, TrainingSet};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GpHyperparams {
    /// Signal variance σ_f² (ASU²).
    pub sigma_f2: f64,
    /// Observation noise variance σ_n² (ASU²).
    pub sigma_n2: f64,
    /// Kernel length scale (meters).
    pub length_scale: f64,
}

impl GpHyperparams {
    pub fn new(sigma_f2: f64, sigma_n2: f64, length_scale: f64) -> Result<Self> {
        let h = GpHyperparams { sigma_f2, sigma_n2, length_scale };
        h.validate()?;
        Ok(h)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = |v: f64| v > 0.0 && v.is_finite();
        if ok(self.sigma_f2) && ok(self.sigma_n2) && ok(self.length_scale) {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!("GP hyperparameters must be positive: {self:?}")))
        }
    }
}

/// Squared-exponential kernel `σ_f² · exp(−‖p − q‖² / (2 l²))`.
#[inline]
pub fn kernel(p: &PlanarPoint, q: &PlanarPoint, hyper: &GpHyperparams) -> f64 {
    let dx = p.x - q.x;
    let dy = p.y - q.y;
    hyper.sigma_f2 * (-(dx * dx + dy * dy) / (2.0 * hyper.length_scale * hyper.length_scale)).exp()
}

/// Candidate values searched by [`gp_fit`]; every combination is tried.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperGrid {
    pub length_scales: Vec<f64>,
    pub sigma_f2: Vec<f64>,
    pub sigma_n2: Vec<f64>,
}

impl Default for HyperGrid {
    fn default() -> Self {
        HyperGrid {
            length_scales: vec![50.0, 100.0, 200.0, 400.0, 800.0],
            sigma_f2: vec![25.0, 100.0, 400.0],
            sigma_n2: vec![1.0, 4.0, 16.0],
        }
    }
}

impl HyperGrid {
    pub fn single(hyper: GpHyperparams) -> Self {
        HyperGrid {
            length_scales: vec![hyper.length_scale],
            sigma_f2: vec![hyper.sigma_f2],
            sigma_n2: vec![hyper.sigma_n2],
        }
    }

    /// Candidates in search order: length scale outermost, then σ_f², then σ_n².
    pub fn candidates(&self) -> Vec<GpHyperparams> {
        let mut out = Vec::new();
        for &length_scale in &self.length_scales {
            for &sigma_f2 in &self.sigma_f2 {
                for &sigma_n2 in &self.sigma_n2 {
                    out.push(GpHyperparams { sigma_f2, sigma_n2, length_scale });
                }
            }
        }
        out
    }
}
