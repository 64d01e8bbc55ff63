use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::model::{fit_towers, GpConfig, GpTowerModel};
use crate::error::{Error, Result};
use crate::estimators::{Localizer, LocationEstimate, ScanWindow, Technique};
use crate::geo::{PlanarPoint, PlanarRect, TowerId};
use crate::math::normalized_weights;
use crate::radio_map::file::{parse_envelope, read_text, write_json, FORMAT_VERSION};
use crate::radio_map::RadioMap;

pub const GP_GRID_KIND: &str = "gp_grid";

/// Posterior of one tower's GP at every lattice point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TowerField {
    pub tower: TowerId,
    /// Observation noise σ_n² of the fitted model, added to `var` in the likelihood.
    pub noise_var: f64,
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

/// Regular lattice of candidate positions with per-tower GP predictions.
#[derive(Debug, Clone, PartialEq)]
pub struct PrecomputedGrid {
    points: Vec<PlanarPoint>,
    /// Sorted by tower id.
    towers: Vec<TowerField>,
    spacing: Option<f64>,
}

impl PrecomputedGrid {
    pub fn new(points: Vec<PlanarPoint>, mut towers: Vec<TowerField>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::EmptyInput("GP grid points"));
        }
        towers.sort_by(|a, b| a.tower.cmp(&b.tower));
        if towers.windows(2).any(|w| w[0].tower == w[1].tower) {
            return Err(Error::Malformed("duplicate tower in GP grid".into()));
        }
        for f in &towers {
            if f.mean.len() != points.len() || f.var.len() != points.len() {
                return Err(Error::Malformed(format!("tower {} has wrong field length", f.tower)));
            }
            let finite = f.mean.iter().all(|m| m.is_finite());
            let var_ok = f.var.iter().all(|v| v.is_finite() && *v >= 0.0);
            if !finite || !var_ok || !(f.noise_var > 0.0 && f.noise_var.is_finite()) {
                return Err(Error::Malformed(format!("tower {} has invalid mean or variance", f.tower)));
            }
        }
        Ok(PrecomputedGrid { points, towers, spacing: None })
    }

    /// Lattice spacing, when the grid came from [`gp_build_grid`].
    pub fn spacing(&self) -> Option<f64> {
        self.spacing
    }

    pub fn points(&self) -> &[PlanarPoint] {
        &self.points
    }

    pub fn towers(&self) -> &[TowerField] {
        &self.towers
    }

    pub fn field(&self, tower: &str) -> Option<&TowerField> {
        self.towers.binary_search_by(|f| f.tower.as_str().cmp(tower)).ok().map(|i| &self.towers[i])
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&self.to_doc())?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: GridDoc = parse_envelope(text, GP_GRID_KIND)?;
        if doc.spacing_m.is_some_and(|s| !(s > 0.0 && s.is_finite())) {
            return Err(Error::Malformed("spacing_m must be positive".into()));
        }
        let mut grid = PrecomputedGrid::new(doc.points, doc.towers)?;
        grid.spacing = doc.spacing_m;
        Ok(grid)
    }

    fn to_doc(&self) -> GridDoc {
        GridDoc {
            version: FORMAT_VERSION,
            kind: GP_GRID_KIND.to_string(),
            spacing_m: self.spacing,
            points: self.points.clone(),
            towers: self.towers.clone(),
        }
    }
}

#[derive(Serialize, Deserialize)]
struct GridDoc {
    version: u64,
    kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    spacing_m: Option<f64>,
    points: Vec<PlanarPoint>,
    towers: Vec<TowerField>,
}

pub fn save_gp_grid(grid: &PrecomputedGrid, path: impl AsRef<Path>) -> Result<()> {
    write_json(path.as_ref(), &grid.to_doc())
}

pub fn load_gp_grid(path: impl AsRef<Path>) -> Result<PrecomputedGrid> {
    PrecomputedGrid::from_json(&read_text(path.as_ref())?)
}

/// Lattice spacing giving roughly `target_points` points over `bounds`.
///
/// Flat bounds get a line of points along their long side; a single point
/// gets spacing 1.
pub fn spacing_for_target(bounds: &PlanarRect, target_points: usize) -> Result<f64> {
    if target_points == 0 {
        return Err(Error::InvalidArgument("target point count must be positive".into()));
    }
    let area = bounds.area();
    if area > 0.0 {
        return Ok((area / target_points as f64).sqrt());
    }
    let side = bounds.width().max(bounds.height());
    Ok(if side > 0.0 { side / (target_points.max(2) - 1) as f64 } else { 1.0 })
}

/// Row-major lattice anchored at `bounds.min`, both edges included when they fall on the spacing.
pub(crate) fn lattice(bounds: &PlanarRect, spacing: f64) -> Vec<PlanarPoint> {
    let nx = (bounds.width() / spacing + 1e-9).floor() as usize + 1;
    let ny = (bounds.height() / spacing + 1e-9).floor() as usize + 1;
    let mut pts = Vec::with_capacity(nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            pts.push(PlanarPoint::new(bounds.min.x + i as f64 * spacing, bounds.min.y + j as f64 * spacing));
        }
    }
    pts
}

/// Evaluates every tower model on a lattice over `bounds`.
pub fn gp_build_grid(
    models: &BTreeMap<TowerId, GpTowerModel>,
    bounds: &PlanarRect,
    spacing: f64,
) -> Result<PrecomputedGrid> {
    if !(spacing > 0.0 && spacing.is_finite()) {
        return Err(Error::InvalidArgument(format!("lattice spacing must be positive, got {spacing}")));
    }
    use rayon::prelude::*;
    let points = lattice(bounds, spacing);
    let towers = models
        .par_iter()
        .map(|(tower, model)| {
            let (mean, var) = model.predict_many(&points);
            TowerField { tower: tower.clone(), noise_var: model.hyper().sigma_n2, mean, var }
        })
        .collect();
    let mut grid = PrecomputedGrid::new(points, towers)?;
    grid.spacing = Some(spacing);
    Ok(grid)
}

/// Fits every tower of `map` and evaluates the models on a lattice of about
/// `target_points` points over the bounding box of the fingerprint points.
pub fn gp_grid_for_map(map: &RadioMap, config: &GpConfig, target_points: usize) -> Result<PrecomputedGrid> {
    let models = fit_towers(map, config)?;
    if models.is_empty() {
        return Err(Error::EmptyInput("towers heard at two or more fingerprint points"));
    }
    let bounds = PlanarRect::bounding(map.cells().iter().flat_map(|c| c.points().iter().map(|p| &p.location)))
        .ok_or(Error::EmptyMap)?;
    let spacing = spacing_for_target(&bounds, target_points)?;
    gp_build_grid(&models, &bounds, spacing)
}

/// Sum over the window of `ln N(asu; μ, v + σ_n²)` at every lattice point.
pub(crate) fn grid_log_likelihood(grid: &PrecomputedGrid, window: &ScanWindow<'_>) -> Result<Vec<f64>> {
    let half_ln_2pi = 0.5 * (2.0 * std::f64::consts::PI).ln();
    let mut ll = vec![0.0; grid.points.len()];
    let mut any = false;
    for scan in window.scans() {
        for (tower, asu) in scan.readings() {
            let Some(field) = grid.field(tower.as_str()) else {
                continue;
            };
            any = true;
            let a = asu.value() as f64;
            for ((l, m), v) in ll.iter_mut().zip(&field.mean).zip(&field.var) {
                let s = v + field.noise_var;
                let r = a - m;
                *l += -half_ln_2pi - 0.5 * s.ln() - r * r / (2.0 * s);
            }
        }
    }
    if any {
        Ok(ll)
    } else {
        Err(Error::NoModeledTower)
    }
}

/// Likelihood-weighted average of all lattice points.
pub fn gp_locate(grid: &PrecomputedGrid, window: &ScanWindow<'_>) -> Result<LocationEstimate> {
    let ll = grid_log_likelihood(grid, window)?;
    let weights = normalized_weights(&ll);
    let mut location = PlanarPoint::default();
    for (p, w) in grid.points.iter().zip(&weights) {
        location.x += w * p.x;
        location.y += w * p.y;
    }
    let best = ll.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(LocationEstimate { location, log_score: Some(best), contributing_cells: Vec::new() })
}

#[derive(Debug, Clone)]
pub struct GpLocalizer<'g> {
    grid: &'g PrecomputedGrid,
    n_samples: usize,
}

impl<'g> GpLocalizer<'g> {
    pub fn new(grid: &'g PrecomputedGrid, n_samples: usize) -> Result<Self> {
        if n_samples == 0 {
            return Err(Error::InvalidArgument("n_samples must be at least 1".into()));
        }
        Ok(GpLocalizer { grid, n_samples })
    }
}

impl Localizer for GpLocalizer<'_> {
    fn technique(&self) -> Technique {
        Technique::Gp
    }

    fn window_len(&self) -> usize {
        self.n_samples
    }

    fn locate(&self, window: &ScanWindow<'_>) -> Result<LocationEstimate> {
        gp_locate(self.grid, window)
    }
}
