use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{evaluate_technique, EvalOptions, EvalReport, REPORT_HEADER};
use crate::error::{Error, Result};
use crate::estimators::{EstimatorParams, Technique};
use crate::geo::{GeoPoint, ScanVector, TowerId};
use crate::gp::{gp_grid_for_map, GpConfig};
use crate::math::derive_seed;
use crate::radio_map::{build_radio_map_with, BuildOptions, RadioMap};
use crate::synth::Preset;

/// Training and test traces plus optional tower locations for cell-ID.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub train: Vec<ScanVector>,
    pub test: Vec<ScanVector>,
    pub tower_locations: Option<BTreeMap<TowerId, GeoPoint>>,
}

impl Scenario {
    pub fn from_preset(preset: &Preset) -> Self {
        Scenario {
            train: preset.training_trace(),
            test: preset.test_trace(),
            tower_locations: Some(preset.world.tower_geo_locations()),
        }
    }

    /// Map over `train` with tower locations attached when known.
    pub fn build_map(&self, train: &[ScanVector], grid_length: f64) -> Result<RadioMap> {
        let map = build_radio_map_with(train, &BuildOptions::new(grid_length))?;
        Ok(match &self.tower_locations {
            Some(locs) => map.with_tower_geo_locations(locs),
            None => map,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SweepParam {
    /// Grid cell length `G` in meters.
    Grid,
    /// Window length `N_s`.
    Ns,
    /// Averaged cells `K`.
    K,
    /// Fraction of towers dropped.
    Towers,
    /// Fraction of training scans kept.
    Density,
}

impl SweepParam {
    pub fn as_str(&self) -> &'static str {
        match self {
            SweepParam::Grid => "grid",
            SweepParam::Ns => "ns",
            SweepParam::K => "k",
            SweepParam::Towers => "towers",
            SweepParam::Density => "density",
        }
    }
}

impl fmt::Display for SweepParam {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SweepParam {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        [SweepParam::Grid, SweepParam::Ns, SweepParam::K, SweepParam::Towers, SweepParam::Density]
            .into_iter()
            .find(|p| p.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::InvalidArgument(format!("unknown sweep parameter {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    pub technique: Technique,
    /// Grid length used when the sweep varies something else.
    pub grid_length: f64,
    pub params: EstimatorParams,
    pub seed: u64,
    pub eval: EvalOptions,
    pub gp: GpConfig,
    /// Lattice size for the GP baseline.
    pub gp_points: usize,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            technique: Technique::CellSense,
            grid_length: 70.0,
            params: EstimatorParams::cellsense_rural(),
            seed: 0,
            eval: EvalOptions::default(),
            gp: GpConfig::default(),
            gp_points: 1019,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub param: SweepParam,
    pub value: f64,
    pub report: EvalReport,
}

fn as_count(param: SweepParam, v: f64) -> Result<usize> {
    if v >= 1.0 && v.fract() == 0.0 && v <= u32::MAX as f64 {
        Ok(v as usize)
    } else {
        Err(Error::InvalidArgument(format!("{param} values must be positive integers, got {v}")))
    }
}

/// Towers to drop: `round(fraction · q)` of them, chosen uniformly with `seed`.
pub fn choose_dropped_towers(towers: &[TowerId], drop_fraction: f64, seed: u64) -> Result<BTreeSet<TowerId>> {
    if !(0.0..1.0).contains(&drop_fraction) {
        return Err(Error::InvalidArgument(format!("drop fraction must lie in [0, 1), got {drop_fraction}")));
    }
    let count = (drop_fraction * towers.len() as f64).round() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(rand::seq::index::sample(&mut rng, towers.len(), count).into_iter().map(|i| towers[i].clone()).collect())
}

/// `map` without a seeded random subset of its towers.
pub fn ablate_towers(map: &RadioMap, drop_fraction: f64, seed: u64) -> Result<RadioMap> {
    let dropped = choose_dropped_towers(map.towers(), drop_fraction, seed)?;
    map.without_towers(&dropped)
}

/// Removes `dropped` towers from every scan; scans left empty disappear.
pub fn ablate_scans(scans: &[ScanVector], dropped: &BTreeSet<TowerId>) -> Vec<ScanVector> {
    scans.iter().filter_map(|s| s.retain_towers(|t| !dropped.contains(t))).collect()
}

/// Seeded uniform subsample of `round(keep · n)` scans, original order preserved.
pub fn thin_fingerprint(scans: &[ScanVector], keep_fraction: f64, seed: u64) -> Result<Vec<ScanVector>> {
    if !(keep_fraction > 0.0 && keep_fraction <= 1.0) {
        return Err(Error::InvalidArgument(format!("keep fraction must lie in (0, 1], got {keep_fraction}")));
    }
    let count = (keep_fraction * scans.len() as f64).round() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut idx = rand::seq::index::sample(&mut rng, scans.len(), count).into_vec();
    idx.sort_unstable();
    Ok(idx.into_iter().map(|i| scans[i].clone()).collect())
}

/// Rebuilds and re-evaluates once per value; configuration `i` draws its
/// randomness from `derive_seed(config.seed, i)`.
pub fn sweep(scenario: &Scenario, param: SweepParam, values: &[f64], config: &SweepConfig) -> Result<Vec<SweepRow>> {
    if values.is_empty() {
        return Err(Error::EmptyInput("sweep values"));
    }
    let mut rows = Vec::with_capacity(values.len());
    for (i, &value) in values.iter().enumerate() {
        let seed = derive_seed(config.seed, i as u64);
        let mut params = config.params;
        let mut grid_length = config.grid_length;
        let mut train = std::borrow::Cow::Borrowed(&scenario.train);
        let mut test = std::borrow::Cow::Borrowed(&scenario.test);
        let mut dropped = BTreeSet::new();
        match param {
            SweepParam::Grid => grid_length = value,
            SweepParam::Ns => params.n_samples = as_count(param, value)?,
            SweepParam::K => params.k = as_count(param, value)?,
            SweepParam::Density => train = std::borrow::Cow::Owned(thin_fingerprint(&scenario.train, value, seed)?),
            SweepParam::Towers => {}
        }
        let mut map = scenario.build_map(&train, grid_length)?;
        if param == SweepParam::Towers {
            dropped = choose_dropped_towers(map.towers(), value, seed)?;
            map = map.without_towers(&dropped)?;
            test = std::borrow::Cow::Owned(ablate_scans(&scenario.test, &dropped));
        }
        let gp_grid = if config.technique == Technique::Gp {
            let gp = GpConfig { seed: derive_seed(config.gp.seed, i as u64), ..config.gp.clone() };
            Some(gp_grid_for_map(&map, &gp, config.gp_points)?)
        } else {
            None
        };
        log::info!("{param}={value}: {} cells, {} towers dropped", map.cells().len(), dropped.len());
        let report = evaluate_technique(config.technique, &map, params, gp_grid.as_ref(), &test, &config.eval)?;
        rows.push(SweepRow { param, value, report });
    }
    Ok(rows)
}

pub fn write_sweep(writer: impl Write, rows: &[SweepRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["param", "value"];
    header.extend(REPORT_HEADER);
    w.write_record(&header)?;
    for row in rows {
        let mut rec = vec![row.param.to_string(), row.value.to_string()];
        rec.extend(row.report.csv_fields());
        w.write_record(&rec)?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}
