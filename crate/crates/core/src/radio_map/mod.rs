//! Offline phase: the gridded probabilistic fingerprint.
//!
//! Every war-driving scan becomes a fingerprint point at its ground-truth
//! location. Points are bucketed into square cells of side `grid_length`
//! anchored at the south-west corner of the training data, and each cell
//! keeps one ASU histogram per tower it heard. A cell is represented by the
//! center of mass of its points.

pub(crate) mod file;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geo::{GeoPoint, PlanarPoint, Projection, Readings, RssiAsu, ScanVector, TowerId, ASU_LEVELS};

pub use file::{load_radio_map, save_radio_map, FORMAT_VERSION};

/// Laplace smoothing of the per-cell histograms and the floor used for towers a cell never heard.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SmoothingParams {
    /// Pseudo-count added to each of the 32 ASU bins.
    pub alpha: f64,
    /// Likelihood of a reading from a tower the cell has no histogram for.
    pub p_min: f64,
}

impl Default for SmoothingParams {
    fn default() -> Self {
        SmoothingParams { alpha: 0.5, p_min: 1e-4 }
    }
}

impl SmoothingParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return Err(Error::InvalidArgument(format!("smoothing alpha must be >= 0, got {}", self.alpha)));
        }
        if !(self.p_min > 0.0 && self.p_min <= 1.0) {
            return Err(Error::InvalidArgument(format!("p_min must be in (0, 1], got {}", self.p_min)));
        }
        Ok(())
    }
}

/// `(row, col)` of a grid cell; ordering is lexicographic by row then column.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct CellIndex {
    pub row: u32,
    pub col: u32,
}

impl CellIndex {
    pub const fn new(row: u32, col: u32) -> Self {
        CellIndex { row, col }
    }
}

/// Counts of each ASU value heard from one tower inside one cell.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TowerHistogram {
    counts: [u32; ASU_LEVELS],
    total: u32,
}

impl Default for TowerHistogram {
    fn default() -> Self {
        TowerHistogram { counts: [0; ASU_LEVELS], total: 0 }
    }
}

impl TowerHistogram {
    pub fn from_counts(counts: [u32; ASU_LEVELS]) -> Self {
        let total = counts.iter().sum();
        TowerHistogram { counts, total }
    }

    pub fn add(&mut self, asu: RssiAsu) {
        self.counts[asu.index()] += 1;
        self.total += 1;
    }

    pub fn count(&self, asu: RssiAsu) -> u32 {
        self.counts[asu.index()]
    }

    pub fn counts(&self) -> &[u32; ASU_LEVELS] {
        &self.counts
    }

    pub fn total(&self) -> u32 {
        self.total
    }

    pub fn mean_asu(&self) -> f64 {
        let weighted: u64 = self.counts.iter().enumerate().map(|(a, &c)| a as u64 * c as u64).sum();
        weighted as f64 / self.total as f64
    }

    /// Smoothed probability of `asu`: `(count + α) / (total + 32α)`.
    #[inline]
    pub fn probability(&self, asu: RssiAsu, alpha: f64) -> f64 {
        (self.counts[asu.index()] as f64 + alpha) / (self.total as f64 + ASU_LEVELS as f64 * alpha)
    }
}

/// One war-driving scan placed in the planar frame.
#[derive(Debug, Clone, PartialEq)]
pub struct FingerprintPoint {
    pub location: PlanarPoint,
    pub readings: Readings,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridCell {
    index: CellIndex,
    centroid: PlanarPoint,
    /// Number of fingerprint points pooled into this cell (`N_0` for the MAP cell).
    point_count: usize,
    points: Vec<FingerprintPoint>,
    histograms: BTreeMap<TowerId, TowerHistogram>,
}

impl GridCell {
    pub fn index(&self) -> CellIndex {
        self.index
    }

    pub fn centroid(&self) -> PlanarPoint {
        self.centroid
    }

    pub fn point_count(&self) -> usize {
        self.point_count
    }

    /// Raw fingerprint points in insertion order; empty if the map was stripped.
    pub fn points(&self) -> &[FingerprintPoint] {
        &self.points
    }

    pub fn histograms(&self) -> &BTreeMap<TowerId, TowerHistogram> {
        &self.histograms
    }

    pub fn histogram(&self, tower: &str) -> Option<&TowerHistogram> {
        self.histograms.get(tower)
    }

    fn from_points(index: CellIndex, points: Vec<FingerprintPoint>) -> GridCell {
        let mut histograms: BTreeMap<TowerId, TowerHistogram> = BTreeMap::new();
        for p in &points {
            for (tower, asu) in &p.readings {
                histograms.entry(tower.clone()).or_default().add(*asu);
            }
        }
        let centroid = PlanarPoint::mean(points.iter().map(|p| &p.location))
            .expect("cells are only created for non-empty point sets");
        GridCell { index, centroid, point_count: points.len(), points, histograms }
    }
}

/// Likelihood of one reading in one cell.
///
/// Smoothed histogram frequency when the cell has heard the tower, otherwise the floor `p_min`.
pub fn cell_likelihood(cell: &GridCell, tower: &str, asu: RssiAsu, smoothing: &SmoothingParams) -> f64 {
    match cell.histograms.get(tower) {
        Some(h) => h.probability(asu, smoothing.alpha),
        None => smoothing.p_min,
    }
}

/// The probabilistic fingerprint.
#[derive(Debug, Clone, PartialEq)]
pub struct RadioMap {
    origin: GeoPoint,
    grid_length: f64,
    anchor: PlanarPoint,
    towers: Vec<TowerId>,
    cells: Vec<GridCell>,
    tower_locations: Option<BTreeMap<TowerId, PlanarPoint>>,
    points_retained: bool,
}

#[derive(Debug, Clone)]
pub struct BuildOptions {
    pub grid_length: f64,
    /// Projection origin; defaults to the centroid of the training ground truth.
    pub origin: Option<GeoPoint>,
    /// Drop raw points after building the histograms (plain CellSense needs only histograms).
    pub strip_points: bool,
}

impl BuildOptions {
    pub fn new(grid_length: f64) -> Self {
        BuildOptions { grid_length, origin: None, strip_points: false }
    }
}

/// Builds a map with the default options for `grid_length` meters.
pub fn build_radio_map(scans: &[ScanVector], grid_length: f64) -> Result<RadioMap> {
    build_radio_map_with(scans, &BuildOptions::new(grid_length))
}

pub fn build_radio_map_with(scans: &[ScanVector], options: &BuildOptions) -> Result<RadioMap> {
    if !(options.grid_length > 0.0 && options.grid_length.is_finite()) {
        return Err(Error::InvalidArgument(format!("grid length must be > 0, got {}", options.grid_length)));
    }
    if scans.is_empty() {
        return Err(Error::EmptyInput("training scans"));
    }
    let truths = scans
        .iter()
        .map(|s| s.truth().copied().ok_or(Error::MissingTruth(s.timestamp())))
        .collect::<Result<Vec<GeoPoint>>>()?;
    let origin = match options.origin {
        Some(o) => o,
        None => GeoPoint::centroid(&truths).expect("non-empty"),
    };
    let projection = Projection::new(origin);
    let points: Vec<FingerprintPoint> = scans
        .iter()
        .zip(&truths)
        .map(|(s, g)| FingerprintPoint { location: projection.project(g), readings: s.readings().clone() })
        .collect();
    let mut map = RadioMap::from_points(origin, options.grid_length, points)?;
    if options.strip_points {
        map = map.strip_points();
    }
    Ok(map)
}

/// Index, centroid, point count, optional points and histograms of one stored cell.
pub(crate) type CellParts =
    (CellIndex, PlanarPoint, usize, Option<Vec<FingerprintPoint>>, BTreeMap<TowerId, TowerHistogram>);
impl RadioMap {
    /// Grids already-projected fingerprint points; the anchor is their minimum x and y.
    pub fn from_points(origin: GeoPoint, grid_length: f64, points: Vec<FingerprintPoint>) -> Result<RadioMap> {
        if !(grid_length > 0.0 && grid_length.is_finite()) {
            return Err(Error::InvalidArgument(format!("grid length must be > 0, got {grid_length}")));
        }
        if points.is_empty() {
            return Err(Error::EmptyInput("fingerprint points"));
        }
        let anchor = PlanarPoint::new(
            points.iter().map(|p| p.location.x).fold(f64::INFINITY, f64::min),
            points.iter().map(|p| p.location.y).fold(f64::INFINITY, f64::min),
        );
        let mut buckets: BTreeMap<CellIndex, Vec<FingerprintPoint>> = BTreeMap::new();
        for p in points {
            if p.readings.is_empty() {
                continue;
            }
            let index = Self::index_for(anchor, grid_length, &p.location);
            buckets.entry(index).or_default().push(p);
        }
        let cells: Vec<GridCell> = buckets.into_iter().map(|(index, pts)| GridCell::from_points(index, pts)).collect();
        if cells.is_empty() {
            return Err(Error::EmptyMap);
        }
        let towers = Self::collect_towers(&cells);
        Ok(RadioMap { origin, grid_length, anchor, towers, cells, tower_locations: None, points_retained: true })
    }

    fn index_for(anchor: PlanarPoint, grid_length: f64, p: &PlanarPoint) -> CellIndex {
        let col = ((p.x - anchor.x) / grid_length).floor().max(0.0) as u32;
        let row = ((p.y - anchor.y) / grid_length).floor().max(0.0) as u32;
        CellIndex { row, col }
    }

    fn collect_towers(cells: &[GridCell]) -> Vec<TowerId> {
        let mut towers: Vec<TowerId> = cells.iter().flat_map(|c| c.histograms.keys().cloned()).collect();
        towers.sort();
        towers.dedup();
        towers
    }

    /// Attaches known tower positions (needed by the cell-ID baseline).
    pub fn with_tower_locations(mut self, locations: BTreeMap<TowerId, PlanarPoint>) -> Self {
        self.tower_locations = Some(locations);
        self
    }

    /// Same as [`with_tower_locations`](Self::with_tower_locations) for geographic positions.
    pub fn with_tower_geo_locations(self, locations: &BTreeMap<TowerId, GeoPoint>) -> Self {
        let projection = self.projection();
        let planar = locations.iter().map(|(id, g)| (id.clone(), projection.project(g))).collect();
        self.with_tower_locations(planar)
    }

    /// Drops the raw fingerprint points, keeping histograms, centroids and point counts.
    pub fn strip_points(mut self) -> Self {
        for cell in &mut self.cells {
            cell.points = Vec::new();
        }
        self.points_retained = false;
        self
    }

    pub fn origin(&self) -> GeoPoint {
        self.origin
    }

    pub fn projection(&self) -> Projection {
        Projection::new(self.origin)
    }

    pub fn grid_length(&self) -> f64 {
        self.grid_length
    }

    /// Planar position of the south-west corner of cell `(0, 0)`.
    pub fn anchor(&self) -> PlanarPoint {
        self.anchor
    }

    /// Registry of every tower heard in the training data, sorted.
    pub fn towers(&self) -> &[TowerId] {
        &self.towers
    }

    /// Cells sorted by [`CellIndex`]; empty cells are never stored.
    pub fn cells(&self) -> &[GridCell] {
        &self.cells
    }

    pub fn cell(&self, index: CellIndex) -> Option<&GridCell> {
        self.cells.binary_search_by_key(&index, |c| c.index).ok().map(|i| &self.cells[i])
    }

    pub fn tower_locations(&self) -> Option<&BTreeMap<TowerId, PlanarPoint>> {
        self.tower_locations.as_ref()
    }

    pub fn points_retained(&self) -> bool {
        self.points_retained
    }

    pub fn total_points(&self) -> usize {
        self.cells.iter().map(|c| c.point_count).sum()
    }

    /// The square `[x0, x1) × [y0, y1)` covered by a cell.
    pub fn cell_bounds(&self, index: CellIndex) -> (PlanarPoint, PlanarPoint) {
        let g = self.grid_length;
        let lo = PlanarPoint::new(self.anchor.x + index.col as f64 * g, self.anchor.y + index.row as f64 * g);
        (lo, PlanarPoint::new(lo.x + g, lo.y + g))
    }

    /// Removes the given towers from the registry, every histogram and every point.
    ///
    /// Points left without readings are dropped and centroids recomputed; cells
    /// left without any tower disappear. Fails if nothing would remain.
    pub fn without_towers(&self, dropped: &std::collections::BTreeSet<TowerId>) -> Result<RadioMap> {
        let towers: Vec<TowerId> = self.towers.iter().filter(|t| !dropped.contains(*t)).cloned().collect();
        if towers.is_empty() {
            return Err(Error::AllTowersDropped);
        }
        let mut cells = Vec::with_capacity(self.cells.len());
        for cell in &self.cells {
            let histograms: BTreeMap<TowerId, TowerHistogram> = cell
                .histograms
                .iter()
                .filter(|(t, _)| !dropped.contains(*t))
                .map(|(t, h)| (t.clone(), h.clone()))
                .collect();
            if histograms.is_empty() {
                continue;
            }
            if self.points_retained {
                let points: Vec<FingerprintPoint> = cell
                    .points
                    .iter()
                    .filter_map(|p| {
                        let readings: Readings = p
                            .readings
                            .iter()
                            .filter(|(t, _)| !dropped.contains(*t))
                            .map(|(t, a)| (t.clone(), *a))
                            .collect();
                        (!readings.is_empty()).then_some(FingerprintPoint { location: p.location, readings })
                    })
                    .collect();
                cells.push(GridCell::from_points(cell.index, points));
            } else {
                // Without raw points the number of points that still hear some
                // tower is unknown; keep the original count and centroid.
                cells.push(GridCell { histograms, ..cell.clone() });
            }
        }
        if cells.is_empty() {
            return Err(Error::AllTowersDropped);
        }
        let tower_locations = self
            .tower_locations
            .as_ref()
            .map(|locs| locs.iter().filter(|(t, _)| !dropped.contains(*t)).map(|(t, p)| (t.clone(), *p)).collect());
        Ok(RadioMap {
            origin: self.origin,
            grid_length: self.grid_length,
            anchor: self.anchor,
            towers,
            cells,
            tower_locations,
            points_retained: self.points_retained,
        })
    }

    /// Reassembles a map from parts; used by the file loader. Validates every invariant.
    #[allow(clippy::too_many_arguments)]
    pub(crate) fn from_parts(
        origin: GeoPoint,
        grid_length: f64,
        anchor: PlanarPoint,
        towers: Vec<TowerId>,
        cells: Vec<CellParts>,
        tower_locations: Option<BTreeMap<TowerId, PlanarPoint>>,
    ) -> Result<RadioMap> {
        let bad = |msg: String| Err(Error::Malformed(msg));
        if !(grid_length > 0.0 && grid_length.is_finite()) {
            return bad(format!("grid_length_m must be > 0, got {grid_length}"));
        }
        if cells.is_empty() {
            return bad("map has no cells".into());
        }
        if towers.windows(2).any(|w| w[0] >= w[1]) {
            return bad("tower registry must be sorted and unique".into());
        }
        let points_retained = cells[0].3.is_some();
        let mut out = Vec::with_capacity(cells.len());
        for (index, centroid, point_count, points, histograms) in cells {
            if points.is_some() != points_retained {
                return bad(format!("cell {index:?}: either all cells carry points or none do"));
            }
            if point_count == 0 {
                return bad(format!("cell {index:?} has no points"));
            }
            if histograms.is_empty() {
                return bad(format!("cell {index:?} has no histograms"));
            }
            for (tower, h) in &histograms {
                if towers.binary_search(tower).is_err() {
                    return bad(format!("cell {index:?} references unregistered tower {tower}"));
                }
                if h.total == 0 {
                    return bad(format!("cell {index:?} has an empty histogram for {tower}"));
                }
            }
            let points = points.unwrap_or_default();
            if points_retained {
                if points.len() != point_count {
                    return bad(format!("cell {index:?}: n_points does not match the stored points"));
                }
                let rebuilt = GridCell::from_points(index, points.clone());
                if rebuilt.histograms != histograms {
                    return bad(format!("cell {index:?}: histograms disagree with the stored points"));
                }
                for p in &points {
                    if Self::index_for(anchor, grid_length, &p.location) != index {
                        return bad(format!("cell {index:?} holds a point outside its square"));
                    }
                }
            }
            out.push(GridCell { index, centroid, point_count, points, histograms });
        }
        out.sort_by_key(|c| c.index);
        if out.windows(2).any(|w| w[0].index == w[1].index) {
            return bad("duplicate cell index".into());
        }
        Ok(RadioMap { origin, grid_length, anchor, towers, cells: out, tower_locations, points_retained })
    }
}
