//! Versioned JSON persistence for radio maps.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{CellIndex, FingerprintPoint, RadioMap, TowerHistogram};
use crate::error::{Error, Result};
use crate::geo::{GeoPoint, PlanarPoint, Readings, TowerId, ASU_LEVELS};

pub const FORMAT_VERSION: u64 = 1;
pub(crate) const RADIO_MAP_KIND: &str = "radio_map";

#[derive(Deserialize)]
struct Envelope {
    version: u64,
    #[serde(default)]
    kind: Option<String>,
}

/// Checks `version` and `kind` before the body is decoded, so an unknown
/// version is reported as such rather than as a shape mismatch.
pub(crate) fn parse_envelope<T: for<'de> Deserialize<'de>>(text: &str, kind: &'static str) -> Result<T> {
    let env: Envelope = serde_json::from_str(text).map_err(|e| Error::Malformed(e.to_string()))?;
    if env.version != FORMAT_VERSION {
        return Err(Error::VersionMismatch { found: env.version, expected: FORMAT_VERSION });
    }
    match env.kind.as_deref() {
        Some(k) if k == kind => {}
        other => return Err(Error::WrongKind { found: other.unwrap_or("<missing>").to_string(), expected: kind }),
    }
    serde_json::from_str(text).map_err(|e| Error::Malformed(e.to_string()))
}

pub(crate) fn write_json<T: Serialize>(path: &Path, doc: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(doc)?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub(crate) fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

#[derive(Serialize, Deserialize)]
struct MapDoc {
    version: u64,
    kind: String,
    origin: GeoPoint,
    grid_length_m: f64,
    anchor: PlanarPoint,
    towers: Vec<TowerId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    tower_locations: Option<BTreeMap<TowerId, PlanarPoint>>,
    cells: Vec<CellDoc>,
}

#[derive(Serialize, Deserialize)]
struct CellDoc {
    row: u32,
    col: u32,
    centroid: PlanarPoint,
    n_points: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    points: Option<Vec<PointDoc>>,
    histograms: BTreeMap<TowerId, [u32; ASU_LEVELS]>,
}

#[derive(Serialize, Deserialize)]
struct PointDoc {
    x: f64,
    y: f64,
    readings: Readings,
}

impl RadioMap {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.to_doc())?)
    }

    pub fn from_json(text: &str) -> Result<RadioMap> {
        let doc: MapDoc = parse_envelope(text, RADIO_MAP_KIND)?;
        from_doc(doc)
    }

    fn to_doc(&self) -> MapDoc {
        let cells = self
            .cells
            .iter()
            .map(|c| CellDoc {
                row: c.index.row,
                col: c.index.col,
                centroid: c.centroid,
                n_points: c.point_count,
                points: self.points_retained.then(|| {
                    c.points
                        .iter()
                        .map(|p| PointDoc { x: p.location.x, y: p.location.y, readings: p.readings.clone() })
                        .collect()
                }),
                histograms: c.histograms.iter().map(|(t, h)| (t.clone(), *h.counts())).collect(),
            })
            .collect();
        MapDoc {
            version: FORMAT_VERSION,
            kind: RADIO_MAP_KIND.to_string(),
            origin: self.origin,
            grid_length_m: self.grid_length,
            anchor: self.anchor,
            towers: self.towers.clone(),
            tower_locations: self.tower_locations.clone(),
            cells,
        }
    }
}

fn from_doc(doc: MapDoc) -> Result<RadioMap> {
    let cells = doc
        .cells
        .into_iter()
        .map(|c| {
            let points = c.points.map(|pts| {
                pts.into_iter()
                    .map(|p| FingerprintPoint { location: PlanarPoint::new(p.x, p.y), readings: p.readings })
                    .collect::<Vec<_>>()
            });
            let histograms =
                c.histograms.into_iter().map(|(t, counts)| (t, TowerHistogram::from_counts(counts))).collect();
            (CellIndex::new(c.row, c.col), c.centroid, c.n_points, points, histograms)
        })
        .collect();
    RadioMap::from_parts(doc.origin, doc.grid_length_m, doc.anchor, doc.towers, cells, doc.tower_locations)
}

pub fn save_radio_map(map: &RadioMap, path: impl AsRef<Path>) -> Result<()> {
    write_json(path.as_ref(), &map.to_doc())
}

pub fn load_radio_map(path: impl AsRef<Path>) -> Result<RadioMap> {
    RadioMap::from_json(&read_text(path.as_ref())?)
}
