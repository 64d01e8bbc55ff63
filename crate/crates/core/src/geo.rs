//! Readings, scan vectors and the local planar frame every distance is measured in.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Mean Earth radius used by the equirectangular projection.
pub const EARTH_RADIUS_M: f64 = 6_371_000.0;

/// A GSM handset reports the serving cell plus six neighbours.
pub const MAX_READINGS: usize = 7;

/// Largest ASU value a GSM modem reports.
pub const ASU_MAX: u8 = 31;

/// Number of distinct ASU values (the histogram support).
pub const ASU_LEVELS: usize = ASU_MAX as usize + 1;

const PROJECTION_RANGE_M: f64 = 10_000.0;

/// Received signal strength in Active Set Update units, `0..=31`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "i64", into = "u8")]
pub struct RssiAsu(u8);

impl RssiAsu {
    pub const MIN: RssiAsu = RssiAsu(0);
    pub const MAX: RssiAsu = RssiAsu(ASU_MAX);

    pub fn new(value: i64) -> Result<Self> {
        if (0..=ASU_MAX as i64).contains(&value) {
            Ok(RssiAsu(value as u8))
        } else {
            Err(Error::AsuOutOfRange(value))
        }
    }

    #[inline]
    pub fn value(self) -> u8 {
        self.0
    }

    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl TryFrom<i64> for RssiAsu {
    type Error = Error;

    fn try_from(value: i64) -> Result<Self> {
        RssiAsu::new(value)
    }
}

impl From<RssiAsu> for u8 {
    fn from(asu: RssiAsu) -> u8 {
        asu.0
    }
}

impl fmt::Display for RssiAsu {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

/// `dBm = 2·ASU − 113`.
pub fn asu_to_dbm(asu: RssiAsu) -> f64 {
    2.0 * asu.0 as f64 - 113.0
}

/// Inverse quantizer: `clamp(round((dbm + 113) / 2), 0, 31)`, rounding half away from zero.
pub fn dbm_to_asu(dbm: f64) -> RssiAsu {
    let level = ((dbm + 113.0) / 2.0).round();
    if level.is_nan() || level <= 0.0 {
        RssiAsu::MIN
    } else if level >= ASU_MAX as f64 {
        RssiAsu::MAX
    } else {
        RssiAsu(level as u8)
    }
}

/// Opaque cell tower identifier (e.g. `MCC-MNC-LAC-CID`).
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TowerId(String);

impl TowerId {
    pub fn new(id: impl Into<String>) -> Result<Self> {
        let id = id.into();
        if id.trim().is_empty() {
            return Err(Error::InvalidArgument("tower id must be non-empty".into()));
        }
        Ok(TowerId(id))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for TowerId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::borrow::Borrow<str> for TowerId {
    fn borrow(&self) -> &str {
        &self.0
    }
}

/// Per-instant readings keyed by tower.
pub type Readings = BTreeMap<TowerId, RssiAsu>;

/// WGS-84 position in degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawGeoPoint")]
pub struct GeoPoint {
    lat: f64,
    lon: f64,
}

impl GeoPoint {
    pub fn new(lat: f64, lon: f64) -> Result<Self> {
        if !(lat.is_finite() && lon.is_finite()) || lat.abs() > 90.0 || lon.abs() > 180.0 {
            return Err(Error::InvalidCoordinate(format!("lat={lat}, lon={lon}")));
        }
        Ok(GeoPoint { lat, lon })
    }

    #[inline]
    pub fn lat(&self) -> f64 {
        self.lat
    }

    #[inline]
    pub fn lon(&self) -> f64 {
        self.lon
    }

    /// Mean of a set of points; used to pick a projection origin for a dataset.
    pub fn centroid<'a>(points: impl IntoIterator<Item = &'a GeoPoint>) -> Option<GeoPoint> {
        let (mut lat, mut lon, mut n) = (0.0, 0.0, 0usize);
        for p in points {
            lat += p.lat;
            lon += p.lon;
            n += 1;
        }
        (n > 0).then(|| GeoPoint { lat: lat / n as f64, lon: lon / n as f64 })
    }
}

#[derive(Deserialize)]
struct RawGeoPoint {
    lat: f64,
    lon: f64,
}

impl TryFrom<RawGeoPoint> for GeoPoint {
    type Error = Error;

    fn try_from(raw: RawGeoPoint) -> Result<Self> {
        GeoPoint::new(raw.lat, raw.lon)
    }
}

/// Meters east (`x`) and north (`y`) of a projection origin.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PlanarPoint {
    pub x: f64,
    pub y: f64,
}

impl PlanarPoint {
    pub const fn new(x: f64, y: f64) -> Self {
        PlanarPoint { x, y }
    }

    #[inline]
    pub fn distance(&self, other: &PlanarPoint) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    /// Mean of the given points, `None` when empty.
    pub fn mean<'a>(points: impl IntoIterator<Item = &'a PlanarPoint>) -> Option<PlanarPoint> {
        let (mut x, mut y, mut n) = (0.0, 0.0, 0usize);
        for p in points {
            x += p.x;
            y += p.y;
            n += 1;
        }
        (n > 0).then(|| PlanarPoint::new(x / n as f64, y / n as f64))
    }
}

/// Axis-aligned rectangle in the planar frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlanarRect {
    pub min: PlanarPoint,
    pub max: PlanarPoint,
}

impl PlanarRect {
    pub fn new(min: PlanarPoint, max: PlanarPoint) -> Result<Self> {
        if !(min.x <= max.x && min.y <= max.y) {
            return Err(Error::InvalidArgument(format!("degenerate rectangle {min:?} .. {max:?}")));
        }
        Ok(PlanarRect { min, max })
    }

    /// Bounding box of a point set, `None` when empty.
    pub fn bounding<'a>(points: impl IntoIterator<Item = &'a PlanarPoint>) -> Option<PlanarRect> {
        let mut it = points.into_iter();
        let first = *it.next()?;
        let (mut min, mut max) = (first, first);
        for p in it {
            min.x = min.x.min(p.x);
            min.y = min.y.min(p.y);
            max.x = max.x.max(p.x);
            max.y = max.y.max(p.y);
        }
        Some(PlanarRect { min, max })
    }

    pub fn width(&self) -> f64 {
        self.max.x - self.min.x
    }

    pub fn height(&self) -> f64 {
        self.max.y - self.min.y
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn contains(&self, p: &PlanarPoint) -> bool {
        (self.min.x..=self.max.x).contains(&p.x) && (self.min.y..=self.max.y).contains(&p.y)
    }
}

/// Equirectangular projection about a fixed origin.
///
/// Accurate to well under a decimetre for points within 10 km of the origin,
/// which covers any single testbed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Projection {
    origin: GeoPoint,
    cos_lat: f64,
}

impl Projection {
    pub fn new(origin: GeoPoint) -> Self {
        Projection { origin, cos_lat: origin.lat.to_radians().cos() }
    }

    pub fn origin(&self) -> GeoPoint {
        self.origin
    }

    pub fn project(&self, p: &GeoPoint) -> PlanarPoint {
        let x = EARTH_RADIUS_M * self.cos_lat * (p.lon - self.origin.lon).to_radians();
        let y = EARTH_RADIUS_M * (p.lat - self.origin.lat).to_radians();
        let out = PlanarPoint::new(x, y);
        if x.hypot(y) > PROJECTION_RANGE_M {
            log::warn!(
                "point ({}, {}) is {:.0} m from the projection origin; planar error grows beyond 10 km",
                p.lat,
                p.lon,
                x.hypot(y)
            );
        }
        out
    }

    pub fn unproject(&self, p: &PlanarPoint) -> GeoPoint {
        let lat = self.origin.lat + (p.y / EARTH_RADIUS_M).to_degrees();
        let lon = self.origin.lon + (p.x / (EARTH_RADIUS_M * self.cos_lat)).to_degrees();
        GeoPoint { lat, lon }
    }
}

pub fn project(origin: &GeoPoint, p: &GeoPoint) -> PlanarPoint {
    Projection::new(*origin).project(p)
}

pub fn unproject(origin: &GeoPoint, p: &PlanarPoint) -> GeoPoint {
    Projection::new(*origin).unproject(p)
}

/// One tower reading from a war-driving trace.
#[derive(Debug, Clone, PartialEq)]
pub struct ScanRow {
    pub timestamp: i64,
    pub tower_id: TowerId,
    pub asu: RssiAsu,
    pub truth: Option<GeoPoint>,
}

/// The readings of one scan: between one and seven towers, each at most once.
#[derive(Debug, Clone, PartialEq)]
pub struct ScanVector {
    timestamp: i64,
    readings: Readings,
    truth: Option<GeoPoint>,
}

impl ScanVector {
    pub fn new(timestamp: i64, readings: Readings, truth: Option<GeoPoint>) -> Result<Self> {
        if readings.is_empty() {
            return Err(Error::EmptyScan(timestamp));
        }
        if readings.len() > MAX_READINGS {
            return Err(Error::TooManyReadings { timestamp, count: readings.len(), max: MAX_READINGS });
        }
        Ok(ScanVector { timestamp, readings, truth })
    }

    #[inline]
    pub fn timestamp(&self) -> i64 {
        self.timestamp
    }

    #[inline]
    pub fn readings(&self) -> &Readings {
        &self.readings
    }

    #[inline]
    pub fn truth(&self) -> Option<&GeoPoint> {
        self.truth.as_ref()
    }

    /// Copy of this scan keeping only towers accepted by `keep`; `None` if nothing is left.
    pub fn retain_towers(&self, mut keep: impl FnMut(&TowerId) -> bool) -> Option<ScanVector> {
        let readings: Readings =
            self.readings.iter().filter(|(id, _)| keep(id)).map(|(id, asu)| (id.clone(), *asu)).collect();
        (!readings.is_empty()).then_some(ScanVector { timestamp: self.timestamp, readings, truth: self.truth })
    }
}

/// Merges rows sharing a timestamp into scans.
///
/// Rows must be sorted by timestamp. A tower repeated within one timestamp
/// keeps its last reading. The scan's ground truth is the last truth seen
/// among its rows.
pub fn group_rows_into_scans(rows: &[ScanRow]) -> Result<Vec<ScanVector>> {
    let mut scans = Vec::new();
    let mut iter = rows.iter().peekable();
    let mut previous: Option<i64> = None;
    while let Some(first) = iter.next() {
        if let Some(prev) = previous {
            if first.timestamp < prev {
                return Err(Error::UnsortedRows { previous: prev, current: first.timestamp });
            }
        }
        let t = first.timestamp;
        let mut readings = Readings::new();
        readings.insert(first.tower_id.clone(), first.asu);
        let mut truth = first.truth;
        while let Some(row) = iter.next_if(|r| r.timestamp == t) {
            readings.insert(row.tower_id.clone(), row.asu);
            if row.truth.is_some() {
                truth = row.truth;
            }
        }
        previous = Some(t);
        scans.push(ScanVector::new(t, readings, truth)?);
    }
    Ok(scans)
}
