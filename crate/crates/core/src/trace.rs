//! CSV trace and tower-location files.
//!
//! Trace files hold one row per tower per scan under the header
//! `timestamp,lat,lon,tower_id,asu`; empty `lat`/`lon` mean no ground truth.
//! Tower files hold `tower_id,lat,lon`.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geo::{group_rows_into_scans, GeoPoint, RssiAsu, ScanRow, ScanVector, TowerId};

#[derive(Debug, Serialize, Deserialize)]
struct TraceRecord {
    timestamp: i64,
    lat: Option<f64>,
    lon: Option<f64>,
    tower_id: String,
    asu: i64,
}

#[derive(Debug, Serialize, Deserialize)]
struct TowerRecord {
    tower_id: String,
    lat: f64,
    lon: f64,
}

fn open(path: &Path) -> Result<std::fs::File> {
    std::fs::File::open(path).map_err(|e| Error::io(path, e))
}

fn create(path: &Path) -> Result<std::fs::File> {
    std::fs::File::create(path).map_err(|e| Error::io(path, e))
}

/// Parses trace rows without grouping them.
pub fn read_rows(reader: impl Read) -> Result<Vec<ScanRow>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let mut rows = Vec::new();
    for (i, rec) in rdr.deserialize::<TraceRecord>().enumerate() {
        let rec = rec?;
        let line = i + 2;
        let truth = match (rec.lat, rec.lon) {
            (Some(lat), Some(lon)) => Some(GeoPoint::new(lat, lon)?),
            (None, None) => None,
            _ => return Err(Error::Malformed(format!("line {line}: lat and lon must both be set or both empty"))),
        };
        rows.push(ScanRow {
            timestamp: rec.timestamp,
            tower_id: TowerId::new(rec.tower_id).map_err(|e| Error::Malformed(format!("line {line}: {e}")))?,
            asu: RssiAsu::new(rec.asu)?,
            truth,
        });
    }
    Ok(rows)
}

pub fn read_scans(reader: impl Read) -> Result<Vec<ScanVector>> {
    group_rows_into_scans(&read_rows(reader)?)
}

pub fn read_trace(path: impl AsRef<Path>) -> Result<Vec<ScanVector>> {
    read_scans(open(path.as_ref())?)
}

pub fn write_scans(writer: impl Write, scans: &[ScanVector]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for scan in scans {
        for (tower, asu) in scan.readings() {
            w.serialize(TraceRecord {
                timestamp: scan.timestamp(),
                lat: scan.truth().map(|g| g.lat()),
                lon: scan.truth().map(|g| g.lon()),
                tower_id: tower.to_string(),
                asu: asu.value() as i64,
            })?;
        }
    }
    if scans.is_empty() {
        w.write_record(["timestamp", "lat", "lon", "tower_id", "asu"])?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

pub fn write_trace(path: impl AsRef<Path>, scans: &[ScanVector]) -> Result<()> {
    let path = path.as_ref();
    write_scans(std::io::BufWriter::new(create(path)?), scans)
}

pub fn read_towers_from(reader: impl Read) -> Result<BTreeMap<TowerId, GeoPoint>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let mut out = BTreeMap::new();
    for rec in rdr.deserialize::<TowerRecord>() {
        let rec = rec?;
        out.insert(TowerId::new(rec.tower_id)?, GeoPoint::new(rec.lat, rec.lon)?);
    }
    Ok(out)
}

pub fn read_towers(path: impl AsRef<Path>) -> Result<BTreeMap<TowerId, GeoPoint>> {
    read_towers_from(open(path.as_ref())?)
}

pub fn write_towers(path: impl AsRef<Path>, towers: &BTreeMap<TowerId, GeoPoint>) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_writer(std::io::BufWriter::new(create(path)?));
    for (id, g) in towers {
        w.serialize(TowerRecord { tower_id: id.to_string(), lat: g.lat(), lon: g.lon() })?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_and_groups() {
        let text = "timestamp,lat,lon,tower_id,asu\n\
                    5,30.1,31.2,A,10\n5,30.1,31.2,B,3\n6,,,A,11\n";
        let scans = read_scans(text.as_bytes()).unwrap();
        assert_eq!(scans.len(), 2);
        assert_eq!(scans[0].readings().len(), 2);
        assert_eq!(scans[0].truth().unwrap().lat(), 30.1);
        assert!(scans[1].truth().is_none());
    }

    #[test]
    fn round_trip_is_exact() {
        let text = "timestamp,lat,lon,tower_id,asu\n\
                    1,30.123456789012344,31.000000000000004,A,0\n1,30.123456789012344,31.000000000000004,B,31\n2,,,C,7\n";
        let scans = read_scans(text.as_bytes()).unwrap();
        let mut out = Vec::new();
        write_scans(&mut out, &scans).unwrap();
        assert_eq!(read_scans(out.as_slice()).unwrap(), scans);
        assert_eq!(String::from_utf8(out).unwrap(), text);
    }

    #[test]
    fn rejects_bad_rows() {
        assert!(read_scans("timestamp,lat,lon,tower_id,asu\n1,30,31,A,32\n".as_bytes()).is_err());
        assert!(read_scans("timestamp,lat,lon,tower_id,asu\n1,30,,A,3\n".as_bytes()).is_err());
        assert!(read_scans("timestamp,lat,lon,tower_id,asu\n1,95,31,A,3\n".as_bytes()).is_err());
        assert!(read_scans("timestamp,lat,lon,tower_id,asu\nx,30,31,A,3\n".as_bytes()).is_err());
        assert!(read_scans("timestamp,lat,lon,tower_id,asu\n2,30,31,A,3\n1,30,31,A,3\n".as_bytes()).is_err());
    }

    #[test]
    fn towers_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("towers.csv");
        let mut towers = BTreeMap::new();
        towers.insert(TowerId::new("A").unwrap(), GeoPoint::new(30.5, 31.25).unwrap());
        towers.insert(TowerId::new("B").unwrap(), GeoPoint::new(-12.0, 100.125).unwrap());
        write_towers(&path, &towers).unwrap();
        assert_eq!(read_towers(&path).unwrap(), towers);
    }
}
