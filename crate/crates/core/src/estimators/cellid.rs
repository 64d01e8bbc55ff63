use super::{Localizer, LocationEstimate, ScanWindow, Technique};
use crate::error::{Error, Result};
use crate::geo::{PlanarPoint, ScanVector, TowerId};
use crate::radio_map::RadioMap;

/// Location of the strongest tower in the scan; ties go to the smallest tower id.
pub fn cellid_locate(map: &RadioMap, scan: &ScanVector) -> Result<LocationEstimate> {
    let mut strongest: Option<(&TowerId, u8)> = None;
    for (tower, asu) in scan.readings() {
        // BTreeMap order makes the first maximum the smallest id.
        if strongest.is_none_or(|(_, best)| asu.value() > best) {
            strongest = Some((tower, asu.value()));
        }
    }
    let (tower, _) = strongest.ok_or(Error::EmptyScan(scan.timestamp()))?;
    let location = map
        .tower_locations()
        .and_then(|locs| locs.get(tower))
        .copied()
        .ok_or_else(|| Error::UnknownTowerLocation(tower.to_string()))?;
    Ok(LocationEstimate { location, log_score: None, contributing_cells: Vec::new() })
}

/// Cell-ID baseline over the freshest scan of each window.
#[derive(Debug, Clone, Copy)]
pub struct CellId<'m> {
    map: &'m RadioMap,
}

impl<'m> CellId<'m> {
    pub fn new(map: &'m RadioMap) -> Result<Self> {
        if map.tower_locations().is_none() {
            return Err(Error::NoTowerLocations);
        }
        Ok(CellId { map })
    }

    pub fn tower_location(&self, tower: &str) -> Option<PlanarPoint> {
        self.map.tower_locations().and_then(|l| l.get(tower)).copied()
    }
}

impl Localizer for CellId<'_> {
    fn technique(&self) -> Technique {
        Technique::CellId
    }

    fn window_len(&self) -> usize {
        1
    }

    fn locate(&self, window: &ScanWindow<'_>) -> Result<LocationEstimate> {
        cellid_locate(self.map, window.last())
    }
}
