//! Online phase: turning a window of scans into a position.
//!
//! [`cellsense_locate`] is the probabilistic estimator: score every cell by
//! the likelihood of all readings in the window, then average the centroids
//! of the `K` best cells weighted by their posterior. [`hybrid_locate`] picks
//! the most probable cell from a single scan and refines inside it with
//! nearest neighbours in signal space. [`deterministic_locate`] and
//! [`cellid_locate`] are the baselines.
//!
//! The free functions evaluate straight from the map. The [`CellSense`],
//! [`Hybrid`], [`Deterministic`] and [`CellId`] types precompute per-map
//! lookup tables once and implement [`Localizer`]; they agree with the free
//! functions up to floating-point summation order.

mod cellid;
mod cellsense;
mod deterministic;
mod hybrid;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geo::{PlanarPoint, Readings, ScanVector, TowerId};
use crate::radio_map::{CellIndex, SmoothingParams};

pub use cellid::{cellid_locate, CellId};
pub use cellsense::{cell_log_posterior, cellsense_locate, CellSense};
pub use deterministic::{deterministic_locate, Deterministic};
pub use hybrid::{hybrid_locate, Hybrid};

/// Online-phase knobs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimatorParams {
    /// Successive scans per estimate (`N_s`).
    pub n_samples: usize,
    /// Cells (or neighbours) averaged into the final estimate (`K`).
    pub k: usize,
    pub smoothing: SmoothingParams,
}

impl Default for EstimatorParams {
    fn default() -> Self {
        Self::cellsense_rural()
    }
}

impl EstimatorParams {
    pub fn new(n_samples: usize, k: usize) -> Self {
        EstimatorParams { n_samples, k, smoothing: SmoothingParams::default() }
    }

    pub fn cellsense_rural() -> Self {
        Self::new(14, 2)
    }

    pub fn cellsense_urban() -> Self {
        Self::new(8, 2)
    }

    /// The hybrid estimator only ever looks at one scan.
    pub fn hybrid() -> Self {
        Self::new(1, 1)
    }

    pub fn deterministic_rural() -> Self {
        Self::new(1, 8)
    }

    pub fn deterministic_urban() -> Self {
        Self::new(1, 6)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_samples == 0 {
            return Err(Error::InvalidArgument("n_samples must be >= 1".into()));
        }
        if self.k == 0 {
            return Err(Error::InvalidArgument("k must be >= 1".into()));
        }
        self.smoothing.validate()
    }
}

/// Consecutive scans fed to one estimate, oldest first.
#[derive(Debug, Clone, Copy)]
pub struct ScanWindow<'a> {
    scans: &'a [ScanVector],
}

impl<'a> ScanWindow<'a> {
    pub fn new(scans: &'a [ScanVector]) -> Result<Self> {
        if scans.is_empty() {
            return Err(Error::EmptyInput("scan window"));
        }
        if let Some(w) = scans.windows(2).find(|w| w[0].timestamp() >= w[1].timestamp()) {
            return Err(Error::UnsortedRows { previous: w[0].timestamp(), current: w[1].timestamp() });
        }
        Ok(ScanWindow { scans })
    }

    /// The last `min(n, end + 1)` scans of `trace` ending at index `end`.
    pub fn trailing(trace: &'a [ScanVector], end: usize, n: usize) -> Result<Self> {
        if end >= trace.len() {
            return Err(Error::InvalidArgument(format!("window end {end} beyond trace of {}", trace.len())));
        }
        let start = (end + 1).saturating_sub(n.max(1));
        Self::new(&trace[start..=end])
    }

    pub fn scans(&self) -> &'a [ScanVector] {
        self.scans
    }

    pub fn first(&self) -> &'a ScanVector {
        &self.scans[0]
    }

    pub fn last(&self) -> &'a ScanVector {
        &self.scans[self.scans.len() - 1]
    }

    pub fn len(&self) -> usize {
        self.scans.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scans.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LocationEstimate {
    pub location: PlanarPoint,
    /// Unnormalized log posterior of the best cell, for estimators that have one.
    pub log_score: Option<f64>,
    /// Cells averaged into `location` with their normalized weights.
    pub contributing_cells: Vec<(CellIndex, f64)>,
}

/// Anything that turns a scan window into a position in a map's planar frame.
pub trait Localizer: Sync {
    fn technique(&self) -> Technique;

    /// Number of trailing scans each estimate consumes.
    fn window_len(&self) -> usize;

    fn locate(&self, window: &ScanWindow<'_>) -> Result<LocationEstimate>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Technique {
    CellSense,
    Hybrid,
    Deterministic,
    Gp,
    CellId,
}

impl Technique {
    pub const ALL: [Technique; 5] =
        [Technique::CellSense, Technique::Hybrid, Technique::Deterministic, Technique::Gp, Technique::CellId];

    pub fn as_str(&self) -> &'static str {
        match self {
            Technique::CellSense => "cellsense",
            Technique::Hybrid => "hybrid",
            Technique::Deterministic => "deterministic",
            Technique::Gp => "gp",
            Technique::CellId => "cellid",
        }
    }
}

impl fmt::Display for Technique {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Technique {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Technique::ALL
            .into_iter()
            .find(|t| t.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::InvalidArgument(format!("unknown technique {s:?}")))
    }
}

/// Euclidean distance in ASU space over the union of towers.
///
/// A tower heard on only one side counts as ASU 0 on the other, the
/// sensitivity floor.
pub fn rssi_distance(a: &Readings, b: &Readings) -> f64 {
    sparse_distance(a.iter().map(|(t, v)| (t, v.value() as f64)), b.iter().map(|(t, v)| (t, v.value() as f64)))
}

/// Distance between two key-sorted sparse vectors with zero imputation.
pub(crate) fn sparse_distance<K: Ord>(a: impl Iterator<Item = (K, f64)>, b: impl Iterator<Item = (K, f64)>) -> f64 {
    use std::cmp::Ordering;
    let mut a = a.peekable();
    let mut b = b.peekable();
    let mut sum = 0.0;
    loop {
        let d = match (a.peek(), b.peek()) {
            (None, None) => break,
            (Some(_), None) => a.next().unwrap().1,
            (None, Some(_)) => b.next().unwrap().1,
            (Some((ka, _)), Some((kb, _))) => match ka.cmp(kb) {
                Ordering::Less => a.next().unwrap().1,
                Ordering::Greater => b.next().unwrap().1,
                Ordering::Equal => a.next().unwrap().1 - b.next().unwrap().1,
            },
        };
        sum += d * d;
    }
    sum.sqrt()
}

/// Resolves tower ids against a sorted registry.
pub(crate) fn tower_slot(registry: &[TowerId], id: &TowerId) -> Option<usize> {
    registry.binary_search(id).ok()
}
