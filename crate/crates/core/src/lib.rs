//! Grid-based probabilistic RSSI fingerprinting for GSM handsets.
//!
//! The offline phase ([`radio_map`]) pools war-driving scans into square grid
//! cells and keeps one ASU histogram per tower per cell. The online phase
//! ([`estimators`]) scores every cell by the likelihood of a window of scans
//! and averages the most probable cells. The crate also ships the baselines
//! the probabilistic estimator is compared against (deterministic KNN,
//! Gaussian-process regression in [`gp`], cell-ID), a synthetic GSM world
//! ([`synth`]) and the evaluation harness ([`bench`]).

pub mod bench;
pub mod error;
pub mod estimators;
pub mod geo;
pub mod gp;
pub mod math;
pub mod radio_map;
pub mod synth;
pub mod trace;

pub use error::{Error, Result};
pub use geo::{
    asu_to_dbm, dbm_to_asu, group_rows_into_scans, GeoPoint, PlanarPoint, PlanarRect, Projection, Readings, RssiAsu,
    ScanRow, ScanVector, TowerId, MAX_READINGS,
};
pub use radio_map::{build_radio_map, CellIndex, GridCell, RadioMap, SmoothingParams};
