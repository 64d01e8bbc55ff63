use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geo::PlanarPoint;

/// Polyline driven at constant speed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Route {
    waypoints: Vec<PlanarPoint>,
    /// Meters per second.
    speed: f64,
}

impl Route {
    pub fn new(waypoints: Vec<PlanarPoint>, speed: f64) -> Result<Self> {
        if waypoints.len() < 2 {
            return Err(Error::InvalidArgument("a route needs at least 2 waypoints".into()));
        }
        if !(speed > 0.0 && speed.is_finite()) {
            return Err(Error::InvalidArgument(format!("route speed must be positive, got {speed}")));
        }
        if waypoints.iter().any(|p| !(p.x.is_finite() && p.y.is_finite())) {
            return Err(Error::InvalidArgument("route waypoints must be finite".into()));
        }
        Ok(Route { waypoints, speed })
    }

    pub fn waypoints(&self) -> &[PlanarPoint] {
        &self.waypoints
    }

    pub fn speed(&self) -> f64 {
        self.speed
    }

    pub fn length(&self) -> f64 {
        self.waypoints.windows(2).map(|w| w[0].distance(&w[1])).sum()
    }

    /// Point at arc length `s`, clamped to the ends.
    pub fn position_at(&self, s: f64) -> PlanarPoint {
        let mut left = s.max(0.0);
        for w in self.waypoints.windows(2) {
            let seg = w[0].distance(&w[1]);
            if left <= seg && seg > 0.0 {
                let f = left / seg;
                return PlanarPoint::new(w[0].x + f * (w[1].x - w[0].x), w[0].y + f * (w[1].y - w[0].y));
            }
            left -= seg;
        }
        *self.waypoints.last().expect("at least two waypoints")
    }

    /// One `(timestamp, position)` per second from `t = 0`, plus the final
    /// waypoint one second later when the last whole second falls short of it.
    pub fn sample_positions(&self) -> Vec<(i64, PlanarPoint)> {
        let length = self.length();
        let whole = (length / self.speed + 1e-9).floor() as i64;
        let mut out: Vec<(i64, PlanarPoint)> =
            (0..=whole).map(|t| (t, self.position_at((t as f64 * self.speed).min(length)))).collect();
        if (whole as f64) * self.speed < length - 1e-9 {
            out.push((whole + 1, *self.waypoints.last().expect("at least two waypoints")));
        }
        out
    }
}
