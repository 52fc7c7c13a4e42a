use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RoadSpec {
    pub num_lanes: usize,
    pub lane_width: f64,
    pub length: f64,
    /// Disturbance region `[start, end]` used by the pass-rate metric.
    pub scenario_zone: [f64; 2],
}

impl Default for RoadSpec {
    fn default() -> Self {
        Self {
            num_lanes: 3,
            lane_width: 4.0,
            length: 1000.0,
            scenario_zone: [350.0, 550.0],
        }
    }
}

impl RoadSpec {
    pub fn validate(&self) -> Result<()> {
        if self.num_lanes < 2 {
            return Err(Error::config("road.num_lanes", "need at least 2 lanes"));
        }
        if !(self.lane_width > 0.0) {
            return Err(Error::config("road.lane_width", "must be positive"));
        }
        let [start, end] = self.scenario_zone;
        if !(start < end) || start < 0.0 {
            return Err(Error::config("road.scenario_zone", "expected 0 <= start < end"));
        }
        if !(self.length > end) {
            return Err(Error::config("road.length", "must extend past the scenario zone"));
        }
        Ok(())
    }

    pub fn width(&self) -> f64 {
        self.num_lanes as f64 * self.lane_width
    }

    pub fn lane_center(&self, lane: usize) -> f64 {
        (lane as f64 + 0.5) * self.lane_width
    }

    /// Lane whose strip contains `y`, clamped to the road.
    pub fn lane_of(&self, y: f64) -> usize {
        let lane = (y / self.lane_width).floor();
        if lane < 0.0 {
            0
        } else {
            (lane as usize).min(self.num_lanes - 1)
        }
    }

    /// Whether a footprint of `width` centred at `y` overlaps the strip of `lane`.
    pub fn occupies(&self, y: f64, width: f64, lane: usize) -> bool {
        let lo = lane as f64 * self.lane_width;
        let hi = lo + self.lane_width;
        y - 0.5 * width < hi && y + 0.5 * width > lo
    }

    pub fn zone_start(&self) -> f64 {
        self.scenario_zone[0]
    }

    pub fn zone_end(&self) -> f64 {
        self.scenario_zone[1]
    }
}
