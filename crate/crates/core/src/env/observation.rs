//! Fixed-shape relative observation of the traffic around the platoon.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::world::WorldState;

pub const FEATURES: usize = 5;
pub const DEFAULT_MAX_ROWS: usize = 12;

/// One row per visible vehicle: `[dx, dy, dvx, dvy, in_platoon]` relative to
/// the anchor (the platoon lead). The anchor's own row carries its absolute
/// lateral position and velocity instead, `[0, y, vx, vy, 1]`, so speed and
/// lane stay observable. Rows past the valid ones are zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservationMatrix {
    pub rows: Vec<[f64; FEATURES]>,
    pub valid: Vec<bool>,
    /// Vehicle id behind each valid row.
    pub ids: Vec<u32>,
}

impl ObservationMatrix {
    pub fn max_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn num_valid(&self) -> usize {
        self.valid.iter().filter(|v| **v).count()
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.rows.iter().flatten().copied().collect()
    }
}

/// Builds the observation anchored on `platoon_ids[0]`. Vehicles (the anchor
/// included) with `|ds| <= d_vision` appear nearest first, ties by id.
pub fn build_observation(world: &WorldState, platoon_ids: &[u32], d_vision: f64, max_rows: usize) -> Result<ObservationMatrix> {
    let anchor_id = *platoon_ids.first().ok_or_else(|| Error::invalid("platoon is empty"))?;
    let anchor = &world.vehicle(anchor_id).ok_or(Error::UnknownVehicle(anchor_id))?.state;

    let mut visible: Vec<(f64, u32, usize)> = world
        .vehicles
        .iter()
        .enumerate()
        .map(|(i, v)| ((v.state.s - anchor.s).abs(), v.state.id, i))
        .filter(|(d, _, _)| *d <= d_vision)
        .collect();
    visible.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    visible.truncate(max_rows);

    let mut obs = ObservationMatrix {
        rows: vec![[0.0; FEATURES]; max_rows],
        valid: vec![false; max_rows],
        ids: Vec::with_capacity(visible.len()),
    };
    for (row, (_, id, i)) in visible.into_iter().enumerate() {
        let st = &world.vehicles[i].state;
        let member = platoon_ids.contains(&id);
        obs.rows[row] = if id == anchor_id {
            [0.0, st.y, st.vx(), st.vy(), 1.0]
        } else {
            [
                st.s - anchor.s,
                st.y - anchor.y,
                st.vx() - anchor.vx(),
                st.vy() - anchor.vy(),
                if member { 1.0 } else { 0.0 },
            ]
        };
        obs.valid[row] = true;
        obs.ids.push(id);
    }
    Ok(obs)
}
