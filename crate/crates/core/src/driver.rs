//! Human driver models: IDM car-following and MOBIL lane changing.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::world::WorldState;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IdmParams {
    /// Desired speed, m/s.
    pub v0: f64,
    /// Desired time headway, s.
    pub time_headway: f64,
    /// Jam distance, m.
    pub s0: f64,
    pub a_max: f64,
    /// Comfortable deceleration, m/s^2 (positive).
    pub b_comf: f64,
    pub delta: f64,
}

impl Default for IdmParams {
    fn default() -> Self {
        Self {
            v0: 25.0,
            time_headway: 1.5,
            s0: 2.0,
            a_max: 1.5,
            b_comf: 3.0,
            delta: 4.0,
        }
    }
}

impl IdmParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("v0", self.v0),
            ("time_headway", self.time_headway),
            ("s0", self.s0),
            ("a_max", self.a_max),
            ("b_comf", self.b_comf),
        ];
        for (name, value) in positive {
            if !(value > 0.0 && value.is_finite()) {
                return Err(Error::config(format!("idm.{name}"), "must be positive"));
            }
        }
        if !(self.delta >= 1.0) {
            return Err(Error::config("idm.delta", "must be >= 1"));
        }
        Ok(())
    }

    /// Desired dynamic gap `s*`.
    pub fn desired_gap(&self, v: f64, dv: f64) -> f64 {
        let dynamic = v * self.time_headway + v * dv / (2.0 * (self.a_max * self.b_comf).sqrt());
        self.s0 + dynamic.max(0.0)
    }
}

/// IDM acceleration for speed `v`, closing speed `dv = v - v_leader` and
/// bumper gap `gap`. A free road is `gap = f64::INFINITY`.
pub fn idm_accel(v: f64, dv: f64, gap: f64, p: &IdmParams) -> Result<f64> {
    if !(gap > 0.0) {
        return Err(Error::invalid(format!("IDM gap must be positive, got {gap}")));
    }
    let free = 1.0 - (v.max(0.0) / p.v0).powf(p.delta);
    let interaction = if gap.is_infinite() {
        0.0
    } else {
        (p.desired_gap(v, dv) / gap).powi(2)
    };
    Ok(p.a_max * (free - interaction))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MobilParams {
    pub politeness: f64,
    /// Largest deceleration a lane change may impose on the new follower, m/s^2.
    pub b_safe: f64,
    /// Switching threshold, m/s^2.
    pub a_thr: f64,
    /// Keep-right incentive added to right changes, m/s^2.
    pub bias_right: f64,
}

impl Default for MobilParams {
    fn default() -> Self {
        Self {
            politeness: 0.3,
            b_safe: 4.0,
            a_thr: 0.2,
            bias_right: 0.1,
        }
    }
}

impl MobilParams {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.politeness) {
            return Err(Error::config("mobil.politeness", "must lie in [0, 1]"));
        }
        if !(self.b_safe > 0.0) {
            return Err(Error::config("mobil.b_safe", "must be positive"));
        }
        if !(self.a_thr >= 0.0) {
            return Err(Error::config("mobil.a_thr", "must be non-negative"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DriverStyle {
    Aggressive,
    Neutral,
    Conservative,
}

impl DriverStyle {
    pub const ALL: [DriverStyle; 3] = [DriverStyle::Aggressive, DriverStyle::Neutral, DriverStyle::Conservative];

    /// Scales the base parameters: (time headway, max acceleration, politeness).
    pub fn factors(self) -> (f64, f64, f64) {
        match self {
            DriverStyle::Aggressive => (0.7, 1.4, 0.1),
            DriverStyle::Neutral => (1.0, 1.0, 0.3),
            DriverStyle::Conservative => (1.3, 0.8, 0.5),
        }
    }

    pub fn apply(self, idm: &IdmParams, mobil: &MobilParams) -> (IdmParams, MobilParams) {
        let (t, a, politeness) = self.factors();
        (
            IdmParams {
                time_headway: idm.time_headway * t,
                a_max: idm.a_max * a,
                ..*idm
            },
            MobilParams { politeness, ..*mobil },
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LaneDecision {
    KeepLane,
    ChangeLeft,
    ChangeRight,
}

/// Outcome of evaluating one candidate lane for MOBIL.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LaneChangeEvaluation {
    pub lane: usize,
    pub safe: bool,
    /// New follower's acceleration after the change (`None` if there is none).
    pub new_follower_accel: Option<f64>,
    /// Incentive minus threshold (right changes include the keep-right bias).
    pub net_incentive: f64,
}

/// IDM acceleration of a follower against a leader; `None` when they overlap.
fn pair_accel(
    world: &WorldState,
    follower: usize,
    leader: Option<usize>,
    params: &IdmParams,
) -> Option<f64> {
    let f = &world.vehicles[follower].state;
    match leader {
        None => idm_accel(f.v, 0.0, f64::INFINITY, params).ok(),
        Some(l) => {
            let l = &world.vehicles[l].state;
            let gap = l.rear() - f.front();
            idm_accel(f.v, f.v - l.v, gap, params).ok()
        }
    }
}

/// MOBIL evaluation of moving `ego` into `lane`.
pub fn evaluate_lane_change(
    world: &WorldState,
    ego: usize,
    lane: usize,
    p: &MobilParams,
    idm: &IdmParams,
) -> LaneChangeEvaluation {
    let road = &world.road;
    let current = road.lane_of(world.vehicles[ego].state.y);
    let old_leader = world.lane_leader(ego, current);
    let old_follower = world.lane_follower(ego, current);
    let new_leader = world.lane_leader(ego, lane);
    let new_follower = world.lane_follower(ego, lane);

    let unsafe_eval = LaneChangeEvaluation {
        lane,
        safe: false,
        new_follower_accel: None,
        net_incentive: f64::NEG_INFINITY,
    };

    // A target lane already occupied alongside the ego is never safe.
    if world.lane_blocked_alongside(ego, lane) {
        return unsafe_eval;
    }

    let Some(ego_now) = pair_accel(world, ego, old_leader, idm) else {
        return unsafe_eval;
    };
    let Some(ego_after) = pair_accel(world, ego, new_leader, idm) else {
        return unsafe_eval;
    };

    let (new_follower_gain, new_follower_accel) = match new_follower {
        None => (0.0, None),
        Some(n) => {
            let params = world.idm_params_of(n);
            let Some(after) = pair_accel(world, n, Some(ego), &params) else {
                return unsafe_eval;
            };
            let before = pair_accel(world, n, new_leader, &params).unwrap_or(after);
            (after - before, Some(after))
        }
    };

    let old_follower_gain = match old_follower {
        None => 0.0,
        Some(o) => {
            let params = world.idm_params_of(o);
            let before = pair_accel(world, o, Some(ego), &params);
            let after = pair_accel(world, o, old_leader, &params);
            match (before, after) {
                (Some(b), Some(a)) => a - b,
                _ => 0.0,
            }
        }
    };

    let safe = new_follower_accel.is_none_or(|a| a >= -p.b_safe) && ego_after >= -p.b_safe;
    let bias = if lane > current { p.bias_right } else { 0.0 };
    let incentive = (ego_after - ego_now) + p.politeness * (new_follower_gain + old_follower_gain);
    LaneChangeEvaluation {
        lane,
        safe,
        new_follower_accel,
        net_incentive: incentive + bias - p.a_thr,
    }
}

/// MOBIL decision for the vehicle with id `ego_id`.
pub fn mobil_decide(ego_id: u32, world: &WorldState, p: &MobilParams, idm: &IdmParams) -> Result<LaneDecision> {
    let ego = world.index_of(ego_id).ok_or(Error::UnknownVehicle(ego_id))?;
    let current = world.road.lane_of(world.vehicles[ego].state.y);
    let mut best = (LaneDecision::KeepLane, 0.0);
    let mut candidates = Vec::with_capacity(2);
    if current > 0 {
        candidates.push((LaneDecision::ChangeLeft, current - 1));
    }
    if current + 1 < world.road.num_lanes {
        candidates.push((LaneDecision::ChangeRight, current + 1));
    }
    for (decision, lane) in candidates {
        let eval = evaluate_lane_change(world, ego, lane, p, idm);
        if eval.safe && eval.net_incentive > best.1 {
            best = (decision, eval.net_incentive);
        }
    }
    Ok(best.0)
}
