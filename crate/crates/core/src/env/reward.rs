//! Composite reward: per-vehicle terms plus platoon-level collaboration terms.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::world::{VehicleStatus, WorldState};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RewardWeights {
    pub collision: f64,
    pub lane: f64,
    pub speed: f64,
    pub accel: f64,
    pub same_lane: f64,
    pub distance: f64,
    pub headway: f64,
    pub speed_alignment: f64,
}

impl Default for RewardWeights {
    fn default() -> Self {
        Self {
            collision: 10.0,
            lane: 0.2,
            speed: 1.0,
            accel: 0.2,
            same_lane: 0.5,
            distance: 0.5,
            headway: 1.0,
            speed_alignment: 0.5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RewardParams {
    pub weights: RewardWeights,
    /// Peak of the headway reward, m.
    pub h_target: f64,
    pub sigma_h: f64,
    /// Speed reward ramps from 0 at `v_low` to 1 at `v_high`.
    pub v_low: f64,
    pub v_high: f64,
    /// Normaliser of the progress term, m/s.
    pub v_max: f64,
    pub lane_tolerance: f64,
    pub accel_scale: f64,
    pub speed_spread_scale: f64,
}

impl Default for RewardParams {
    fn default() -> Self {
        Self {
            weights: RewardWeights::default(),
            h_target: 10.0,
            sigma_h: 5.0,
            v_low: 20.0,
            v_high: 28.0,
            v_max: 30.0,
            lane_tolerance: 0.3,
            accel_scale: 3.0,
            speed_spread_scale: 5.0,
        }
    }
}

impl RewardParams {
    /// Bounds of a single-step global reward under these weights.
    pub fn global_bounds(&self) -> (f64, f64) {
        let w = &self.weights;
        let lo = |w: f64, lo: f64, hi: f64| if w >= 0.0 { w * lo } else { w * hi };
        let hi = |w: f64, lo: f64, hi: f64| if w >= 0.0 { w * hi } else { w * lo };
        let terms = [
            (w.collision, -1.0, 0.0),
            (w.lane, 0.0, 1.0),
            (w.speed, 0.0, 1.0),
            (w.accel, -1.0, 0.0),
            (w.same_lane, 0.0, 1.0),
            (w.distance, 0.0, 1.0),
            (w.headway, 0.0, 1.0),
            (w.speed_alignment, 0.0, 1.0),
        ];
        terms.iter().fold((0.0, 0.0), |(a, b), &(w, l, h)| (a + lo(w, l, h), b + hi(w, l, h)))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IndividualReward {
    pub id: u32,
    pub r_c: f64,
    pub r_l: f64,
    pub r_f: f64,
    pub r_a: f64,
    pub total: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardBreakdown {
    pub individual: Vec<IndividualReward>,
    pub r_m: f64,
    pub r_d: f64,
    pub r_h: f64,
    pub r_s: f64,
    pub weights: RewardWeights,
    pub r_sys: f64,
    pub r_global: f64,
}

/// Headway reward: a Gaussian bump peaking at `h_target`.
pub fn headway_reward(h: f64, p: &RewardParams) -> f64 {
    (-((h - p.h_target) / p.sigma_h).powi(2)).exp()
}

/// Bumper gaps between consecutive platoon members after ordering by `s`.
pub fn platoon_headways(world: &WorldState, platoon_ids: &[u32]) -> Result<Vec<f64>> {
    let mut states = Vec::with_capacity(platoon_ids.len());
    for id in platoon_ids {
        states.push(&world.vehicle(*id).ok_or(Error::UnknownVehicle(*id))?.state);
    }
    states.sort_by(|a, b| b.s.total_cmp(&a.s).then(a.id.cmp(&b.id)));
    Ok(states.windows(2).map(|w| w[0].rear() - w[1].front()).collect())
}

/// Share of the platoon sitting in its most populated lane.
pub fn modal_lane_fraction(lanes: &[usize]) -> f64 {
    if lanes.is_empty() {
        return 0.0;
    }
    let max_lane = lanes.iter().copied().max().unwrap_or(0);
    let mut counts = vec![0usize; max_lane + 1];
    for &l in lanes {
        counts[l] += 1;
    }
    *counts.iter().max().unwrap() as f64 / lanes.len() as f64
}

pub fn compute_reward(prev: &WorldState, world: &WorldState, platoon_ids: &[u32], p: &RewardParams) -> Result<RewardBreakdown> {
    if platoon_ids.is_empty() {
        return Err(Error::invalid("platoon is empty"));
    }
    let w = &p.weights;
    let dt = world.time - prev.time;
    let mut individual = Vec::with_capacity(platoon_ids.len());
    let mut lanes = Vec::with_capacity(platoon_ids.len());
    let mut speeds = Vec::with_capacity(platoon_ids.len());
    let mut progress = 0.0;

    for &id in platoon_ids {
        let now = world.vehicle(id).ok_or(Error::UnknownVehicle(id))?;
        let before = prev.vehicle(id).ok_or(Error::UnknownVehicle(id))?;
        let st = &now.state;
        let lane = world.road.lane_of(st.y);
        let r_c = if now.status == VehicleStatus::Crashed { -1.0 } else { 0.0 };
        let r_l = if (st.y - world.road.lane_center(lane)).abs() <= p.lane_tolerance { 1.0 } else { 0.0 };
        let r_f = ((st.v - p.v_low) / (p.v_high - p.v_low)).clamp(0.0, 1.0);
        let r_a = -(st.a / p.accel_scale).powi(2).min(1.0);
        let total = w.collision * r_c + w.lane * r_l + w.speed * r_f + w.accel * r_a;
        individual.push(IndividualReward { id, r_c, r_l, r_f, r_a, total });
        lanes.push(lane);
        speeds.push(st.v);
        progress += st.s - before.state.s;
    }

    let n = platoon_ids.len() as f64;
    let r_m = modal_lane_fraction(&lanes);
    let r_d = if dt > 0.0 {
        (progress / n / (p.v_max * dt)).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let headways = platoon_headways(world, platoon_ids)?;
    let r_h = if headways.is_empty() {
        0.0
    } else {
        headways.iter().map(|h| headway_reward(*h, p)).sum::<f64>() / headways.len() as f64
    };
    let mean_v = speeds.iter().sum::<f64>() / n;
    let std_v = (speeds.iter().map(|v| (v - mean_v).powi(2)).sum::<f64>() / n).sqrt();
    let r_s = 1.0 - (std_v / p.speed_spread_scale).clamp(0.0, 1.0);

    let r_sys = w.same_lane * r_m + w.distance * r_d + w.headway * r_h + w.speed_alignment * r_s;
    let r_global = individual.iter().map(|r| r.total).sum::<f64>() / n + r_sys;
    Ok(RewardBreakdown {
        individual,
        r_m,
        r_d,
        r_h,
        r_s,
        weights: *w,
        r_sys,
        r_global,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn headway_peak_is_at_target() {
        let p = RewardParams::default();
        assert_eq!(headway_reward(p.h_target, &p), 1.0);
        // Grid scan: no sampled headway beats the target.
        let best = (0..=4000)
            .map(|k| k as f64 * 0.01)
            .map(|h| (h, headway_reward(h, &p)))
            .fold((0.0, f64::MIN), |acc, x| if x.1 > acc.1 { x } else { acc });
        assert!((best.0 - p.h_target).abs() < 1e-9);
        assert!(best.1 <= 1.0);
    }

    #[test]
    fn modal_fraction_counts_directly() {
        assert_eq!(modal_lane_fraction(&[1, 1, 1]), 1.0);
        assert_eq!(modal_lane_fraction(&[0, 1, 1]), 2.0 / 3.0);
        assert_eq!(modal_lane_fraction(&[0, 1, 2]), 1.0 / 3.0);
    }

    #[test]
    fn bounds_bracket_extremes() {
        let (lo, hi) = RewardParams::default().global_bounds();
        assert_eq!(lo, -10.2);
        assert_eq!(hi, 0.2 + 1.0 + 0.5 + 0.5 + 1.0 + 0.5);
    }
}
