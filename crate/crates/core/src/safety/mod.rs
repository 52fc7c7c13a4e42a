//! Twin-world safety projection.
//!
//! Proposed platoon actions are rolled forward in a deep copy of the world.
//! Vehicles are verified in descending safety priority; when a vehicle's
//! predicted footprint comes too close to anyone, its action is replaced by
//! the alternative with the largest horizon-minimum safety margin, and the
//! committed substitution is carried into the checks of later vehicles.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dynamics::VehicleState;
use crate::env::action::{HighLevelAction, JointAction};
use crate::env::tracking_commands;
use crate::error::{Error, Result};
use crate::world::collision::overlapping_pairs;
use crate::world::{RoadSpec, VehicleStatus, WorldState};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SafetyConfig {
    pub enabled: bool,
    /// Rollout horizon, steps.
    pub horizon: usize,
    /// Clearance added to the sum of radii before a predicted pair conflicts, m.
    pub buffer: f64,
    pub sigma_scale: f64,
    pub min_speed: f64,
    /// Whether predicted HDVs may change lanes.
    pub predict_mobil: bool,
}

impl Default for SafetyConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            horizon: 15,
            buffer: 0.5,
            sigma_scale: 1e-3,
            min_speed: 0.1,
            predict_mobil: true,
        }
    }
}

impl SafetyConfig {
    pub fn validate(&self) -> Result<()> {
        if self.horizon == 0 {
            return Err(Error::config("safety.horizon", "must be at least one step"));
        }
        if !(self.buffer >= 0.0) || !(self.sigma_scale >= 0.0) || !(self.min_speed > 0.0) {
            return Err(Error::config("safety", "buffer and sigma_scale must be >= 0, min_speed > 0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SafetyPriority {
    pub vehicle_id: u32,
    pub p: f64,
    pub headway: f64,
    pub speed: f64,
    pub sigma: f64,
}

/// Urgency `p = −ln(headway / max(v, min_speed)) + σ` with `σ ~ U(0, sigma_scale)`.
/// Without a leader the headway is the vision range.
pub fn safety_priority(world: &WorldState, vehicle_id: u32, cfg: &SafetyConfig, rng: &mut impl Rng) -> Result<SafetyPriority> {
    let idx = world.index_of(vehicle_id).ok_or(Error::UnknownVehicle(vehicle_id))?;
    let d_vision = world.config.d_vision;
    let headway = world.headway(idx).map_or(d_vision, |(_, gap)| gap.min(d_vision)).max(1e-3);
    let speed = world.vehicles[idx].state.v;
    let sigma = if cfg.sigma_scale > 0.0 {
        rng.gen_range(0.0..cfg.sigma_scale)
    } else {
        0.0
    };
    Ok(SafetyPriority {
        vehicle_id,
        p: -(headway / speed.max(cfg.min_speed)).ln() + sigma,
        headway,
        speed,
        sigma,
    })
}

/// Sorted descending by `p` (ties by id).
pub fn priority_order(world: &WorldState, platoon_ids: &[u32], cfg: &SafetyConfig, rng: &mut impl Rng) -> Result<Vec<SafetyPriority>> {
    let mut out = platoon_ids
        .iter()
        .map(|id| safety_priority(world, *id, cfg, rng))
        .collect::<Result<Vec<_>>>()?;
    out.sort_by(|a, b| b.p.total_cmp(&a.p).then(a.vehicle_id.cmp(&b.vehicle_id)));
    Ok(out)
}

/// Predicted world states, one frame per horizon step (frame 0 is the start).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectories {
    pub frames: Vec<Vec<VehicleState>>,
}

impl Trajectories {
    pub fn horizon(&self) -> usize {
        self.frames.len() - 1
    }

    /// Track of one vehicle; missing once it has left the road.
    pub fn track(&self, id: u32) -> Vec<&VehicleState> {
        self.frames
            .iter()
            .filter_map(|f| f.binary_search_by_key(&id, |s| s.id).ok().map(|i| &f[i]))
            .collect()
    }
}

/// Deep copy prepared for prediction: latent HDV events stay hidden.
pub fn make_twin(world: &WorldState, cfg: &SafetyConfig) -> WorldState {
    let mut twin = world.clone();
    twin.prediction_mode = true;
    twin.config.mobil_enabled &= cfg.predict_mobil;
    twin
}

/// Rolls `twin` forward `horizon` steps with each platoon member repeating
/// its action every step through the tracking layer.
pub fn rollout_twin(twin: &WorldState, platoon_ids: &[u32], actions: &[HighLevelAction], horizon: usize) -> Result<Trajectories> {
    let mut world = twin.clone();
    let mut frames = Vec::with_capacity(horizon + 1);
    frames.push(world.vehicles.iter().map(|v| v.state.clone()).collect());
    for _ in 0..horizon {
        let commands = tracking_commands(&mut world, platoon_ids, actions)?;
        world.step(&commands)?;
        frames.push(world.vehicles.iter().map(|v| v.state.clone()).collect());
    }
    Ok(Trajectories { frames })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Maneuver {
    LaneKeep,
    /// Change towards the given lane.
    LaneChange(usize),
}

impl Maneuver {
    pub fn of(action: HighLevelAction, state: &VehicleState, num_lanes: usize) -> Self {
        let lane = state.lane;
        match action {
            HighLevelAction::LaneLeft if lane > 0 => Maneuver::LaneChange(lane - 1),
            HighLevelAction::LaneRight if lane + 1 < num_lanes => Maneuver::LaneChange(lane + 1),
            _ => Maneuver::LaneKeep,
        }
    }
}

/// Horizon-minimum bumper gap from `ego` to the relevant neighbours, capped
/// at `d_vision`. Lane keeping watches the leader in every lane the ego
/// touches; a lane change also watches the target lane's leader and follower.
///
/// Who is ahead is fixed by the first frame, so a predicted run through a
/// slower vehicle keeps deepening the (negative) margin.
pub fn safety_margin(traj: &Trajectories, ego: u32, maneuver: Maneuver, road: &RoadSpec, d_vision: f64) -> f64 {
    let occupies = |s: &VehicleState, lane: usize| road.occupies(s.y, s.width, lane);
    let first = &traj.frames[0];
    let Ok(e0) = first.binary_search_by_key(&ego, |s| s.id) else {
        return d_vision;
    };
    let me0 = &first[e0];
    let ahead = |o: &VehicleState| match first.binary_search_by_key(&o.id, |s| s.id) {
        Ok(i) => first[i].s > me0.s || (first[i].s == me0.s && o.id > ego),
        Err(_) => false,
    };
    let mut margin = d_vision;
    for frame in &traj.frames {
        let Ok(ei) = frame.binary_search_by_key(&ego, |s| s.id) else {
            continue;
        };
        let me = &frame[ei];
        for lane in 0..road.num_lanes {
            if !occupies(me, lane) {
                continue;
            }
            for o in frame.iter().filter(|o| o.id != ego && ahead(o) && occupies(o, lane)) {
                margin = margin.min(o.rear() - me.front());
            }
        }
        if let Maneuver::LaneChange(target) = maneuver {
            for o in frame.iter().filter(|o| o.id != ego && occupies(o, target)) {
                let gap = if ahead(o) { o.rear() - me.front() } else { me.rear() - o.front() };
                margin = margin.min(gap);
            }
        }
    }
    margin
}

/// Ids of platoon vehicles whose predicted footprint comes within the
/// buffer of any other vehicle at some step.
pub fn conflicting_vehicles(traj: &Trajectories, platoon_ids: &[u32], buffer: f64) -> Vec<u32> {
    let mut hit = Vec::new();
    for frame in &traj.frames[1..] {
        let refs: Vec<&VehicleState> = frame.iter().collect();
        for pair in overlapping_pairs(&refs, buffer) {
            for id in [pair.a, pair.b] {
                if platoon_ids.contains(&id) && !hit.contains(&id) {
                    hit.push(id);
                }
            }
        }
    }
    hit.sort_unstable();
    hit
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CandidateScore {
    pub action: HighLevelAction,
    pub margin: f64,
    pub conflict: bool,
    pub platoon_conflicts: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SafetyAssessment {
    pub vehicle_id: u32,
    pub priority: SafetyPriority,
    pub original: HighLevelAction,
    pub original_margin: f64,
    pub conflict: bool,
    pub substituted: Option<HighLevelAction>,
    pub final_margin: f64,
    /// Every alternative still conflicts; the best one was kept anyway.
    pub unsafe_best_effort: bool,
    /// Scores of the candidates evaluated for this vehicle (empty when the
    /// proposal passed verification).
    pub candidates: Vec<CandidateScore>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Projection {
    pub action: JointAction,
    pub assessments: Vec<SafetyAssessment>,
    pub trajectories: Trajectories,
}

impl Projection {
    pub fn substitutions(&self) -> impl Iterator<Item = &SafetyAssessment> {
        self.assessments.iter().filter(|a| a.substituted.is_some())
    }
}

fn slot_of(platoon_ids: &[u32], id: u32) -> usize {
    platoon_ids.iter().position(|p| *p == id).expect("id from the platoon")
}

/// Verifies `proposed` in the twin world and substitutes conflicting actions
/// in priority order. The real world is left untouched.
pub fn project_actions(
    world: &WorldState,
    platoon_ids: &[u32],
    proposed: &JointAction,
    cfg: &SafetyConfig,
    rng: &mut impl Rng,
) -> Result<Projection> {
    if proposed.len() != platoon_ids.len() {
        return Err(Error::invalid("proposal length differs from the platoon size"));
    }
    let twin = make_twin(world, cfg);
    let d_vision = world.config.d_vision;
    let order = priority_order(world, platoon_ids, cfg, rng)?;

    let mut joint = proposed.per_vehicle.clone();
    let mut traj = rollout_twin(&twin, platoon_ids, &joint, cfg.horizon)?;
    let mut conflicts = conflicting_vehicles(&traj, platoon_ids, cfg.buffer);
    let mut assessments = Vec::with_capacity(order.len());

    for priority in order {
        let id = priority.vehicle_id;
        let slot = slot_of(platoon_ids, id);
        let state = &world.vehicle(id).ok_or(Error::UnknownVehicle(id))?.state;
        let original = joint[slot];
        let original_margin = safety_margin(&traj, id, Maneuver::of(original, state, world.road.num_lanes), &world.road, d_vision);
        let active = world.vehicle(id).is_some_and(|v| v.status == VehicleStatus::Active);
        let conflict = active && conflicts.contains(&id);
        let mut assessment = SafetyAssessment {
            vehicle_id: id,
            priority,
            original,
            original_margin,
            conflict,
            substituted: None,
            final_margin: original_margin,
            unsafe_best_effort: false,
            candidates: Vec::new(),
        };
        if !conflict {
            assessments.push(assessment);
            continue;
        }

        let mut scored: Vec<(CandidateScore, Trajectories)> = Vec::with_capacity(HighLevelAction::COUNT);
        for action in HighLevelAction::ALL {
            let candidate_traj = if action == original {
                traj.clone()
            } else {
                let mut trial = joint.clone();
                trial[slot] = action;
                rollout_twin(&twin, platoon_ids, &trial, cfg.horizon)?
            };
            let hits = conflicting_vehicles(&candidate_traj, platoon_ids, cfg.buffer);
            let margin = safety_margin(&candidate_traj, id, Maneuver::of(action, state, world.road.num_lanes), &world.road, d_vision);
            let score = CandidateScore {
                action,
                margin,
                conflict: hits.contains(&id),
                platoon_conflicts: hits.len(),
            };
            scored.push((score, candidate_traj));
        }

        // Only alternatives at least as safe as the original are eligible;
        // among them a conflict-free outcome wins, then the larger margin,
        // then fewer platoon members in conflict.
        let best = scored
            .iter()
            .filter(|(s, _)| s.margin >= original_margin)
            .min_by(|(a, _), (b, _)| {
                a.conflict
                    .cmp(&b.conflict)
                    .then(b.margin.total_cmp(&a.margin))
                    .then(a.platoon_conflicts.cmp(&b.platoon_conflicts))
                    .then((a.action != original).cmp(&(b.action != original)))
            })
            .map(|(s, _)| s.action)
            .unwrap_or(original);
        let (best_score, best_traj) = scored.iter().find(|(s, _)| s.action == best).cloned().expect("scored every action");

        assessment.candidates = scored.iter().map(|(s, _)| *s).collect();
        assessment.unsafe_best_effort = best_score.conflict;
        assessment.final_margin = best_score.margin;
        if best != original {
            assessment.substituted = Some(best);
            joint[slot] = best;
            traj = best_traj;
            conflicts = conflicting_vehicles(&traj, platoon_ids, cfg.buffer);
        }
        assessments.push(assessment);
    }

    Ok(Projection {
        action: JointAction::from_tuple(joint),
        assessments,
        trajectories: traj,
    })
}

/// Per-vehicle admissible sets: each action is screened with the rest of the
/// platoon idling. Conflict-free actions are admissible; when none is, the
/// actions with the largest margin are.
pub fn admissible_sets(world: &WorldState, platoon_ids: &[u32], cfg: &SafetyConfig) -> Result<Vec<[bool; HighLevelAction::COUNT]>> {
    let twin = make_twin(world, cfg);
    let d_vision = world.config.d_vision;
    let idle = vec![HighLevelAction::Idle; platoon_ids.len()];
    let base = rollout_twin(&twin, platoon_ids, &idle, cfg.horizon)?;
    let mut sets = Vec::with_capacity(platoon_ids.len());
    for (slot, &id) in platoon_ids.iter().enumerate() {
        let state = &world.vehicle(id).ok_or(Error::UnknownVehicle(id))?.state;
        let mut allowed = [false; HighLevelAction::COUNT];
        let mut margins = [f64::NEG_INFINITY; HighLevelAction::COUNT];
        for action in HighLevelAction::ALL {
            let traj = if action == HighLevelAction::Idle {
                base.clone()
            } else {
                let mut trial = idle.clone();
                trial[slot] = action;
                rollout_twin(&twin, platoon_ids, &trial, cfg.horizon)?
            };
            allowed[action.index()] = !conflicting_vehicles(&traj, platoon_ids, cfg.buffer).contains(&id);
            margins[action.index()] = safety_margin(&traj, id, Maneuver::of(action, state, world.road.num_lanes), &world.road, d_vision);
        }
        if !allowed.iter().any(|a| *a) {
            let best = margins.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            for (k, m) in margins.iter().enumerate() {
                allowed[k] = *m == best;
            }
        }
        sets.push(allowed);
    }
    Ok(sets)
}

/// Joint mask over all `5^N` actions: the product of the per-vehicle sets.
pub fn admissible_mask(world: &WorldState, platoon_ids: &[u32], cfg: &SafetyConfig) -> Result<Vec<bool>> {
    let sets = admissible_sets(world, platoon_ids, cfg)?;
    Ok(joint_mask(&sets))
}

pub fn joint_mask(sets: &[[bool; HighLevelAction::COUNT]]) -> Vec<bool> {
    let n = sets.len();
    let total = HighLevelAction::COUNT.pow(n as u32);
    (0..total)
        .map(|index| {
            let mut rest = index;
            (0..n).rev().all(|k| {
                let digit = rest % HighLevelAction::COUNT;
                rest /= HighLevelAction::COUNT;
                sets[k][digit]
            })
        })
        .collect()
}
