//! Two-state supervisor switching between LQR formation keeping and the
//! safety-projected data-driven strategy.

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dynamics::{ControlCommand, VehicleState};
use crate::env::action::{HighLevelAction, JointAction};
use crate::env::observation::ObservationMatrix;
use crate::env::tracking_commands;
use crate::error::{Error, Result};
use crate::lqr::{lqr_follow, LqrConfig, LqrDesign};
use crate::safety::{project_actions, SafetyConfig};
use crate::tracking::lateral_steer;
use crate::world::{VehicleStatus, WorldState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FsmMode {
    #[serde(rename = "S1_LQR")]
    S1Lqr,
    #[serde(rename = "S2_DATA_DRIVEN")]
    S2DataDriven,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Strategy {
    #[serde(rename = "LQR")]
    Lqr,
    DataDriven,
}

impl FsmMode {
    pub fn strategy(self) -> Strategy {
        match self {
            FsmMode::S1Lqr => Strategy::Lqr,
            FsmMode::S2DataDriven => Strategy::DataDriven,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FsmState {
    pub q: FsmMode,
    pub entered_at: u64,
    /// Consecutive routine-safe assessments so far.
    pub safe_streak: u32,
}

impl Default for FsmState {
    fn default() -> Self {
        Self {
            q: FsmMode::S2DataDriven,
            entered_at: 0,
            safe_streak: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RiskLevel {
    RoutineSafe,
    Elevated,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RiskAssessment {
    pub same_lane: bool,
    pub clear_zone: bool,
    pub risk_level: RiskLevel,
}

impl RiskAssessment {
    pub fn new(same_lane: bool, clear_zone: bool) -> Self {
        let risk_level = if same_lane && clear_zone {
            RiskLevel::RoutineSafe
        } else {
            RiskLevel::Elevated
        };
        Self {
            same_lane,
            clear_zone,
            risk_level,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FsmConfig {
    /// When false the supervisor stays in the data-driven state.
    pub enabled: bool,
    pub l_safe: f64,
    /// Routine-safe steps required before switching to LQR.
    pub dwell: u32,
}

impl Default for FsmConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            l_safe: 50.0,
            dwell: 15,
        }
    }
}

/// Same-lane check plus a scan of the band `[min s − L_safe, max s + L_safe]`
/// across all lanes for non-platoon vehicles.
pub fn assess_scene(world: &WorldState, platoon_ids: &[u32], l_safe: f64) -> Result<RiskAssessment> {
    let mut members = Vec::with_capacity(platoon_ids.len());
    for id in platoon_ids {
        members.push(&world.vehicle(*id).ok_or(Error::UnknownVehicle(*id))?.state);
    }
    let first = members.first().ok_or_else(|| Error::invalid("platoon is empty"))?;
    let same_lane = members.iter().all(|m| m.lane == first.lane);
    let lo = members.iter().map(|m| m.s).fold(f64::INFINITY, f64::min) - l_safe;
    let hi = members.iter().map(|m| m.s).fold(f64::NEG_INFINITY, f64::max) + l_safe;
    let clear_zone = !world
        .vehicles
        .iter()
        .any(|v| !platoon_ids.contains(&v.state.id) && v.state.s >= lo && v.state.s <= hi);
    Ok(RiskAssessment::new(same_lane, clear_zone))
}

/// Pure transition function. Elevated risk forces the data-driven state in
/// the same step; LQR is entered only after `dwell` routine-safe steps in a row.
pub fn fsm_step(state: &FsmState, assessment: &RiskAssessment, dwell: u32, step: u64) -> (FsmState, Strategy) {
    let next = match assessment.risk_level {
        RiskLevel::Elevated => FsmState {
            q: FsmMode::S2DataDriven,
            entered_at: if state.q == FsmMode::S2DataDriven { state.entered_at } else { step },
            safe_streak: 0,
        },
        RiskLevel::RoutineSafe => {
            let streak = state.safe_streak.saturating_add(1);
            match state.q {
                FsmMode::S1Lqr => FsmState {
                    safe_streak: streak,
                    ..*state
                },
                FsmMode::S2DataDriven if streak >= dwell => FsmState {
                    q: FsmMode::S1Lqr,
                    entered_at: step,
                    safe_streak: streak,
                },
                FsmMode::S2DataDriven => FsmState {
                    safe_streak: streak,
                    ..*state
                },
            }
        }
    };
    (next, next.q.strategy())
}

/// Source of joint-action proposals for the data-driven state.
pub trait Proposer {
    fn propose(&mut self, world: &WorldState, platoon_ids: &[u32], obs: &ObservationMatrix) -> Result<JointAction>;

    fn describe(&self) -> String;
}

/// Proposes the same action for every vehicle, every step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ScriptedProposer {
    pub action: HighLevelAction,
}

impl Default for ScriptedProposer {
    fn default() -> Self {
        Self {
            action: HighLevelAction::Idle,
        }
    }
}

impl Proposer for ScriptedProposer {
    fn propose(&mut self, _world: &WorldState, platoon_ids: &[u32], _obs: &ObservationMatrix) -> Result<JointAction> {
        Ok(JointAction::uniform(self.action, platoon_ids.len()))
    }

    fn describe(&self) -> String {
        format!("scripted:{:?}", self.action)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SupervisorConfig {
    pub fsm: FsmConfig,
    pub safety: SafetyConfig,
    pub lqr: LqrConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubstitutionRecord {
    pub vehicle: u32,
    pub original: HighLevelAction,
    pub substituted: HighLevelAction,
    pub original_margin: f64,
    pub final_margin: f64,
    pub unsafe_best_effort: bool,
}

/// Per-vehicle verification summary from the projector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaskCheck {
    pub vehicle: u32,
    pub priority: f64,
    pub conflict: bool,
    pub margin: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Decision {
    pub commands: BTreeMap<u32, ControlCommand>,
    pub fsm: FsmMode,
    pub strategy: Strategy,
    pub assessment: RiskAssessment,
    pub proposed: Option<JointAction>,
    pub final_action: Option<JointAction>,
    pub substitutions: Vec<SubstitutionRecord>,
    /// Empty when the projector did not run.
    pub mask_checks: Vec<MaskCheck>,
}

pub struct Supervisor {
    pub state: FsmState,
    pub config: SupervisorConfig,
    pub design: LqrDesign,
    /// Source of the priority tie-break noise.
    rng: ChaCha8Rng,
}

impl Supervisor {
    pub fn new(config: SupervisorConfig, dt: f64, seed: u64) -> Result<Self> {
        config.safety.validate()?;
        if !(config.fsm.l_safe >= 0.0) {
            return Err(Error::config("supervisor.fsm.l_safe", "must be non-negative"));
        }
        Ok(Self {
            state: FsmState::default(),
            design: LqrDesign::new(config.lqr, dt)?,
            config,
            rng: ChaCha8Rng::seed_from_u64(seed),
        })
    }

    /// Assesses the scene, advances the FSM and produces this step's commands.
    /// Tracker state inside `world` is updated; the world is not stepped.
    pub fn decide(&mut self, world: &mut WorldState, platoon_ids: &[u32], proposer: &mut dyn Proposer, obs: &ObservationMatrix) -> Result<Decision> {
        let assessment = assess_scene(world, platoon_ids, self.config.fsm.l_safe)?;
        let prev = self.state;
        let (next, strategy) = if self.config.fsm.enabled {
            fsm_step(&prev, &assessment, self.config.fsm.dwell, world.step_index)
        } else {
            (FsmState::default(), Strategy::DataDriven)
        };
        self.state = next;
        if prev.q == FsmMode::S1Lqr && next.q == FsmMode::S2DataDriven {
            for id in platoon_ids {
                world.reset_tracker(*id);
            }
        }

        let mut decision = Decision {
            commands: BTreeMap::new(),
            fsm: next.q,
            strategy,
            assessment,
            proposed: None,
            final_action: None,
            substitutions: Vec::new(),
            mask_checks: Vec::new(),
        };
        match strategy {
            Strategy::Lqr => decision.commands = self.lqr_commands(world, platoon_ids)?,
            Strategy::DataDriven => {
                let proposed = proposer.propose(world, platoon_ids, obs)?;
                let final_action = if self.config.safety.enabled {
                    let projection = project_actions(world, platoon_ids, &proposed, &self.config.safety, &mut self.rng)?;
                    for a in &projection.assessments {
                        decision.mask_checks.push(MaskCheck {
                            vehicle: a.vehicle_id,
                            priority: a.priority.p,
                            conflict: a.conflict,
                            margin: a.original_margin,
                        });
                        if let Some(sub) = a.substituted {
                            decision.substitutions.push(SubstitutionRecord {
                                vehicle: a.vehicle_id,
                                original: a.original,
                                substituted: sub,
                                original_margin: a.original_margin,
                                final_margin: a.final_margin,
                                unsafe_best_effort: a.unsafe_best_effort,
                            });
                        }
                    }
                    projection.action
                } else {
                    proposed.clone()
                };
                decision.commands = tracking_commands(world, platoon_ids, &final_action.per_vehicle)?;
                decision.proposed = Some(proposed);
                decision.final_action = Some(final_action);
            }
        }
        Ok(decision)
    }

    /// LQR longitudinal commands with lane-centring steer.
    pub fn lqr_commands(&self, world: &WorldState, platoon_ids: &[u32]) -> Result<BTreeMap<u32, ControlCommand>> {
        let mut members: Vec<&VehicleState> = Vec::with_capacity(platoon_ids.len());
        for id in platoon_ids {
            let v = world.vehicle(*id).ok_or(Error::UnknownVehicle(*id))?;
            if v.status == VehicleStatus::Active {
                members.push(&v.state);
            }
        }
        members.sort_by(|a, b| b.s.total_cmp(&a.s).then(a.id.cmp(&b.id)));
        let limits = &world.config.limits;
        let accels = lqr_follow(&members, &self.design, limits)?;
        Ok(members
            .iter()
            .zip(accels)
            .map(|(st, accel)| {
                let steer = lateral_steer(st, world.road.lane_center(st.lane), &world.config.tracking.gains, limits);
                (st.id, limits.clamp(ControlCommand::new(accel, steer)))
            })
            .collect())
    }
}
