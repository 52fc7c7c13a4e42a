//! Episode-level POMDP surface around the highway world.

pub mod action;
pub mod observation;
pub mod reward;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

pub use action::{decode_action, encode_action, joint_action_count, HighLevelAction, JointAction};
pub use observation::{build_observation, ObservationMatrix, DEFAULT_MAX_ROWS, FEATURES};
pub use reward::{compute_reward, RewardBreakdown, RewardParams, RewardWeights};

use crate::dynamics::ControlCommand;
use crate::error::{Error, Result};
use crate::world::{spawn_traffic, TrafficSetup, VehicleStatus, WorldEvent, WorldState};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnvConfig {
    pub max_steps: u64,
    pub max_rows: usize,
    pub reward: RewardParams,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            max_steps: 600,
            max_rows: DEFAULT_MAX_ROWS,
            reward: RewardParams::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DoneReason {
    Collision,
    RoadEnd,
    Timeout,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepInfo {
    pub reward: RewardBreakdown,
    pub events: Vec<WorldEvent>,
    pub reason: Option<DoneReason>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    pub observation: ObservationMatrix,
    pub reward: f64,
    pub done: bool,
    pub info: StepInfo,
}

/// Tracker commands for the platoon under `actions` (one per platoon slot).
/// Updates each tracker's targets; crashed or stalled members get no command.
pub fn tracking_commands(world: &mut WorldState, platoon_ids: &[u32], actions: &[HighLevelAction]) -> Result<BTreeMap<u32, ControlCommand>> {
    if actions.len() != platoon_ids.len() {
        return Err(Error::invalid(format!(
            "{} actions for a platoon of {}",
            actions.len(),
            platoon_ids.len()
        )));
    }
    let dt = world.dt();
    let road = &world.road;
    let cfg = &world.config;
    let mut out = BTreeMap::new();
    for (&id, &action) in platoon_ids.iter().zip(actions) {
        let idx = world
            .vehicles
            .binary_search_by_key(&id, |v| v.state.id)
            .map_err(|_| Error::UnknownVehicle(id))?;
        let vehicle = &mut world.vehicles[idx];
        if vehicle.status != VehicleStatus::Active {
            continue;
        }
        let state = vehicle.state.clone();
        let tracker = vehicle.tracker_mut().ok_or(Error::UnknownVehicle(id))?;
        out.insert(id, tracker.pid_track(action, &state, road, &cfg.tracking, &cfg.limits, dt));
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct Episode {
    pub world: WorldState,
    pub platoon_ids: Vec<u32>,
    pub config: EnvConfig,
    pub done: Option<DoneReason>,
}

impl Episode {
    pub fn new(world: WorldState, platoon_ids: Vec<u32>, config: EnvConfig) -> Result<Self> {
        if platoon_ids.is_empty() {
            return Err(Error::invalid("platoon is empty"));
        }
        for id in &platoon_ids {
            world.vehicle(*id).ok_or(Error::UnknownVehicle(*id))?;
        }
        Ok(Self {
            world,
            platoon_ids,
            config,
            done: None,
        })
    }

    pub fn from_setup(setup: &TrafficSetup, config: EnvConfig, seed: u64) -> Result<Self> {
        let (world, ids) = spawn_traffic(setup, seed)?;
        Self::new(world, ids, config)
    }

    pub fn num_vehicles(&self) -> usize {
        self.platoon_ids.len()
    }

    pub fn is_done(&self) -> bool {
        self.done.is_some()
    }

    pub fn observe(&self) -> Result<ObservationMatrix> {
        build_observation(&self.world, &self.platoon_ids, self.world.config.d_vision, self.config.max_rows)
    }

    /// Decodes `action_index`, tracks it with the PID layer and steps once.
    pub fn step_action(&mut self, action_index: usize) -> Result<StepResult> {
        let actions = decode_action(action_index, self.num_vehicles())?;
        self.step_joint(&actions)
    }

    pub fn step_joint(&mut self, actions: &[HighLevelAction]) -> Result<StepResult> {
        self.ensure_active()?;
        let commands = tracking_commands(&mut self.world, &self.platoon_ids, actions)?;
        self.step_commands(&commands)
    }

    /// Steps the world with explicit CAV commands, then scores the transition.
    pub fn step_commands(&mut self, commands: &BTreeMap<u32, ControlCommand>) -> Result<StepResult> {
        self.ensure_active()?;
        let prev = self.world.clone();
        let events = self.world.step(commands)?;
        let reward = compute_reward(&prev, &self.world, &self.platoon_ids, &self.config.reward)?;
        let reason = self.termination();
        self.done = reason;
        Ok(StepResult {
            observation: self.observe()?,
            reward: reward.r_global,
            done: reason.is_some(),
            info: StepInfo { reward, events, reason },
        })
    }

    fn ensure_active(&self) -> Result<()> {
        match self.done {
            Some(reason) => Err(Error::invalid(format!("episode already finished ({reason:?})"))),
            None => Ok(()),
        }
    }

    fn termination(&self) -> Option<DoneReason> {
        let members = self.platoon_ids.iter().filter_map(|id| self.world.vehicle(*id));
        let mut any_crashed = false;
        let mut any_at_end = false;
        for v in members {
            any_crashed |= v.status == VehicleStatus::Crashed;
            any_at_end |= v.state.front() >= self.world.road.length;
        }
        if any_crashed {
            Some(DoneReason::Collision)
        } else if any_at_end {
            Some(DoneReason::RoadEnd)
        } else if self.world.step_index >= self.config.max_steps {
            Some(DoneReason::Timeout)
        } else {
            None
        }
    }
}

/// Functional alias of [`Episode::step_action`].
pub fn env_step(episode: &mut Episode, action_index: usize) -> Result<StepResult> {
    episode.step_action(action_index)
}
