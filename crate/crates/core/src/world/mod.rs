//! Three-lane highway world: vehicles, HDV behaviour, synchronous stepping.

pub mod collision;
pub mod road;
pub mod spawn;

use std::collections::{BTreeMap, BTreeSet};

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::driver::{idm_accel, mobil_decide, DriverStyle, IdmParams, LaneDecision, MobilParams};
use crate::dynamics::{step_kinematics, ActuatorLimits, ControlCommand, VehicleKind, VehicleState};
use crate::error::{Error, Result};
use crate::tracking::{lateral_steer, TrackingConfig, TrackingController};

pub use collision::{detect_collisions, CollisionPair};
pub use road::RoadSpec;
pub use spawn::{spawn_traffic, PlatoonConfig, ScenarioConfig, ScenarioKind, SpawnConfig, TrafficSetup};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VehicleStatus {
    Active,
    /// Stationary after a malfunction or placed as a wreck.
    Stalled,
    /// Involved in a collision; frozen in place.
    Crashed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MalfunctionKind {
    Stall,
    Brake,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Malfunction {
    pub kind: MalfunctionKind,
    pub trigger_time: f64,
    pub decel: f64,
    pub duration: f64,
    pub triggered_at: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HdvBehavior {
    Normal,
    /// Tracks a sinusoidal speed reference; never changes lane.
    Oscillating {
        center_speed: f64,
        amplitude: f64,
        period: f64,
        phase: f64,
    },
    /// Cuts into `target_lane` once a platoon vehicle behind it there is
    /// within `trigger_gap` metres.
    CutIn {
        target_lane: usize,
        trigger_gap: f64,
        triggered: bool,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HdvDriver {
    pub idm: IdmParams,
    pub mobil: MobilParams,
    pub style: DriverStyle,
    pub target_lane: usize,
    pub last_lane_change_step: Option<u64>,
    pub behavior: HdvBehavior,
    pub malfunction: Option<Malfunction>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Control {
    Cav(TrackingController),
    Hdv(HdvDriver),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Vehicle {
    pub state: VehicleState,
    pub status: VehicleStatus,
    pub control: Control,
}

impl Vehicle {
    pub fn is_moving(&self) -> bool {
        self.status == VehicleStatus::Active
    }

    pub fn tracker(&self) -> Option<&TrackingController> {
        match &self.control {
            Control::Cav(t) => Some(t),
            Control::Hdv(_) => None,
        }
    }

    pub fn tracker_mut(&mut self) -> Option<&mut TrackingController> {
        match &mut self.control {
            Control::Cav(t) => Some(t),
            Control::Hdv(_) => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum WorldEvent {
    Collision { a: u32, b: u32, distance: f64 },
    ZoneEnter { id: u32 },
    ZoneExit { id: u32 },
    Malfunction { id: u32, kind: MalfunctionKind },
    Halted { id: u32 },
    CutIn { id: u32, lane: usize },
    LaneChange { id: u32, from: usize, to: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WorldConfig {
    pub control_rate_hz: f64,
    pub limits: ActuatorLimits,
    pub tracking: TrackingConfig,
    /// Car-following model assumed for CAVs whenever MOBIL or the opponent
    /// predictor needs their reaction.
    pub cav_idm: IdmParams,
    pub mobil_period_steps: u64,
    /// HDVs consider lane changes at all. The twin world can switch this off.
    pub mobil_enabled: bool,
    pub lane_change_cooldown: f64,
    pub oscillation_gain: f64,
    pub d_vision: f64,
}

impl Default for WorldConfig {
    fn default() -> Self {
        Self {
            control_rate_hz: 15.0,
            limits: ActuatorLimits::default(),
            tracking: TrackingConfig::default(),
            cav_idm: IdmParams {
                v0: 30.0,
                ..IdmParams::default()
            },
            mobil_period_steps: 15,
            mobil_enabled: true,
            lane_change_cooldown: 2.0,
            oscillation_gain: 1.0,
            d_vision: 100.0,
        }
    }
}

impl WorldConfig {
    pub fn dt(&self) -> f64 {
        1.0 / self.control_rate_hz
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.control_rate_hz > 0.0) {
            return Err(Error::config("world.control_rate_hz", "must be positive"));
        }
        if !(self.d_vision >= 0.0) {
            return Err(Error::config("world.d_vision", "must be non-negative"));
        }
        if self.mobil_period_steps == 0 {
            return Err(Error::config("world.mobil_period_steps", "must be at least 1"));
        }
        self.cav_idm.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldState {
    pub time: f64,
    pub step_index: u64,
    pub road: RoadSpec,
    pub config: WorldConfig,
    /// Sorted by id.
    pub vehicles: Vec<Vehicle>,
    pub rng: ChaCha8Rng,
    /// Events produced by the most recent step.
    pub events: Vec<WorldEvent>,
    collided_pairs: BTreeSet<(u32, u32)>,
    /// Twin-world mode: latent HDV events (untriggered malfunctions and
    /// cut-ins) stay hidden and collisions are not resolved.
    pub prediction_mode: bool,
}

/// Per-HDV decision computed from the pre-step snapshot.
struct HdvUpdate {
    index: usize,
    command: ControlCommand,
    new_target_lane: Option<usize>,
    trigger_malfunction: bool,
    trigger_cut_in: bool,
    stall: bool,
}

impl WorldState {
    pub fn new(road: RoadSpec, config: WorldConfig, rng: ChaCha8Rng) -> Self {
        Self {
            time: 0.0,
            step_index: 0,
            road,
            config,
            vehicles: Vec::new(),
            rng,
            events: Vec::new(),
            collided_pairs: BTreeSet::new(),
            prediction_mode: false,
        }
    }

    /// Inserts a vehicle keeping id order; ids must be unique.
    pub fn insert(&mut self, vehicle: Vehicle) -> Result<()> {
        match self.vehicles.binary_search_by_key(&vehicle.state.id, |v| v.state.id) {
            Ok(_) => Err(Error::invalid(format!("duplicate vehicle id {}", vehicle.state.id))),
            Err(pos) => {
                self.vehicles.insert(pos, vehicle);
                Ok(())
            }
        }
    }

    pub fn index_of(&self, id: u32) -> Option<usize> {
        self.vehicles.binary_search_by_key(&id, |v| v.state.id).ok()
    }

    pub fn vehicle(&self, id: u32) -> Option<&Vehicle> {
        self.index_of(id).map(|i| &self.vehicles[i])
    }

    pub fn vehicle_mut(&mut self, id: u32) -> Option<&mut Vehicle> {
        self.index_of(id).map(move |i| &mut self.vehicles[i])
    }

    pub fn dt(&self) -> f64 {
        self.config.dt()
    }

    pub fn cav_ids(&self) -> Vec<u32> {
        self.vehicles
            .iter()
            .filter(|v| v.state.kind == VehicleKind::Cav)
            .map(|v| v.state.id)
            .collect()
    }

    pub fn idm_params_of(&self, index: usize) -> IdmParams {
        match &self.vehicles[index].control {
            Control::Hdv(d) => d.idm,
            Control::Cav(_) => self.config.cav_idm,
        }
    }

    fn is_ahead(&self, j: usize, ego: usize) -> bool {
        let (a, b) = (&self.vehicles[j].state, &self.vehicles[ego].state);
        a.s > b.s || (a.s == b.s && a.id > b.id)
    }

    /// Footprint overlap, or an HDV lane change into `lane` already under
    /// way. CAV intent stays private so replaying recorded commands
    /// reproduces the traffic exactly.
    fn occupies(&self, index: usize, lane: usize) -> bool {
        let v = &self.vehicles[index];
        let announced = matches!(&v.control, Control::Hdv(d) if d.target_lane == lane && v.status == VehicleStatus::Active);
        announced || self.road.occupies(v.state.y, v.state.width, lane)
    }

    /// Nearest vehicle ahead of `ego` that occupies `lane`.
    pub fn lane_leader(&self, ego: usize, lane: usize) -> Option<usize> {
        let mut best: Option<usize> = None;
        for j in 0..self.vehicles.len() {
            if j == ego || !self.is_ahead(j, ego) || !self.occupies(j, lane) {
                continue;
            }
            if best.is_none_or(|b| self.is_ahead(b, j)) {
                best = Some(j);
            }
        }
        best
    }

    /// Nearest vehicle behind `ego` that occupies `lane`.
    pub fn lane_follower(&self, ego: usize, lane: usize) -> Option<usize> {
        let mut best: Option<usize> = None;
        for j in 0..self.vehicles.len() {
            if j == ego || self.is_ahead(j, ego) || !self.occupies(j, lane) {
                continue;
            }
            if best.is_none_or(|b| self.is_ahead(j, b)) {
                best = Some(j);
            }
        }
        best
    }

    /// Whether some vehicle in `lane` overlaps `ego` longitudinally.
    pub fn lane_blocked_alongside(&self, ego: usize, lane: usize) -> bool {
        let e = &self.vehicles[ego].state;
        (0..self.vehicles.len()).any(|j| {
            j != ego && self.occupies(j, lane) && {
                let o = &self.vehicles[j].state;
                (o.s - e.s).abs() < 0.5 * (o.length + e.length)
            }
        })
    }

    /// Bumper gap from `ego` to its leader in the lane containing its centre.
    pub fn headway(&self, ego: usize) -> Option<(usize, f64)> {
        let lane = self.road.lane_of(self.vehicles[ego].state.y);
        self.lane_leader(ego, lane).map(|l| {
            let gap = self.vehicles[l].state.rear() - self.vehicles[ego].state.front();
            (l, gap)
        })
    }

    /// Other vehicles within `d_vision` longitudinally, nearest first (ties by id).
    pub fn neighbors(&self, id: u32, d_vision: f64) -> Result<Vec<u32>> {
        let ego = self.vehicle(id).ok_or(Error::UnknownVehicle(id))?;
        let s = ego.state.s;
        let mut found: Vec<(f64, u32)> = self
            .vehicles
            .iter()
            .filter(|v| v.state.id != id)
            .map(|v| ((v.state.s - s).abs(), v.state.id))
            .filter(|(d, _)| *d <= d_vision)
            .collect();
        found.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        Ok(found.into_iter().map(|(_, id)| id).collect())
    }

    /// Lowest IDM acceleration over every lane the vehicle occupies or targets.
    fn following_accel(&self, index: usize, target_lane: usize, params: &IdmParams) -> f64 {
        let st = &self.vehicles[index].state;
        let mut lanes: Vec<usize> = (0..self.road.num_lanes).filter(|&l| self.occupies(index, l)).collect();
        if !lanes.contains(&target_lane) {
            lanes.push(target_lane);
        }
        let mut accel = idm_accel(st.v, 0.0, f64::INFINITY, params).unwrap_or(0.0);
        for lane in lanes {
            if let Some(l) = self.lane_leader(index, lane) {
                let lead = &self.vehicles[l].state;
                let gap = lead.rear() - st.front();
                let a = idm_accel(st.v, st.v - lead.v, gap, params).unwrap_or(f64::NEG_INFINITY);
                accel = accel.min(a);
            }
        }
        accel
    }

    fn hdv_update(&self, index: usize) -> Option<HdvUpdate> {
        let vehicle = &self.vehicles[index];
        let Control::Hdv(driver) = &vehicle.control else {
            return None;
        };
        if vehicle.status != VehicleStatus::Active {
            return None;
        }
        let st = &vehicle.state;
        let limits = &self.config.limits;
        let mut update = HdvUpdate {
            index,
            command: ControlCommand::ZERO,
            new_target_lane: None,
            trigger_malfunction: false,
            trigger_cut_in: false,
            stall: false,
        };

        let mut target_lane = driver.target_lane;
        if let HdvBehavior::CutIn {
            target_lane: cut_lane,
            trigger_gap,
            triggered: false,
        } = &driver.behavior
        {
            if !self.prediction_mode && self.cut_in_due(index, *cut_lane, *trigger_gap) {
                update.trigger_cut_in = true;
                target_lane = *cut_lane;
                update.new_target_lane = Some(target_lane);
            }
        }

        let settled = (self.road.lane_center(target_lane) - st.y).abs() < self.config.tracking.settle_tolerance;
        let cooldown_steps = (self.config.lane_change_cooldown * self.config.control_rate_hz).round() as u64;
        let cooled = driver
            .last_lane_change_step
            .is_none_or(|last| self.step_index >= last + cooldown_steps);
        let mobil_due = (self.step_index + st.id as u64).is_multiple_of(self.config.mobil_period_steps);
        if self.config.mobil_enabled && matches!(driver.behavior, HdvBehavior::Normal) && settled && cooled && mobil_due {
            let decision = mobil_decide(st.id, self, &driver.mobil, &driver.idm).unwrap_or(LaneDecision::KeepLane);
            let lane = self.road.lane_of(st.y);
            let next = match decision {
                LaneDecision::KeepLane => None,
                LaneDecision::ChangeLeft => Some(lane - 1),
                LaneDecision::ChangeRight => Some(lane + 1),
            };
            if let Some(next) = next {
                target_lane = next;
                update.new_target_lane = Some(next);
            }
        }

        let mut accel = self.following_accel(index, target_lane, &driver.idm);
        if let HdvBehavior::Oscillating {
            center_speed,
            amplitude,
            period,
            phase,
        } = &driver.behavior
        {
            let reference = center_speed + amplitude * (2.0 * std::f64::consts::PI * self.time / period + phase).sin();
            accel = accel.min(self.config.oscillation_gain * (reference - st.v));
        }

        if let Some(m) = &driver.malfunction {
            let active = match m.triggered_at {
                Some(t0) => m.kind == MalfunctionKind::Stall || self.time < t0 + m.duration,
                None => {
                    let due = !self.prediction_mode && self.time >= m.trigger_time;
                    update.trigger_malfunction = due;
                    due
                }
            };
            if active {
                accel = accel.min(-m.decel);
                if m.kind == MalfunctionKind::Stall && st.v + accel * self.dt() <= 0.0 {
                    update.stall = true;
                }
            }
        }

        let steer = lateral_steer(st, self.road.lane_center(target_lane), &self.config.tracking.gains, limits);
        update.command = limits.clamp(ControlCommand::new(accel, steer));
        Some(update)
    }

    fn cut_in_due(&self, index: usize, lane: usize, trigger_gap: f64) -> bool {
        let me = &self.vehicles[index].state;
        self.lane_follower(index, lane).is_some_and(|f| {
            let other = &self.vehicles[f].state;
            other.in_platoon && me.rear() - other.front() <= trigger_gap
        })
    }

    /// Advances every vehicle by one control period.
    ///
    /// CAVs follow `cav_commands` (one entry per CAV that has not crashed);
    /// HDVs follow IDM/MOBIL with lateral tracking. Returns this step's events.
    pub fn step(&mut self, cav_commands: &BTreeMap<u32, ControlCommand>) -> Result<Vec<WorldEvent>> {
        for id in cav_commands.keys() {
            match self.vehicle(*id) {
                Some(v) if v.state.kind == VehicleKind::Cav => {}
                _ => return Err(Error::UnknownVehicle(*id)),
            }
        }
        for v in &self.vehicles {
            if v.state.kind == VehicleKind::Cav && v.status == VehicleStatus::Active && !cav_commands.contains_key(&v.state.id) {
                return Err(Error::MissingCommand(v.state.id));
            }
        }

        let updates: Vec<HdvUpdate> = (0..self.vehicles.len()).filter_map(|i| self.hdv_update(i)).collect();
        let mut events = Vec::new();
        let dt = self.dt();
        let limits = self.config.limits;

        let mut commands: Vec<Option<ControlCommand>> = vec![None; self.vehicles.len()];
        for u in &updates {
            commands[u.index] = Some(u.command);
        }
        for (i, v) in self.vehicles.iter().enumerate() {
            if v.state.kind == VehicleKind::Cav {
                commands[i] = cav_commands.get(&v.state.id).map(|c| limits.clamp(*c));
            }
        }

        for u in &updates {
            let step_index = self.step_index;
            let time = self.time;
            let vehicle = &mut self.vehicles[u.index];
            let id = vehicle.state.id;
            let from_lane = self.road.lane_of(vehicle.state.y);
            let Control::Hdv(driver) = &mut vehicle.control else {
                continue;
            };
            if let Some(lane) = u.new_target_lane {
                if lane != driver.target_lane {
                    driver.target_lane = lane;
                    driver.last_lane_change_step = Some(step_index);
                    if !u.trigger_cut_in {
                        events.push(WorldEvent::LaneChange { id, from: from_lane, to: lane });
                    }
                }
            }
            if u.trigger_cut_in {
                if let HdvBehavior::CutIn { triggered, target_lane, .. } = &mut driver.behavior {
                    *triggered = true;
                    events.push(WorldEvent::CutIn { id, lane: *target_lane });
                }
            }
            if u.trigger_malfunction {
                if let Some(m) = &mut driver.malfunction {
                    m.triggered_at = Some(time);
                    events.push(WorldEvent::Malfunction { id, kind: m.kind });
                }
            }
        }

        let prev_s: Vec<f64> = self.vehicles.iter().map(|v| v.state.s).collect();
        let road_width = self.road.width();
        for (i, vehicle) in self.vehicles.iter_mut().enumerate() {
            if vehicle.status != VehicleStatus::Active {
                continue;
            }
            let Some(cmd) = commands[i] else { continue };
            let mut next = step_kinematics(&vehicle.state, &cmd, dt)?;
            next.y = next.y.clamp(0.0, road_width);
            next.lane = self.road.lane_of(next.y);
            vehicle.state = next;
        }
        for u in updates.iter().filter(|u| u.stall) {
            let vehicle = &mut self.vehicles[u.index];
            vehicle.state.v = 0.0;
            vehicle.state.a = 0.0;
            vehicle.status = VehicleStatus::Stalled;
            events.push(WorldEvent::Halted { id: vehicle.state.id });
        }

        self.step_index += 1;
        self.time = self.step_index as f64 / self.config.control_rate_hz;

        // Twin worlds let vehicles pass through each other so that predicted
        // gaps keep measuring how deep a conflict would go.
        let pairs = if self.prediction_mode { Vec::new() } else { detect_collisions(self) };
        for pair in pairs {
            let key = (pair.a.min(pair.b), pair.a.max(pair.b));
            if !self.collided_pairs.insert(key) {
                continue;
            }
            for id in [pair.a, pair.b] {
                if let Some(v) = self.vehicle_mut(id) {
                    v.status = VehicleStatus::Crashed;
                    v.state.v = 0.0;
                    v.state.a = 0.0;
                }
            }
            events.push(WorldEvent::Collision {
                a: key.0,
                b: key.1,
                distance: pair.distance,
            });
        }

        let (zone_start, zone_end) = (self.road.zone_start(), self.road.zone_end());
        for (v, before) in self.vehicles.iter().zip(&prev_s) {
            let now = v.state.s;
            if *before < zone_start && now >= zone_start {
                events.push(WorldEvent::ZoneEnter { id: v.state.id });
            }
            if *before < zone_end && now >= zone_end {
                events.push(WorldEvent::ZoneExit { id: v.state.id });
            }
        }

        let length = self.road.length;
        self.vehicles
            .retain(|v| v.state.kind == VehicleKind::Cav || v.state.rear() <= length);

        debug_assert!(self.vehicles.iter().all(|v| v.state.y >= 0.0 && v.state.y <= road_width));
        self.events = events.clone();
        Ok(events)
    }

    /// Whether the pair was already recorded as collided.
    pub fn has_collided(&self, a: u32, b: u32) -> bool {
        self.collided_pairs.contains(&(a.min(b), a.max(b)))
    }

    /// Re-anchors a CAV's tracker on its current motion.
    pub fn reset_tracker(&mut self, id: u32) {
        let road = self.road.clone();
        if let Some(v) = self.vehicle_mut(id) {
            let state = v.state.clone();
            if let Some(t) = v.tracker_mut() {
                t.reset_to(&state, &road);
            }
        }
    }
}
