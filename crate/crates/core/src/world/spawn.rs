//! Initial traffic placement and the disturbance scenario generators.

use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Control, HdvBehavior, HdvDriver, Malfunction, MalfunctionKind, RoadSpec, Vehicle, VehicleStatus, WorldConfig, WorldState};
use crate::driver::{DriverStyle, IdmParams, MobilParams};
use crate::dynamics::{VehicleKind, VehicleState};
use crate::error::{Error, Result};
use crate::tracking::TrackingController;

const MAX_ATTEMPTS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioKind {
    Plain,
    HumanInterference,
    TrafficAccidents,
    FlowOscillation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlatoonConfig {
    pub size: usize,
    pub lane: usize,
    /// Longitudinal position of the lead vehicle's centre, m.
    pub lead_s: f64,
    /// Initial bumper gap between consecutive members, m.
    pub initial_headway: f64,
    pub speed: f64,
    pub vehicle_length: f64,
    pub vehicle_width: f64,
}

impl Default for PlatoonConfig {
    fn default() -> Self {
        Self {
            size: 3,
            lane: 1,
            lead_s: 80.0,
            initial_headway: 10.0,
            speed: 28.0,
            vehicle_length: 3.4,
            vehicle_width: 1.7,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpawnConfig {
    pub hdv_count_range: [usize; 2],
    /// Refresh points along the road; each HDV appears at one of them plus a jitter.
    pub spawn_points: Vec<f64>,
    pub spawn_jitter: f64,
    /// Weights over (aggressive, neutral, conservative).
    pub style_mixture: [f64; 3],
    pub malfunction_rate: f64,
    pub speed_range: [f64; 2],
    pub base_idm: IdmParams,
    pub base_mobil: MobilParams,
    pub vehicle_length: f64,
    pub vehicle_width: f64,
    /// Extra same-lane spacing at spawn, as a time headway of the follower, s.
    pub spawn_time_gap: f64,
    /// Deceleration used to size spawn gaps behind slower vehicles, m/s^2.
    pub spawn_brake: f64,
    /// Window in which latent malfunctions trigger, s.
    pub malfunction_window: [f64; 2],
}

impl Default for SpawnConfig {
    fn default() -> Self {
        Self {
            hdv_count_range: [4, 10],
            spawn_points: vec![0.0, 150.0, 300.0, 450.0, 600.0, 750.0],
            spawn_jitter: 120.0,
            style_mixture: [1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0],
            malfunction_rate: 0.05,
            speed_range: [20.0, 28.0],
            base_idm: IdmParams::default(),
            base_mobil: MobilParams::default(),
            vehicle_length: 3.4,
            vehicle_width: 1.7,
            spawn_time_gap: 1.0,
            spawn_brake: 4.0,
            malfunction_window: [3.0, 35.0],
        }
    }
}

impl SpawnConfig {
    pub fn validate(&self) -> Result<()> {
        let [lo, hi] = self.hdv_count_range;
        if lo > hi {
            return Err(Error::config("spawn.hdv_count_range", "min exceeds max"));
        }
        if hi > 0 && self.spawn_points.is_empty() {
            return Err(Error::config("spawn.spawn_points", "need at least one refresh point"));
        }
        let sum: f64 = self.style_mixture.iter().sum();
        if (sum - 1.0).abs() > 1e-9 || self.style_mixture.iter().any(|w| *w < 0.0) {
            return Err(Error::config("spawn.style_mixture", "weights must be non-negative and sum to 1"));
        }
        if !(0.0..=1.0).contains(&self.malfunction_rate) {
            return Err(Error::config("spawn.malfunction_rate", "must lie in [0, 1]"));
        }
        let [vmin, vmax] = self.speed_range;
        if !(0.0 < vmin && vmin <= vmax) {
            return Err(Error::config("spawn.speed_range", "expected 0 < min <= max"));
        }
        if !(self.spawn_jitter >= 0.0) {
            return Err(Error::config("spawn.spawn_jitter", "must be non-negative"));
        }
        self.base_idm.validate()?;
        self.base_mobil.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub kind: ScenarioKind,
    /// Human interference: cut-in vehicle speed range, m/s.
    pub cut_in_speed: [f64; 2],
    /// Human interference: distance ahead of the platoon lead at spawn, m.
    pub cut_in_ahead: [f64; 2],
    /// Human interference: bumper gap that triggers the cut-in, m.
    pub cut_in_gap: [f64; 2],
    /// Traffic accidents: probability that the wreck also blocks an adjacent lane.
    pub wreck_two_lane_prob: f64,
    /// Flow oscillation: leader distance ahead of the platoon lead, m.
    pub oscillation_ahead: [f64; 2],
    pub oscillation_center: [f64; 2],
    pub oscillation_amplitude: f64,
    pub oscillation_period: [f64; 2],
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            kind: ScenarioKind::Plain,
            cut_in_speed: [21.0, 25.0],
            cut_in_ahead: [60.0, 120.0],
            cut_in_gap: [6.0, 14.0],
            wreck_two_lane_prob: 0.5,
            oscillation_ahead: [50.0, 80.0],
            oscillation_center: [22.0, 26.0],
            oscillation_amplitude: 3.0,
            oscillation_period: [8.0, 15.0],
        }
    }
}

/// Everything needed to build the initial world of an episode.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrafficSetup {
    pub road: RoadSpec,
    pub world: WorldConfig,
    pub platoon: PlatoonConfig,
    pub spawn: SpawnConfig,
    pub scenario: ScenarioConfig,
}

impl TrafficSetup {
    pub fn validate(&self) -> Result<()> {
        self.road.validate()?;
        self.world.validate()?;
        self.spawn.validate()?;
        if self.platoon.size == 0 {
            return Err(Error::config("platoon.size", "platoon must have at least one vehicle"));
        }
        if self.platoon.lane >= self.road.num_lanes {
            return Err(Error::config("platoon.lane", "lane index outside the road"));
        }
        Ok(())
    }
}

fn uniform(rng: &mut ChaCha8Rng, range: [f64; 2]) -> f64 {
    if range[1] > range[0] {
        rng.gen_range(range[0]..range[1])
    } else {
        range[0]
    }
}

struct Placer<'a> {
    road: &'a RoadSpec,
    spawn: &'a SpawnConfig,
}

impl Placer<'_> {
    /// Minimum bumper gap a follower at `v_follow` needs behind a leader at `v_lead`.
    fn required_gap(&self, v_follow: f64, v_lead: f64) -> f64 {
        let closing = (v_follow - v_lead).max(0.0);
        self.spawn.base_idm.s0 + self.spawn.spawn_time_gap * v_follow + closing * closing / (2.0 * self.spawn.spawn_brake)
    }

    fn fits(&self, world: &WorldState, cand: &VehicleState) -> bool {
        world.vehicles.iter().all(|v| {
            let o = &v.state;
            let shares_lane = (0..self.road.num_lanes)
                .any(|l| self.road.occupies(o.y, o.width, l) && self.road.occupies(cand.y, cand.width, l));
            let dist = (o.s - cand.s).hypot(o.y - cand.y);
            if dist < o.radius() + cand.radius() + self.spawn.base_idm.s0.min(1.0) {
                return false;
            }
            if !shares_lane {
                return true;
            }
            let (follow, lead) = if o.s <= cand.s { (o, cand) } else { (cand, o) };
            let gap = lead.rear() - follow.front();
            gap >= self.required_gap(follow.v, lead.v)
        })
    }
}

fn hdv(id: u32, lane: usize, s: f64, v: f64, road: &RoadSpec, spawn: &SpawnConfig, driver: HdvDriver) -> Vehicle {
    Vehicle {
        state: VehicleState {
            id,
            lane,
            s,
            y: road.lane_center(lane),
            heading: 0.0,
            v,
            a: 0.0,
            length: spawn.vehicle_length,
            width: spawn.vehicle_width,
            kind: VehicleKind::Hdv,
            in_platoon: false,
        },
        status: VehicleStatus::Active,
        control: Control::Hdv(driver),
    }
}

fn driver_for(rng: &mut ChaCha8Rng, spawn: &SpawnConfig, lane: usize, v0: f64, behavior: HdvBehavior) -> HdvDriver {
    let styles = WeightedIndex::new(spawn.style_mixture).expect("validated weights");
    let style = DriverStyle::ALL[styles.sample(rng)];
    let (mut idm, mobil) = style.apply(&spawn.base_idm, &spawn.base_mobil);
    idm.v0 = v0;
    let malfunction = if rng.gen_bool(spawn.malfunction_rate) {
        let kind = if rng.gen_bool(0.5) {
            MalfunctionKind::Stall
        } else {
            MalfunctionKind::Brake
        };
        Some(Malfunction {
            kind,
            trigger_time: uniform(rng, spawn.malfunction_window),
            decel: rng.gen_range(3.0..5.0),
            duration: rng.gen_range(1.0..3.0),
            triggered_at: None,
        })
    } else {
        None
    };
    HdvDriver {
        idm,
        mobil,
        style,
        target_lane: lane,
        last_lane_change_step: None,
        behavior,
        malfunction,
    }
}

fn place(
    world: &mut WorldState,
    placer: &Placer,
    mut candidate: impl FnMut(&mut ChaCha8Rng) -> Vehicle,
) -> Result<()> {
    for _ in 0..MAX_ATTEMPTS {
        let vehicle = candidate(&mut world.rng);
        if placer.fits(world, &vehicle.state) {
            return world.insert(vehicle);
        }
    }
    Err(Error::InfeasibleDensity { attempts: MAX_ATTEMPTS })
}

/// Builds the initial world for `seed`. Returns the world and the platoon ids
/// ordered front to back.
pub fn spawn_traffic(setup: &TrafficSetup, seed: u64) -> Result<(WorldState, Vec<u32>)> {
    setup.validate()?;
    let road = &setup.road;
    let spawn = &setup.spawn;
    let pc = &setup.platoon;
    let mut world = WorldState::new(road.clone(), setup.world.clone(), ChaCha8Rng::seed_from_u64(seed));
    let placer = Placer { road, spawn };

    let mut platoon_ids = Vec::with_capacity(pc.size);
    for k in 0..pc.size {
        let id = k as u32;
        let s = pc.lead_s - k as f64 * (pc.vehicle_length + pc.initial_headway);
        world.insert(Vehicle {
            state: VehicleState {
                id,
                lane: pc.lane,
                s,
                y: road.lane_center(pc.lane),
                heading: 0.0,
                v: pc.speed,
                a: 0.0,
                length: pc.vehicle_length,
                width: pc.vehicle_width,
                kind: VehicleKind::Cav,
                in_platoon: true,
            },
            status: VehicleStatus::Active,
            control: Control::Cav(TrackingController::new(pc.speed, pc.lane)),
        })?;
        platoon_ids.push(id);
    }
    let mut next_id = pc.size as u32;
    let sc = &setup.scenario;

    match sc.kind {
        ScenarioKind::Plain => {}
        ScenarioKind::TrafficAccidents => {
            let s = uniform(&mut world.rng, [road.zone_start() + 50.0, road.zone_end() - 50.0]);
            let mut lanes = vec![pc.lane];
            if world.rng.gen_bool(sc.wreck_two_lane_prob) {
                let mut adjacent = Vec::new();
                if pc.lane > 0 {
                    adjacent.push(pc.lane - 1);
                }
                if pc.lane + 1 < road.num_lanes {
                    adjacent.push(pc.lane + 1);
                }
                if !adjacent.is_empty() {
                    lanes.push(adjacent[world.rng.gen_range(0..adjacent.len())]);
                }
            }
            for (k, lane) in lanes.into_iter().enumerate() {
                let offset = if k == 0 { 0.0 } else { world.rng.gen_range(-4.0..4.0) };
                let driver = driver_for(&mut world.rng, spawn, lane, spawn.base_idm.v0, HdvBehavior::Normal);
                let mut wreck = hdv(next_id, lane, s + offset, 0.0, road, spawn, HdvDriver { malfunction: None, ..driver });
                wreck.status = VehicleStatus::Stalled;
                world.insert(wreck)?;
                next_id += 1;
            }
        }
        ScenarioKind::HumanInterference => {
            let side: Vec<usize> = [pc.lane.wrapping_sub(1), pc.lane + 1]
                .into_iter()
                .filter(|l| *l < road.num_lanes)
                .collect();
            let id = next_id;
            next_id += 1;
            place(&mut world, &placer, |rng| {
                let lane = side[rng.gen_range(0..side.len())];
                let v = uniform(rng, sc.cut_in_speed);
                let s = pc.lead_s + uniform(rng, sc.cut_in_ahead);
                let behavior = HdvBehavior::CutIn {
                    target_lane: pc.lane,
                    trigger_gap: uniform(rng, sc.cut_in_gap),
                    triggered: false,
                };
                let driver = driver_for(rng, spawn, lane, v, behavior);
                hdv(id, lane, s, v, road, spawn, HdvDriver { malfunction: None, ..driver })
            })?;
        }
        ScenarioKind::FlowOscillation => {
            let id = next_id;
            next_id += 1;
            place(&mut world, &placer, |rng| {
                let center = uniform(rng, sc.oscillation_center);
                let behavior = HdvBehavior::Oscillating {
                    center_speed: center,
                    amplitude: sc.oscillation_amplitude,
                    period: uniform(rng, sc.oscillation_period),
                    phase: rng.gen_range(0.0..std::f64::consts::TAU),
                };
                let s = pc.lead_s + uniform(rng, sc.oscillation_ahead);
                let driver = driver_for(rng, spawn, pc.lane, center + sc.oscillation_amplitude, behavior);
                hdv(id, pc.lane, s, center, road, spawn, HdvDriver { malfunction: None, ..driver })
            })?;
        }
    }

    let [lo, hi] = spawn.hdv_count_range;
    let count = if hi > lo { world.rng.gen_range(lo..=hi) } else { lo };
    for _ in 0..count {
        let id = next_id;
        next_id += 1;
        place(&mut world, &placer, |rng| {
            let point = spawn.spawn_points[rng.gen_range(0..spawn.spawn_points.len())];
            let s = point + rng.gen_range(0.0..=spawn.spawn_jitter);
            let lane = rng.gen_range(0..road.num_lanes);
            let v = uniform(rng, spawn.speed_range);
            let driver = driver_for(rng, spawn, lane, v, HdvBehavior::Normal);
            hdv(id, lane, s.min(road.length - 50.0), v, road, spawn, driver)
        })?;
    }

    Ok((world, platoon_ids))
}
