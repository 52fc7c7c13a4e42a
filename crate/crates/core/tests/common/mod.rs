//! World builders shared by the integration tests.
#![allow(dead_code)]

use platoon_core::driver::{DriverStyle, IdmParams, MobilParams};
use platoon_core::dynamics::{VehicleKind, VehicleState};
use platoon_core::tracking::TrackingController;
use platoon_core::world::{Control, HdvBehavior, HdvDriver, RoadSpec, Vehicle, VehicleStatus, WorldConfig, WorldState};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn bare_world() -> WorldState {
    WorldState::new(RoadSpec::default(), WorldConfig::default(), ChaCha8Rng::seed_from_u64(0))
}

fn state(id: u32, lane: usize, s: f64, v: f64, kind: VehicleKind) -> VehicleState {
    VehicleState {
        id,
        lane,
        s,
        y: RoadSpec::default().lane_center(lane),
        heading: 0.0,
        v,
        a: 0.0,
        length: 3.4,
        width: 1.7,
        kind,
        in_platoon: kind == VehicleKind::Cav,
    }
}

pub fn cav(id: u32, lane: usize, s: f64, v: f64) -> Vehicle {
    Vehicle {
        state: state(id, lane, s, v, VehicleKind::Cav),
        status: VehicleStatus::Active,
        control: Control::Cav(TrackingController::new(v, lane)),
    }
}

/// Neutral IDM/MOBIL driver whose desired speed is `v`.
pub fn hdv(id: u32, lane: usize, s: f64, v: f64) -> Vehicle {
    Vehicle {
        state: state(id, lane, s, v, VehicleKind::Hdv),
        status: VehicleStatus::Active,
        control: Control::Hdv(HdvDriver {
            idm: IdmParams {
                v0: v.max(1.0),
                ..IdmParams::default()
            },
            mobil: MobilParams::default(),
            style: DriverStyle::Neutral,
            target_lane: lane,
            last_lane_change_step: None,
            behavior: HdvBehavior::Normal,
            malfunction: None,
        }),
    }
}

pub fn wreck(id: u32, lane: usize, s: f64) -> Vehicle {
    Vehicle {
        status: VehicleStatus::Stalled,
        ..hdv(id, lane, s, 0.0)
    }
}

pub fn world_with(vehicles: impl IntoIterator<Item = Vehicle>) -> WorldState {
    let mut world = bare_world();
    for v in vehicles {
        world.insert(v).expect("unique ids");
    }
    world
}

/// `configs/<name>` at the workspace root.
pub fn config_path(name: &str) -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)
}
