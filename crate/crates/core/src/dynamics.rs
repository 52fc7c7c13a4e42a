//! Vehicle state and kinematic bicycle integration.
//!
//! Positions are road-aligned: `s` runs along the road, `y` runs across it
//! from the left edge, so lane 0 is the leftmost lane. Heading is measured
//! from the `+s` axis towards `+y`; positive steering therefore turns right.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Wheelbase as a fraction of vehicle length.
pub const WHEELBASE_RATIO: f64 = 0.6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum VehicleKind {
    Cav,
    Hdv,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VehicleState {
    pub id: u32,
    pub lane: usize,
    pub s: f64,
    pub y: f64,
    pub heading: f64,
    pub v: f64,
    pub a: f64,
    pub length: f64,
    pub width: f64,
    pub kind: VehicleKind,
    pub in_platoon: bool,
}

impl VehicleState {
    pub fn wheelbase(&self) -> f64 {
        WHEELBASE_RATIO * self.length
    }

    /// Collision circle radius: half the vehicle length.
    pub fn radius(&self) -> f64 {
        0.5 * self.length
    }

    pub fn front(&self) -> f64 {
        self.s + 0.5 * self.length
    }

    pub fn rear(&self) -> f64 {
        self.s - 0.5 * self.length
    }

    pub fn vx(&self) -> f64 {
        self.v * self.heading.cos()
    }

    pub fn vy(&self) -> f64 {
        self.v * self.heading.sin()
    }

    fn check_finite(&self) -> Result<()> {
        let fields = [
            ("s", self.s),
            ("y", self.y),
            ("heading", self.heading),
            ("v", self.v),
            ("a", self.a),
            ("length", self.length),
            ("width", self.width),
        ];
        for (name, value) in fields {
            if !value.is_finite() {
                return Err(Error::invalid(format!("vehicle {}: {name} is {value}", self.id)));
            }
        }
        if self.length <= 0.0 || self.width <= 0.0 {
            return Err(Error::invalid(format!("vehicle {}: non-positive size", self.id)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ControlCommand {
    pub throttle_accel: f64,
    pub steer: f64,
}

impl ControlCommand {
    pub const ZERO: ControlCommand = ControlCommand {
        throttle_accel: 0.0,
        steer: 0.0,
    };

    pub fn new(throttle_accel: f64, steer: f64) -> Self {
        Self {
            throttle_accel,
            steer,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ActuatorLimits {
    pub accel_min: f64,
    pub accel_max: f64,
    pub steer_max: f64,
}

impl Default for ActuatorLimits {
    fn default() -> Self {
        Self {
            accel_min: -5.0,
            accel_max: 3.0,
            steer_max: 0.3,
        }
    }
}

impl ActuatorLimits {
    pub fn clamp(&self, cmd: ControlCommand) -> ControlCommand {
        ControlCommand {
            throttle_accel: cmd.throttle_accel.clamp(self.accel_min, self.accel_max),
            steer: cmd.steer.clamp(-self.steer_max, self.steer_max),
        }
    }

    pub fn clamp_accel(&self, accel: f64) -> f64 {
        accel.clamp(self.accel_min, self.accel_max)
    }
}

/// Wraps an angle into `(-pi, pi]`.
pub fn normalize_angle(angle: f64) -> f64 {
    let mut a = angle % (2.0 * PI);
    if a <= -PI {
        a += 2.0 * PI;
    } else if a > PI {
        a -= 2.0 * PI;
    }
    a
}

/// Advances one vehicle by `dt` under the kinematic bicycle model.
///
/// Speed and steering are held constant over the step; the path length is
/// integrated exactly for constant acceleration (stopping at zero speed
/// instead of reversing) and the pose follows the resulting circular arc.
pub fn step_kinematics(state: &VehicleState, cmd: &ControlCommand, dt: f64) -> Result<VehicleState> {
    if !(dt.is_finite() && dt > 0.0) {
        return Err(Error::invalid(format!("dt must be positive and finite, got {dt}")));
    }
    state.check_finite()?;
    if !cmd.throttle_accel.is_finite() || !cmd.steer.is_finite() {
        return Err(Error::invalid(format!("vehicle {}: non-finite command {cmd:?}", state.id)));
    }

    let accel = cmd.throttle_accel;
    let v0 = state.v.max(0.0);
    let (dist, v1) = if accel < 0.0 && v0 + accel * dt < 0.0 {
        let t_stop = v0 / -accel;
        (0.5 * v0 * t_stop, 0.0)
    } else {
        (v0 * dt + 0.5 * accel * dt * dt, v0 + accel * dt)
    };

    let curvature = cmd.steer.tan() / state.wheelbase();
    let dtheta = curvature * dist;
    let theta = state.heading;
    let (ds, dy) = if dtheta.abs() < 1e-9 {
        let mid = theta + 0.5 * dtheta;
        (dist * mid.cos(), dist * mid.sin())
    } else {
        (
            ((theta + dtheta).sin() - theta.sin()) / curvature,
            (theta.cos() - (theta + dtheta).cos()) / curvature,
        )
    };

    let mut next = state.clone();
    next.s += ds;
    next.y += dy;
    next.heading = normalize_angle(theta + dtheta);
    next.v = v1;
    next.a = accel;
    Ok(next)
}
