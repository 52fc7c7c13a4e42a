//! Low-level tracking layer turning high-level actions into actuator commands.
//!
//! Longitudinal control is a PID loop on speed error. Lateral control is a
//! two-stage cascade: lateral offset to the target lane centre sets a
//! reference heading (through a commanded lateral speed), and heading error
//! sets a yaw rate which is converted into a bicycle steering angle.

use serde::{Deserialize, Serialize};

use crate::dynamics::{ActuatorLimits, ControlCommand, VehicleState};
use crate::env::action::HighLevelAction;
use crate::world::road::RoadSpec;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PidGains {
    pub speed_kp: f64,
    pub speed_ki: f64,
    pub speed_kd: f64,
    /// Commanded lateral speed per metre of lateral error, 1/s.
    pub lateral_kp: f64,
    /// Commanded yaw rate per radian of heading error, 1/s.
    pub heading_kp: f64,
    /// Cap on the reference heading during a lane change, rad.
    pub max_heading: f64,
}

impl Default for PidGains {
    fn default() -> Self {
        Self {
            speed_kp: 0.6,
            speed_ki: 0.05,
            speed_kd: 0.0,
            lateral_kp: 1.0,
            heading_kp: 3.0,
            max_heading: 0.4,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrackingConfig {
    pub gains: PidGains,
    /// Target speed change applied by one FASTER / SLOWER decision, m/s.
    pub speed_step: f64,
    pub v_max: f64,
    /// A lane change may start only once the lateral error is below this, m.
    pub settle_tolerance: f64,
    pub integral_limit: f64,
}

impl Default for TrackingConfig {
    fn default() -> Self {
        Self {
            gains: PidGains::default(),
            speed_step: 2.0,
            v_max: 30.0,
            settle_tolerance: 0.5,
            integral_limit: 10.0,
        }
    }
}

/// Per-vehicle tracking state: current targets plus PID memory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackingController {
    pub target_speed: f64,
    pub target_lane: usize,
    speed_integral: f64,
    prev_speed_error: Option<f64>,
}

impl TrackingController {
    pub fn new(target_speed: f64, target_lane: usize) -> Self {
        Self {
            target_speed,
            target_lane,
            speed_integral: 0.0,
            prev_speed_error: None,
        }
    }

    /// Re-anchors the targets on the vehicle's present motion.
    pub fn reset_to(&mut self, state: &VehicleState, road: &RoadSpec) {
        self.target_speed = state.v;
        self.target_lane = road.lane_of(state.y);
        self.speed_integral = 0.0;
        self.prev_speed_error = None;
    }

    pub fn lane_change_in_progress(&self, state: &VehicleState, road: &RoadSpec, cfg: &TrackingConfig) -> bool {
        (road.lane_center(self.target_lane) - state.y).abs() >= cfg.settle_tolerance
    }

    /// Folds a high-level decision into the persistent targets.
    pub fn apply_action(&mut self, action: HighLevelAction, state: &VehicleState, road: &RoadSpec, cfg: &TrackingConfig) {
        match action {
            HighLevelAction::Idle => {}
            HighLevelAction::Faster => {
                self.target_speed = (self.target_speed + cfg.speed_step).min(cfg.v_max);
            }
            HighLevelAction::Slower => {
                self.target_speed = (self.target_speed - cfg.speed_step).max(0.0);
            }
            HighLevelAction::LaneLeft | HighLevelAction::LaneRight => {
                if self.lane_change_in_progress(state, road, cfg) {
                    return;
                }
                let lane = self.target_lane;
                self.target_lane = match action {
                    HighLevelAction::LaneLeft => lane.saturating_sub(1),
                    _ => (lane + 1).min(road.num_lanes - 1),
                };
            }
        }
    }

    /// Speed loop only.
    pub fn speed_command(&mut self, state: &VehicleState, cfg: &TrackingConfig, limits: &ActuatorLimits, dt: f64) -> f64 {
        let g = &cfg.gains;
        let error = self.target_speed - state.v;
        let derivative = match self.prev_speed_error {
            Some(prev) if g.speed_kd != 0.0 => (error - prev) / dt,
            _ => 0.0,
        };
        self.prev_speed_error = Some(error);

        let candidate_integral = (self.speed_integral + error * dt).clamp(-cfg.integral_limit, cfg.integral_limit);
        let raw = g.speed_kp * error + g.speed_ki * candidate_integral + g.speed_kd * derivative;
        let clamped = limits.clamp_accel(raw);
        // Conditional integration: freeze the integrator while saturated.
        if clamped == raw || raw.signum() != error.signum() {
            self.speed_integral = candidate_integral;
        }
        clamped
    }

    pub fn steer_command(&self, state: &VehicleState, road: &RoadSpec, cfg: &TrackingConfig, limits: &ActuatorLimits) -> f64 {
        lateral_steer(state, road.lane_center(self.target_lane), &cfg.gains, limits)
    }

    /// Applies `action`, then tracks the updated targets.
    pub fn pid_track(
        &mut self,
        action: HighLevelAction,
        state: &VehicleState,
        road: &RoadSpec,
        cfg: &TrackingConfig,
        limits: &ActuatorLimits,
        dt: f64,
    ) -> ControlCommand {
        self.apply_action(action, state, road, cfg);
        self.track(state, road, cfg, limits, dt)
    }

    pub fn track(&mut self, state: &VehicleState, road: &RoadSpec, cfg: &TrackingConfig, limits: &ActuatorLimits, dt: f64) -> ControlCommand {
        let throttle_accel = self.speed_command(state, cfg, limits, dt);
        let steer = self.steer_command(state, road, cfg, limits);
        ControlCommand { throttle_accel, steer }
    }
}

/// Steering angle that drives the vehicle towards lateral position `y_target`.
pub fn lateral_steer(state: &VehicleState, y_target: f64, gains: &PidGains, limits: &ActuatorLimits) -> f64 {
    let v = state.v.max(1.0);
    let lateral_speed = gains.lateral_kp * (y_target - state.y);
    let heading_ref = (lateral_speed / v)
        .clamp(-1.0, 1.0)
        .asin()
        .clamp(-gains.max_heading, gains.max_heading);
    let yaw_rate = gains.heading_kp * (heading_ref - state.heading);
    let steer = (state.wheelbase() * yaw_rate / v).atan();
    steer.clamp(-limits.steer_max, limits.steer_max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{step_kinematics, VehicleKind};
    use proptest::prelude::*;

    const DT: f64 = 1.0 / 15.0;

    fn car(v: f64, y: f64) -> VehicleState {
        VehicleState {
            id: 7,
            lane: 1,
            s: 0.0,
            y,
            heading: 0.0,
            v,
            a: 0.0,
            length: 3.4,
            width: 1.7,
            kind: VehicleKind::Cav,
            in_platoon: true,
        }
    }

    #[test]
    fn zero_error_gives_zero_command() {
        let road = RoadSpec::default();
        let mut ctl = TrackingController::new(25.0, 1);
        let cmd = ctl.pid_track(
            HighLevelAction::Idle,
            &car(25.0, road.lane_center(1)),
            &road,
            &TrackingConfig::default(),
            &ActuatorLimits::default(),
            DT,
        );
        assert_eq!(cmd, ControlCommand::ZERO);
    }

    #[test]
    fn speed_deficit_accelerates() {
        let road = RoadSpec::default();
        let mut ctl = TrackingController::new(30.0, 1);
        let cmd = ctl.track(&car(25.0, 6.0), &road, &TrackingConfig::default(), &ActuatorLimits::default(), DT);
        assert!(cmd.throttle_accel > 0.0);
    }

    #[test]
    fn actions_move_targets() {
        let road = RoadSpec::default();
        let cfg = TrackingConfig::default();
        let state = car(25.0, road.lane_center(1));
        let mut ctl = TrackingController::new(25.0, 1);
        ctl.apply_action(HighLevelAction::Faster, &state, &road, &cfg);
        assert_eq!(ctl.target_speed, 27.0);
        ctl.apply_action(HighLevelAction::LaneLeft, &state, &road, &cfg);
        assert_eq!(ctl.target_lane, 0);
        // Still centred in lane 1, so the change is now in progress and a second request is ignored.
        ctl.apply_action(HighLevelAction::LaneRight, &state, &road, &cfg);
        assert_eq!(ctl.target_lane, 0);

        let mut edge = TrackingController::new(25.0, 0);
        let at_left = car(25.0, road.lane_center(0));
        edge.apply_action(HighLevelAction::LaneLeft, &at_left, &road, &cfg);
        assert_eq!(edge.target_lane, 0);
    }

    /// Linearising the cascade around straight driving gives
    /// `e'' + k_h e' + k_h k_y e = 0`; its underdamped step response fixes
    /// the expected overshoot and a settling-time bound.
    fn second_order_oracle(g: &PidGains) -> (f64, f64) {
        let wn = (g.heading_kp * g.lateral_kp).sqrt();
        let zeta = g.heading_kp / (2.0 * wn);
        let overshoot = if zeta < 1.0 {
            (-std::f64::consts::PI * zeta / (1.0 - zeta * zeta).sqrt()).exp()
        } else {
            0.0
        };
        (overshoot, 4.0 / (zeta * wn).max(1e-9))
    }

    #[test]
    fn lane_step_response_settles_without_large_overshoot() {
        let road = RoadSpec::default();
        let cfg = TrackingConfig::default();
        let limits = ActuatorLimits::default();
        let (oracle_overshoot, oracle_settle) = second_order_oracle(&cfg.gains);
        let settling_time = 5.0;
        assert!(oracle_overshoot < 0.2 && oracle_settle <= settling_time);

        for v in [15.0, 22.0, 28.0] {
            let mut state = car(v, road.lane_center(1));
            let mut ctl = TrackingController::new(v, 2);
            let target = road.lane_center(2);
            let mut max_y = state.y;
            let mut settled_at = None;
            for k in 0..(15 * 12) {
                let cmd = ctl.track(&state, &road, &cfg, &limits, DT);
                state = step_kinematics(&state, &cmd, DT).unwrap();
                max_y = max_y.max(state.y);
                let err = (target - state.y).abs();
                if err > 0.02 * road.lane_width {
                    settled_at = None;
                } else if settled_at.is_none() {
                    settled_at = Some(k as f64 * DT);
                }
            }
            let overshoot = (max_y - target).max(0.0);
            assert!(overshoot < 0.2 * road.lane_width, "v={v}: overshoot {overshoot}");
            assert!(
                overshoot <= (oracle_overshoot + 0.05) * road.lane_width,
                "v={v}: overshoot {overshoot} far above linear prediction"
            );
            let t = settled_at.expect("never settled");
            assert!(t <= settling_time, "v={v}: settled at {t}");
        }
    }

    proptest! {
        #[test]
        fn lane_tracking_stays_on_road(
            lane in 0usize..3,
            target in 0usize..3,
            v in 5.0f64..30.0,
            offset in -1.5f64..1.5,
        ) {
            let road = RoadSpec::default();
            let cfg = TrackingConfig::default();
            let limits = ActuatorLimits::default();
            let mut state = car(v, road.lane_center(lane) + offset);
            let mut ctl = TrackingController::new(v, target);
            for _ in 0..300 {
                let cmd = ctl.track(&state, &road, &cfg, &limits, DT);
                prop_assert!(cmd.steer.abs() <= limits.steer_max);
                state = step_kinematics(&state, &cmd, DT).unwrap();
                prop_assert!(state.y >= 0.0 && state.y <= road.width(), "y = {}", state.y);
            }
        }
    }
}
