//! Differential-drive kinematics and the wheel-speed servo response.
//!
//! Each wheel's closed speed loop is modelled as a unit-gain, underdamped
//! second-order system
//!
//! ```text
//! y'' + 2 zeta wn y' + wn^2 y = wn^2 target
//! ```
//!
//! with `(zeta, wn)` fitted to a measured step response: 40 % overshoot
//! (peak 0.7 for a 0.5 step) at a peak time of 2.4 s.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::geom2d::normalize_angle;

/// Largest physics step accepted by the integrators.
pub const MAX_DT: f64 = 0.05;

/// Turn rates below this are integrated as straight lines.
const STRAIGHT_OMEGA: f64 = 1e-9;

/// Peak overshoot fraction of the reference step response.
pub const REFERENCE_OVERSHOOT: f64 = (0.7 - 0.5) / 0.5;
/// Peak time of the reference step response, seconds.
pub const REFERENCE_PEAK_TIME: f64 = 2.4;

/// Damping ratio giving overshoot `mp`: `zeta = -ln(mp) / sqrt(pi^2 + ln^2(mp))`.
pub fn damping_for_overshoot(mp: f64) -> f64 {
    let l = mp.ln();
    -l / (PI * PI + l * l).sqrt()
}

/// Natural frequency giving peak time `tp` at damping `zeta`: `wn = (pi / tp) / sqrt(1 - zeta^2)`.
pub fn natural_frequency_for_peak(tp: f64, zeta: f64) -> f64 {
    (PI / tp) / (1.0 - zeta * zeta).sqrt()
}

/// Peak overshoot fraction of an underdamped unit step.
pub fn overshoot_for_damping(zeta: f64) -> f64 {
    (-zeta * PI / (1.0 - zeta * zeta).sqrt()).exp()
}

/// `(zeta, wn)` fitted to the reference step response.
pub fn reference_motor_fit() -> (f64, f64) {
    let zeta = damping_for_overshoot(REFERENCE_OVERSHOOT);
    (zeta, natural_frequency_for_peak(REFERENCE_PEAK_TIME, zeta))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VehicleParams {
    /// Track width between the drive wheels, m.
    pub wheel_base: f64,
    /// Collision circle radius, m.
    pub body_radius: f64,
    /// m/s
    pub max_wheel_speed: f64,
    pub motor_zeta: f64,
    /// rad/s
    pub motor_omega_n: f64,
}

impl Default for VehicleParams {
    fn default() -> Self {
        let (zeta, wn) = reference_motor_fit();
        VehicleParams {
            wheel_base: 0.5,
            body_radius: 0.3,
            max_wheel_speed: 1.0,
            motor_zeta: zeta,
            motor_omega_n: wn,
        }
    }
}

impl VehicleParams {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.wheel_base > 0.0 && self.wheel_base.is_finite()) {
            return Err(format!("wheel_base must be > 0 (got {})", self.wheel_base));
        }
        if !(self.body_radius >= 0.0 && self.body_radius.is_finite()) {
            return Err(format!("body_radius must be >= 0 (got {})", self.body_radius));
        }
        if !(self.max_wheel_speed > 0.0 && self.max_wheel_speed.is_finite()) {
            return Err(format!("max_wheel_speed must be > 0 (got {})", self.max_wheel_speed));
        }
        if !(self.motor_zeta > 0.0 && self.motor_zeta < 1.0) {
            return Err(format!("motor_zeta must lie in (0, 1) (got {})", self.motor_zeta));
        }
        if !(self.motor_omega_n > 0.0 && self.motor_omega_n.is_finite()) {
            return Err(format!("motor_omega_n must be > 0 (got {})", self.motor_omega_n));
        }
        Ok(())
    }

    /// Hard limit on a wheel's actual speed (overshoot headroom).
    pub fn speed_limit(&self) -> f64 {
        1.5 * self.max_wheel_speed
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct MotorState {
    /// Wheel surface speed, m/s.
    pub speed: f64,
    /// d(speed)/dt, m/s^2.
    pub speed_rate: f64,
    /// Commanded speed, m/s.
    pub target: f64,
}

impl MotorState {
    pub fn at_rest() -> Self {
        MotorState::default()
    }
}

/// One semi-implicit Euler step of the wheel-speed response.
pub fn motor_step(m: MotorState, params: &VehicleParams, dt: f64) -> MotorState {
    debug_assert!(dt > 0.0 && dt <= MAX_DT + 1e-12, "dt out of range: {dt}");
    let wn = params.motor_omega_n;
    let zeta = params.motor_zeta;
    let accel = wn * wn * (m.target - m.speed) - 2.0 * zeta * wn * m.speed_rate;
    let speed_rate = m.speed_rate + dt * accel;
    let limit = params.speed_limit();
    let speed = (m.speed + dt * speed_rate).clamp(-limit, limit);
    MotorState {
        speed,
        speed_rate,
        target: m.target,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct VehicleState {
    pub x: f64,
    pub y: f64,
    /// rad, in (-pi, pi]
    pub heading: f64,
    pub left: MotorState,
    pub right: MotorState,
}

impl VehicleState {
    pub fn at_pose(x: f64, y: f64, heading: f64) -> Self {
        VehicleState {
            x,
            y,
            heading: normalize_angle(heading),
            ..Default::default()
        }
    }

    pub fn position(&self) -> crate::geom2d::Point2 {
        crate::geom2d::Point2::new(self.x, self.y)
    }

    /// Body-frame forward speed and yaw rate from the current wheel speeds.
    pub fn twist(&self, params: &VehicleParams) -> (f64, f64) {
        let v = 0.5 * (self.left.speed + self.right.speed);
        let omega = (self.right.speed - self.left.speed) / params.wheel_base;
        (v, omega)
    }
}

/// Advances the pose by exact arc integration at the current wheel speeds.
/// Motor states are carried through unchanged.
pub fn kinematics_step(s: VehicleState, params: &VehicleParams, dt: f64) -> VehicleState {
    debug_assert!(dt > 0.0 && dt <= MAX_DT + 1e-12, "dt out of range: {dt}");
    let (v, omega) = s.twist(params);
    let mut next = s;
    if omega.abs() < STRAIGHT_OMEGA {
        let (sin, cos) = s.heading.sin_cos();
        next.x += v * dt * cos;
        next.y += v * dt * sin;
    } else {
        let h1 = s.heading + omega * dt;
        let r = v / omega;
        next.x += r * (h1.sin() - s.heading.sin());
        next.y -= r * (h1.cos() - s.heading.cos());
        next.heading = normalize_angle(h1);
    }
    next
}

/// Reconciles the controller's steering bias and two speed commands into
/// left/right wheel targets.
pub fn mix_commands(steer_bias: f64, left_cmd: f64, right_cmd: f64, params: &VehicleParams) -> (f64, f64) {
    let max = params.max_wheel_speed;
    let base = 0.5 * (left_cmd + right_cmd);
    let differential = steer_bias * max * 0.5;
    (
        (base - differential).clamp(-max, max),
        (base + differential).clamp(-max, max),
    )
}
