use std::f64::consts::{FRAC_PI_2, PI};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Pose and speed of one vehicle: `[x, y, phi, v]`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct VehicleState {
    /// Longitudinal position (m).
    pub x: f64,
    /// Lateral position (m), positive to the left.
    pub y: f64,
    /// Heading (rad), kept in (-pi, pi].
    pub phi: f64,
    /// Speed (m/s).
    pub v: f64,
}

impl VehicleState {
    pub const fn new(x: f64, y: f64, phi: f64, v: f64) -> Self {
        Self { x, y, phi, v }
    }

    pub fn to_array(self) -> [f64; 4] {
        [self.x, self.y, self.phi, self.v]
    }

    pub fn from_array(z: [f64; 4]) -> Self {
        Self::new(z[0], z[1], z[2], z[3])
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|c| c.is_finite())
    }
}

/// Acceleration and steering command.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ControlInput {
    pub a: f64,
    pub delta: f64,
}

impl ControlInput {
    pub const fn new(a: f64, delta: f64) -> Self {
        Self { a, delta }
    }

    pub fn to_array(self) -> [f64; 2] {
        [self.a, self.delta]
    }

    pub fn from_array(u: [f64; 2]) -> Self {
        Self::new(u[0], u[1])
    }
}

/// State, control and per-step control-change bounds.
///
/// `du_min`/`du_max` are changes allowed over a single step of length `dt`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DynamicsLimits {
    pub z_min: [f64; 4],
    pub z_max: [f64; 4],
    pub u_min: [f64; 2],
    pub u_max: [f64; 2],
    pub du_min: [f64; 2],
    pub du_max: [f64; 2],
    pub dt: f64,
}

impl DynamicsLimits {
    /// Builds limits from per-second control rates; the stored change bounds
    /// are `rate * dt`.
    pub fn from_rates(
        dt: f64,
        accel: (f64, f64),
        steer: (f64, f64),
        accel_rate: f64,
        steer_rate: f64,
        speed: (f64, f64),
    ) -> Self {
        Self {
            z_min: [-1.0e4, -1.0e3, -PI, speed.0],
            z_max: [1.0e4, 1.0e3, PI, speed.1],
            u_min: [accel.0, steer.0],
            u_max: [accel.1, steer.1],
            du_min: [-accel_rate * dt, -steer_rate * dt],
            du_max: [accel_rate * dt, steer_rate * dt],
            dt,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let pairs = self
            .z_min
            .iter()
            .zip(&self.z_max)
            .chain(self.u_min.iter().zip(&self.u_max))
            .chain(self.du_min.iter().zip(&self.du_max));
        for (lo, hi) in pairs {
            if !(lo.is_finite() && hi.is_finite()) || lo > hi {
                return Err(Error::Config(format!("bound pair [{lo}, {hi}] is not ordered")));
            }
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::Config(format!("dt must be positive, got {}", self.dt)));
        }
        Ok(())
    }

    pub fn v_min(&self) -> f64 {
        self.z_min[3]
    }

    pub fn v_max(&self) -> f64 {
        self.z_max[3]
    }
}

impl Default for DynamicsLimits {
    /// 0.05 s steps, +-4 m/s^2, +-0.3 rad, 1 m/s^2 and 0.2 rad per second of
    /// control change, speed within [0, 30] m/s.
    fn default() -> Self {
        Self::from_rates(0.05, (-4.0, 4.0), (-0.3, 0.3), 1.0, 0.2, (0.0, 30.0))
    }
}

/// Footprint and axle layout of a vehicle, plus the lane width used by the
/// lateral term of the avoidance constraints.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VehicleGeometry {
    pub length: f64,
    pub width: f64,
    pub lf: f64,
    pub lr: f64,
    pub lane_width: f64,
}

impl Default for VehicleGeometry {
    fn default() -> Self {
        Self { length: 4.5, width: 1.8, lf: 2.25, lr: 2.25, lane_width: 3.7 }
    }
}

impl VehicleGeometry {
    pub fn validate(&self) -> Result<()> {
        let all = [self.length, self.width, self.lf, self.lr, self.lane_width];
        if all.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::Config(format!("geometry fields must be positive: {self:?}")));
        }
        if (self.length - (self.lf + self.lr)).abs() > 1e-9 * self.length {
            return Err(Error::Config(format!(
                "length {} must equal lf + lr = {}",
                self.length,
                self.lf + self.lr
            )));
        }
        Ok(())
    }
}

/// Wraps an angle into (-pi, pi].
pub fn wrap_angle(angle: f64) -> f64 {
    if angle > -PI && angle <= PI {
        return angle;
    }
    let wrapped = (angle + PI).rem_euclid(2.0 * PI) - PI;
    if wrapped <= -PI {
        wrapped + 2.0 * PI
    } else {
        wrapped
    }
}

/// Kinematic bicycle side-slip angle at the centre of mass.
pub fn side_slip(delta: f64, geom: &VehicleGeometry) -> Result<f64> {
    if !delta.is_finite() || delta.abs() >= FRAC_PI_2 {
        return Err(Error::InvalidSteering(delta));
    }
    Ok((geom.lr / (geom.lf + geom.lr) * delta.tan()).atan())
}

/// One explicit-Euler step of the kinematic bicycle model, followed by a
/// heading wrap and a clamp of the state into `[z_min, z_max]`.
pub fn step_kinematics(
    state: VehicleState,
    control: ControlInput,
    geom: &VehicleGeometry,
    limits: &DynamicsLimits,
) -> Result<VehicleState> {
    if !state.is_finite() {
        return Err(Error::Numeric("vehicle state"));
    }
    if !(control.a.is_finite() && control.delta.is_finite()) {
        return Err(Error::Numeric("control input"));
    }
    let beta = side_slip(control.delta, geom)?;
    let dt = limits.dt;
    let course = state.phi + beta;
    let next = [
        state.x + state.v * course.cos() * dt,
        state.y + state.v * course.sin() * dt,
        wrap_angle(state.phi + state.v / geom.lr * beta.sin() * dt),
        state.v + control.a * dt,
    ];
    let mut z = [0.0; 4];
    for i in 0..4 {
        z[i] = next[i].clamp(limits.z_min[i], limits.z_max[i]);
    }
    Ok(VehicleState::from_array(z))
}

/// Applies magnitude bounds, then the per-step change bounds relative to
/// `prev`.
pub fn clamp_control(raw: ControlInput, prev: ControlInput, limits: &DynamicsLimits) -> ControlInput {
    let raw = raw.to_array();
    let prev = prev.to_array();
    let mut out = [0.0; 2];
    for i in 0..2 {
        let bounded = raw[i].clamp(limits.u_min[i], limits.u_max[i]);
        let rated = bounded.clamp(prev[i] + limits.du_min[i], prev[i] + limits.du_max[i]);
        out[i] = rated.clamp(limits.u_min[i], limits.u_max[i]);
    }
    ControlInput::from_array(out)
}
