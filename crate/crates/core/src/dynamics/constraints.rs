//! Forward (FCAC) and rear (RCAC) affine collision-avoidance margins.
//!
//! With `dx = x_j - x_k` and `dy = y_j - y_k` for a reference vehicle `j`
//! seen from vehicle `k`, the forward constraint reads
//! `dx / (d + L) + s * dy / (W/2 + w) >= 1` and the rear constraint
//! `dx / (d + L) - s * dy / (W/2 + w) <= -1`, where `s = +1` when `j` is on
//! the left and `-1` when it is on the right. Both margins are returned in
//! "satisfied iff >= 0" form.

use serde::{Deserialize, Serialize};

use super::kinematics::VehicleGeometry;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AvoidanceConstraint {
    /// Keeps clear of a vehicle ahead.
    Forward,
    /// Keeps clear of a vehicle behind.
    Rear,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LaneSide {
    Left,
    Right,
}

impl LaneSide {
    /// Side of the reference vehicle; zero lateral offset counts as left.
    pub fn from_offset(dy: f64) -> Self {
        if dy >= 0.0 {
            LaneSide::Left
        } else {
            LaneSide::Right
        }
    }
}

/// Longitudinal denominator used by the rear constraint.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RcacForm {
    /// `d + length`, the same as the forward constraint.
    #[default]
    Consistent,
    /// `d + width`, the printed rear-constraint formula.
    WidthNormalized,
}

/// Margin of the forward or rear constraint, using the consistent rear form.
pub fn avoidance_margin(
    dx: f64,
    dy: f64,
    d_safe: f64,
    geom: &VehicleGeometry,
    constraint: AvoidanceConstraint,
    side: LaneSide,
) -> f64 {
    constraint_margin(dx, dy, d_safe, geom, constraint, side, RcacForm::Consistent)
}

pub fn constraint_margin(
    dx: f64,
    dy: f64,
    d_safe: f64,
    geom: &VehicleGeometry,
    constraint: AvoidanceConstraint,
    side: LaneSide,
    form: RcacForm,
) -> f64 {
    debug_assert!(d_safe > 0.0);
    let lateral = dy / (0.5 * geom.lane_width + geom.width);
    let sign = match side {
        LaneSide::Left => 1.0,
        LaneSide::Right => -1.0,
    };
    match constraint {
        AvoidanceConstraint::Forward => dx / (d_safe + geom.length) + sign * lateral - 1.0,
        AvoidanceConstraint::Rear => {
            let longitudinal = match form {
                RcacForm::Consistent => d_safe + geom.length,
                RcacForm::WidthNormalized => d_safe + geom.width,
            };
            -1.0 - (dx / longitudinal - sign * lateral)
        }
    }
}
