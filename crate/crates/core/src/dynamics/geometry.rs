//! Oriented rectangles and the separating-axis overlap test.

use serde::{Deserialize, Serialize};

use super::kinematics::{VehicleGeometry, VehicleState};
use crate::error::{Error, Result};

/// A rectangle rotated by `heading` about its `center`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrientedBox {
    pub center: [f64; 2],
    pub heading: f64,
    pub half_extents: [f64; 2],
}

impl OrientedBox {
    pub fn new(center: [f64; 2], heading: f64, half_extents: [f64; 2]) -> Result<Self> {
        if half_extents.iter().any(|h| !(h.is_finite() && *h > 0.0)) {
            return Err(Error::invalid(format!("half extents must be positive, got {half_extents:?}")));
        }
        if !(center[0].is_finite() && center[1].is_finite() && heading.is_finite()) {
            return Err(Error::Numeric("box pose"));
        }
        Ok(Self { center, heading, half_extents })
    }

    /// Unit vectors along the box's length and width.
    pub fn axes(&self) -> [[f64; 2]; 2] {
        let (s, c) = self.heading.sin_cos();
        [[c, s], [-s, c]]
    }

    pub fn corners(&self) -> [[f64; 2]; 4] {
        let [u, w] = self.axes();
        let [hl, hw] = self.half_extents;
        let [cx, cy] = self.center;
        let mut out = [[0.0; 2]; 4];
        for (i, (sl, sw)) in [(1.0, 1.0), (-1.0, 1.0), (-1.0, -1.0), (1.0, -1.0)].into_iter().enumerate() {
            out[i] = [cx + sl * hl * u[0] + sw * hw * w[0], cy + sl * hl * u[1] + sw * hw * w[1]];
        }
        out
    }

    /// Closed containment test.
    pub fn contains(&self, p: [f64; 2]) -> bool {
        let d = [p[0] - self.center[0], p[1] - self.center[1]];
        let [u, w] = self.axes();
        (d[0] * u[0] + d[1] * u[1]).abs() <= self.half_extents[0]
            && (d[0] * w[0] + d[1] * w[1]).abs() <= self.half_extents[1]
    }

    fn projected_radius(&self, axis: [f64; 2]) -> f64 {
        let [u, w] = self.axes();
        self.half_extents[0] * (u[0] * axis[0] + u[1] * axis[1]).abs()
            + self.half_extents[1] * (w[0] * axis[0] + w[1] * axis[1]).abs()
    }
}

/// Footprint of a vehicle: centred on its position, aligned with its heading.
pub fn vehicle_polytope(state: &VehicleState, geom: &VehicleGeometry) -> Result<OrientedBox> {
    OrientedBox::new([state.x, state.y], state.phi, [geom.length / 2.0, geom.width / 2.0])
}

/// Separating-axis test over the four edge normals. Touching boxes intersect.
pub fn boxes_intersect(a: &OrientedBox, b: &OrientedBox) -> bool {
    let d = [b.center[0] - a.center[0], b.center[1] - a.center[1]];
    let [a0, a1] = a.axes();
    let [b0, b1] = b.axes();
    for axis in [a0, a1, b0, b1] {
        let dist = (d[0] * axis[0] + d[1] * axis[1]).abs();
        if dist > a.projected_radius(axis) + b.projected_radius(axis) {
            return false;
        }
    }
    true
}
