//! Vehicle kinematics, footprint geometry and the affine forward/rear
//! collision-avoidance constraints.

mod constraints;
mod geometry;
mod kinematics;

pub use constraints::{avoidance_margin, constraint_margin, AvoidanceConstraint, LaneSide, RcacForm};
pub use geometry::{boxes_intersect, vehicle_polytope, OrientedBox};
pub use kinematics::{
    clamp_control, side_slip, step_kinematics, wrap_angle, ControlInput, DynamicsLimits,
    VehicleGeometry, VehicleState,
};
