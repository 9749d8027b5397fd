use crate::dynamics::{
    avoidance_margin, wrap_angle, AvoidanceConstraint, ControlInput, LaneSide, VehicleGeometry, VehicleState,
};

use super::scenario::CostWeights;

/// `sum q_z (z - z_ref)^2 + sum q_u u^2 + sum q_du du^2`, with the heading
/// error wrapped.
pub fn step_cost(
    state: &VehicleState,
    reference: &VehicleState,
    control: ControlInput,
    dcontrol: ControlInput,
    w: &CostWeights,
) -> f64 {
    let e = [
        state.x - reference.x,
        state.y - reference.y,
        wrap_angle(state.phi - reference.phi),
        state.v - reference.v,
    ];
    let u = control.to_array();
    let du = dcontrol.to_array();
    let mut f = 0.0;
    for i in 0..4 {
        f += w.q_z[i] * e[i] * e[i];
    }
    for i in 0..2 {
        f += w.q_u[i] * u[i] * u[i] + w.q_du[i] * du[i] * du[i];
    }
    f
}

/// Forward margin for objects ahead (`dx >= 0`), rear margin otherwise.
pub fn pair_margin(ego: &VehicleState, other: &VehicleState, d_safe: f64, geom: &VehicleGeometry) -> (AvoidanceConstraint, f64) {
    let dx = other.x - ego.x;
    let dy = other.y - ego.y;
    let c = if dx >= 0.0 { AvoidanceConstraint::Forward } else { AvoidanceConstraint::Rear };
    (c, avoidance_margin(dx, dy, d_safe, geom, c, LaneSide::from_offset(dy)))
}

/// Constraint part of the reward: `sigma1 * max(-m, 0)` for forward margins
/// and `sigma2 * max(-m, 0)` for rear ones.
pub fn constraint_penalty(margins: &[(AvoidanceConstraint, f64)], w: &CostWeights) -> f64 {
    margins
        .iter()
        .map(|(c, m)| {
            let sigma = match c {
                AvoidanceConstraint::Forward => w.sigma1,
                AvoidanceConstraint::Rear => w.sigma2,
            };
            sigma * (-m).max(0.0)
        })
        .sum()
}

/// `-F - penalties`, with the terminal charge on collision or off-road.
pub fn reward(step_cost: f64, margins: &[(AvoidanceConstraint, f64)], terminal: bool, remaining_steps: usize, w: &CostWeights) -> f64 {
    let mut r = -step_cost - constraint_penalty(margins, w);
    if terminal {
        r -= w.collision_penalty;
        if w.terminal_cost_to_go {
            r -= step_cost.min(w.cost_to_go_cap) * remaining_steps as f64;
        }
    }
    r
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn zero() -> ControlInput {
        ControlInput::default()
    }

    #[test]
    fn cost_examples() {
        let w = CostWeights::default();
        let z = VehicleState::new(1.0, 2.0, 0.1, 15.0);
        assert_eq!(step_cost(&z, &z, zero(), zero(), &w), 0.0);
        let off = VehicleState { y: 2.1, ..z };
        assert_abs_diff_eq!(step_cost(&off, &z, zero(), zero(), &w), 1.0, epsilon = 1e-12);
        let u = ControlInput { a: 1.0, delta: 0.1 };
        assert_abs_diff_eq!(step_cost(&off, &z, u, zero(), &w), 2.01, epsilon = 1e-12);
    }

    #[test]
    fn reward_examples() {
        let w = CostWeights::default();
        assert_eq!(reward(3.0, &[(AvoidanceConstraint::Forward, 0.2)], false, 10, &w), -3.0);
        assert_abs_diff_eq!(
            reward(0.0, &[(AvoidanceConstraint::Forward, -0.31034)], false, 10, &w),
            -3.1034,
            epsilon = 1e-12
        );
        assert!(reward(0.0, &[], true, 0, &w) <= -100.0);
        let no_ctg = CostWeights { terminal_cost_to_go: false, ..w.clone() };
        assert_eq!(reward(2.0, &[], true, 50, &no_ctg), -102.0);
        assert_eq!(reward(2.0, &[], true, 50, &w), -202.0);
        let capped = CostWeights { cost_to_go_cap: 1.0, ..w.clone() };
        assert_eq!(reward(2.0, &[], true, 50, &capped), -152.0);
    }

    #[test]
    fn margin_sweep_is_continuous() {
        let w = CostWeights::default();
        let geom = VehicleGeometry::default();
        let ego = VehicleState::new(0.0, 0.0, 0.0, 15.0);
        let mut prev: Option<f64> = None;
        for i in -4000..=4000 {
            let other = VehicleState::new(i as f64 * 0.005, 0.4, 0.0, 15.0);
            let r = reward(0.0, &[pair_margin(&ego, &other, 10.0, &geom)], false, 0, &w);
            if let Some(p) = prev {
                assert!((r - p).abs() < 0.01, "jump at dx = {}", other.x);
            }
            prev = Some(r);
        }
    }

    proptest! {
        #[test]
        fn cost_is_nonnegative(e in prop::array::uniform4(-5.0f64..5.0), a in -4.0f64..4.0, d in -0.3f64..0.3) {
            let w = CostWeights::default();
            let r = VehicleState::default();
            let z = VehicleState::new(e[0], e[1], e[2], e[3]);
            let u = ControlInput { a, delta: d };
            prop_assert!(step_cost(&z, &r, u, u, &w) >= 0.0);
        }

        #[test]
        fn reward_is_nonpositive(f in 0.0f64..100.0, m in -3.0f64..3.0, term: bool) {
            let w = CostWeights::default();
            prop_assert!(reward(f, &[(AvoidanceConstraint::Rear, m)], term, 5, &w) <= 0.0);
        }

        #[test]
        fn satisfied_margins_leave_minus_cost(f in 0.0f64..100.0, m in 0.0f64..3.0) {
            let w = CostWeights::default();
            prop_assert_eq!(reward(f, &[(AvoidanceConstraint::Forward, m)], false, 5, &w), -f);
        }

        #[test]
        fn larger_d_min_never_loosens_forward_margin(dx in 0.0f64..60.0, dy in -8.0f64..8.0, d in 1.0f64..20.0, extra in 0.0f64..10.0) {
            let geom = VehicleGeometry::default();
            let ego = VehicleState::default();
            let other = VehicleState::new(dx, dy, 0.0, 0.0);
            let (_, m1) = pair_margin(&ego, &other, d, &geom);
            let (_, m2) = pair_margin(&ego, &other, d + extra, &geom);
            prop_assert!(m2 <= m1 + 1e-12);
        }
    }
}
