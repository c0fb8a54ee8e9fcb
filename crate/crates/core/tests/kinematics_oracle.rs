//! Foot positions against an independently written scalar expansion of
//! the 3-revolute chain (abduction about x, two pitches about y),
//! plus geometric invariants of the chain.

use proptest::prelude::*;
use uniquad::model::{
    foot_positions, leg_points, leg_reach, leg_signs, nominal_configuration, slots, LegType,
    ModelSet,
};

/// Scalar forward kinematics written from the chain definition without
/// any rotation-matrix library: abduction q1 about x, then pitches
/// (q2, q3) about the rotated y axis, links mirrored per leg.
fn scalar_fk(
    params: &[f64],
    leg_type: LegType,
    leg: usize,
    q: [f64; 3],
) -> [f64; 3] {
    let off = &params[slots::LINK_OFFSETS..slots::LINK_OFFSETS + 9];
    let (sx, sy) = leg_signs(leg);
    let sp = match (leg_type, leg < 2) {
        (LegType::A, _) => 1.0,
        (LegType::X, true) => -1.0,
        (LegType::X, false) => 1.0,
    };
    let (c1x, c1y, c1z) = (sx * off[0], sy * off[1], off[2]);
    let (c2x, c2y, c2z) = (sx * off[3], sy * off[4], off[5]);
    let (c3x, c3y, c3z) = (sx * off[6], sy * off[7], off[8]);
    let fz = params[slots::FOOT_OFFSET_Z];

    // pitch-plane (x, z) coordinates accumulate in the frame after the
    // abduction joint; y accumulates separately
    let th2 = sp * q[1];
    let th3 = sp * (q[1] + q[2]);
    let x = c2x + (c3x * th2.cos() + c3z * th2.sin()) + (fz * th3.sin());
    let z_in_ab = c2z + (c3z * th2.cos() - c3x * th2.sin()) + (fz * th3.cos());
    let y_in_ab = c2y + c3y;

    // abduction rotates the (y, z) pair about x
    let (s1, c1) = q[0].sin_cos();
    let y = c1y + c1 * y_in_ab - s1 * z_in_ab;
    let z = c1z + s1 * y_in_ab + c1 * z_in_ab;
    [c1x + x, y, z]
}

fn joint_strategy() -> impl Strategy<Value = [f64; 3]> {
    [
        -1.0f64..1.0,
        -2.0f64..2.0,
        -2.5f64..2.5,
    ]
}

proptest! {
    #[test]
    fn foot_matches_scalar_expansion(
        model_idx in 0usize..4,
        leg in 0usize..4,
        q in joint_strategy(),
    ) {
        let set = ModelSet::builtin();
        let model = &set.models[model_idx];
        let cfg = nominal_configuration(model);
        let foot = leg_points(&cfg.params, cfg.leg_type, leg, q).2;
        let oracle = scalar_fk(&cfg.params, cfg.leg_type, leg, q);
        prop_assert!((foot.x - oracle[0]).abs() < 1e-12);
        prop_assert!((foot.y - oracle[1]).abs() < 1e-12);
        prop_assert!((foot.z - oracle[2]).abs() < 1e-12);
    }

    #[test]
    fn foot_within_reach_of_hip(
        model_idx in 0usize..4,
        leg in 0usize..4,
        q in joint_strategy(),
    ) {
        let set = ModelSet::builtin();
        let model = &set.models[model_idx];
        let cfg = nominal_configuration(model);
        let (hip, _, foot) = leg_points(&cfg.params, cfg.leg_type, leg, q);
        prop_assert!((foot - hip).norm() <= leg_reach(&cfg.params) + 1e-9);
    }

    #[test]
    fn foot_is_lipschitz_in_joints(
        model_idx in 0usize..4,
        leg in 0usize..4,
        q in joint_strategy(),
        dq in [-1e-3f64..1e-3, -1e-3f64..1e-3, -1e-3f64..1e-3],
    ) {
        let set = ModelSet::builtin();
        let model = &set.models[model_idx];
        let cfg = nominal_configuration(model);
        let f0 = leg_points(&cfg.params, cfg.leg_type, leg, q).2;
        let q2 = [q[0] + dq[0], q[1] + dq[1], q[2] + dq[2]];
        let f1 = leg_points(&cfg.params, cfg.leg_type, leg, q2).2;
        let step = (dq[0].powi(2) + dq[1].powi(2) + dq[2].powi(2)).sqrt();
        // each joint moves the foot by at most the distal chain length
        let bound = 3.0 * leg_reach(&cfg.params) * step;
        prop_assert!((f1 - f0).norm() <= bound + 1e-12);
    }
}

#[test]
fn left_right_symmetry_at_mirrored_joints() {
    let set = ModelSet::builtin();
    for model in &set.models {
        let cfg = nominal_configuration(model);
        let q = [0.3, 0.7, -1.4];
        let q_mirror = [-0.3, 0.7, -1.4];
        for (left, right) in [(0usize, 1usize), (2, 3)] {
            let fl = leg_points(&cfg.params, cfg.leg_type, left, q).2;
            let fr = leg_points(&cfg.params, cfg.leg_type, right, q_mirror).2;
            assert!((fl.x - fr.x).abs() < 1e-12);
            assert!((fl.y + fr.y).abs() < 1e-12);
            assert!((fl.z - fr.z).abs() < 1e-12);
        }
    }
}

#[test]
fn foot_positions_assembles_all_legs() {
    let set = ModelSet::builtin();
    let model = set.model("a1").unwrap();
    let cfg = nominal_configuration(model);
    let q = cfg.nominal_joint_positions().to_vec();
    let feet = foot_positions(&cfg, &q);
    for leg in 0..4 {
        let single = leg_points(
            &cfg.params,
            cfg.leg_type,
            leg,
            [q[3 * leg], q[3 * leg + 1], q[3 * leg + 2]],
        )
        .2;
        assert_eq!(feet[leg], single);
    }
}
