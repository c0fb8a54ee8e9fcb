//! The joint integrator against the closed-form solution of
//! I q" = Kp (q_des - q) - Kd q', for all three damping regimes, plus
//! exact torque clipping at saturation.

use nalgebra::Vector3;
use uniquad::model::{nominal_configuration, ModelSet, NUM_JOINTS};
use uniquad::sim::{pd_torque, step, SimContext, SimParams};

/// Analytic unit-step response of I q" + Kd q' + Kp q = Kp, from rest.
fn analytic_step(kp: f64, kd: f64, inertia: f64, t: f64) -> f64 {
    let wn = (kp / inertia).sqrt();
    let zeta = kd / (2.0 * (kp * inertia).sqrt());
    if (zeta - 1.0).abs() < 1e-12 {
        1.0 - (1.0 + wn * t) * (-wn * t).exp()
    } else if zeta < 1.0 {
        let wd = wn * (1.0 - zeta * zeta).sqrt();
        1.0 - (-zeta * wn * t).exp() * ((wd * t).cos() + zeta * wn / wd * (wd * t).sin())
    } else {
        let s = wn * (zeta * zeta - 1.0).sqrt();
        let r1 = -zeta * wn + s;
        let r2 = -zeta * wn - s;
        1.0 + (r2 * (r1 * t).exp() - r1 * (r2 * t).exp()) / (r1 - r2)
    }
}

fn run_regime(kp: f64, kd: f64, label: &str) {
    let set = ModelSet::builtin();
    let model = set.model("a1").unwrap();
    let mut cfg = nominal_configuration(model);
    for g in cfg.pd_gains.iter_mut() {
        *g = (kp, kd);
    }
    let params = SimParams {
        dt: 1e-4,
        ..SimParams::default()
    };
    let ctx = SimContext::new(&cfg, model, params).unwrap();
    let mut state = ctx.standing_state();
    // hold the base far above ground so no contact ever activates
    state.position.z += 100.0;
    let q0 = state.q;
    let mut q_des = q0;
    let target_offset = 0.3;
    q_des[4] += target_offset; // one hip joint, well inside limits
    let steps = (2.0 / params.dt).round() as usize;
    let mut worst = 0.0f64;
    for k in 1..=steps {
        // counteract gravity so the base stays put (joint dynamics are
        // independent of base motion without contact, but keep it tidy)
        step(
            &mut state,
            &ctx,
            &q_des,
            Vector3::new(0.0, 0.0, ctx.total_mass * params.gravity),
        )
        .unwrap();
        let t = k as f64 * params.dt;
        let expected = q0[4] + target_offset * analytic_step(kp, kd, ctx.joint_inertia, t);
        worst = worst.max((state.q[4] - expected).abs());
    }
    assert!(
        worst < 1e-3,
        "{label}: max deviation {worst:.2e} exceeds 1e-3 rad"
    );
    // all other joints must not move
    for j in 0..NUM_JOINTS {
        if j != 4 {
            assert!((state.q[j] - q0[j]).abs() < 1e-12);
        }
    }
}

#[test]
fn underdamped_matches_analytic() {
    // zeta ~ 0.17 with the a1 reflected inertia
    run_regime(35.0, 0.5, "underdamped");
}

#[test]
fn critically_damped_matches_analytic() {
    let set = ModelSet::builtin();
    let inertia = set.model("a1").unwrap().reflected_inertia;
    let kp = 35.0;
    let kd = 2.0 * (kp * inertia).sqrt();
    run_regime(kp, kd, "critically damped");
}

#[test]
fn overdamped_matches_analytic() {
    let set = ModelSet::builtin();
    let inertia = set.model("a1").unwrap().reflected_inertia;
    let kp = 35.0;
    let kd = 5.0 * (kp * inertia).sqrt(); // zeta = 2.5
    run_regime(kp, kd, "overdamped");
}

#[test]
fn torque_clipping_is_exact() {
    let q = [0.0; NUM_JOINTS];
    let qd = [0.0; NUM_JOINTS];
    let gains = [(100.0, 1.0); NUM_JOINTS];
    let tau_max = [20.0; NUM_JOINTS];
    let mut q_des = [0.0; NUM_JOINTS];
    q_des[0] = 1.0; // demand 100 Nm
    q_des[1] = -1.0;
    q_des[2] = 0.2; // exactly at the limit
    q_des[3] = 0.1; // inside
    let tau = pd_torque(&q_des, &q, &qd, &gains, &tau_max);
    assert_eq!(tau[0], 20.0);
    assert_eq!(tau[1], -20.0);
    assert_eq!(tau[2], 20.0);
    assert_eq!(tau[3], 10.0);
}
