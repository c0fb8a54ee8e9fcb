//! Dissipativity of the contact solver: a passively dropped body must
//! never gain mechanical energy, and normal impulses must stay
//! nonnegative.

use nalgebra::Vector3;
use uniquad::model::{nominal_configuration, ModelSet};
use uniquad::sim::{mechanical_energy, step, SimContext, SimParams};

#[test]
fn passive_drop_energy_nonincreasing() {
    let set = ModelSet::builtin();
    for name in ["a1", "anymal_c"] {
        let model = set.model(name).unwrap();
        let mut cfg = nominal_configuration(model);
        for g in cfg.pd_gains.iter_mut() {
            *g = (0.0, 0.0);
        }
        let ctx = SimContext::new(&cfg, model, SimParams::default()).unwrap();
        let mut state = ctx.standing_state();
        state.position.z += 0.4;
        state.angular_velocity = Vector3::new(0.5, -0.3, 0.2);
        let mut prev = mechanical_energy(&state, &ctx);
        let scale = prev.abs().max(1.0);
        let mut worst = 0.0f64;
        let mut min_normal = f64::INFINITY;
        for _ in 0..10_000 {
            step(&mut state, &ctx, &ctx.q_nominal, Vector3::zeros()).unwrap();
            let e = mechanical_energy(&state, &ctx);
            worst = worst.max((e - prev) / scale);
            min_normal = min_normal.min(state.diag_min_normal);
            prev = e;
        }
        assert!(
            worst <= 1e-6,
            "{name}: relative energy rise {worst:.2e} per step"
        );
        assert!(min_normal >= 0.0, "{name}: negative normal impulse");
        assert!(state.is_finite());
    }
}

#[test]
fn free_fall_matches_ballistics() {
    let set = ModelSet::builtin();
    let model = set.model("a1").unwrap();
    let cfg = nominal_configuration(model);
    let params = SimParams::default();
    let ctx = SimContext::new(&cfg, model, params).unwrap();
    let mut state = ctx.standing_state();
    state.position.z += 50.0;
    let z0 = state.position.z;
    let n = 400; // 1 s, still far above ground
    for _ in 0..n {
        step(&mut state, &ctx, &ctx.q_nominal, Vector3::zeros()).unwrap();
    }
    let t = n as f64 * params.dt;
    // semi-implicit Euler: z(t) = z0 - g/2 t (t + dt)
    let expected = z0 - 0.5 * params.gravity * t * (t + params.dt);
    assert!((state.position.z - expected).abs() < 1e-9);
    assert!((state.linear_velocity.z + params.gravity * t).abs() < 1e-9);
}
