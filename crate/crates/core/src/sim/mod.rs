//! Reduced-order quadruped dynamics.
//!
//! Fidelity reduction: limb inertia is lumped into the base for the
//! floating 6-DoF dynamics; each joint integrates as an independent
//! second-order system with a configurable reflected inertia. Ground
//! contact (feet, knee proxies, base-box corners) uses spring-damper
//! penalty forces solved at the velocity level with sequential impulses;
//! the implicit local solves keep the passive system dissipative.

use nalgebra::{Matrix3, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{leg_points, ReferenceModel, RobotConfiguration, NUM_JOINTS, NUM_LEGS};

pub mod episode;
pub mod sweep;

pub use episode::{
    run_episode, success_rate, EpisodeOptions, EpisodeResult, PushSpec, RewardTerms,
    TerminationCause, REWARD_WEIGHTS,
};
pub use sweep::{pd_grid_sweep, robustness_sweep, surrogate_oracle, SurrogateOracle, SweepAxis,
    SweepPoint, SweepSpec};

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SimParams {
    /// Physics substep, (0, 0.01] s.
    pub dt: f64,
    /// Substeps per control tick (control rate = 1 / (dt * substeps)).
    pub control_substeps: usize,
    pub gravity: f64,
    pub contact_kn: f64,
    pub contact_dn: f64,
    pub contact_kt: f64,
    pub solver_sweeps: usize,
    /// Admission-test tilt limit.
    pub tilt_limit: f64,
}

impl Default for SimParams {
    fn default() -> Self {
        SimParams {
            dt: 0.0025,
            control_substeps: 4,
            gravity: 9.81,
            contact_kn: 15_000.0,
            contact_dn: 1_500.0,
            contact_kt: 2_000.0,
            solver_sweeps: 8,
            tilt_limit: std::f64::consts::FRAC_PI_4,
        }
    }
}

impl SimParams {
    pub fn control_dt(&self) -> f64 {
        self.dt * self.control_substeps as f64
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt <= 0.01) {
            return Err(Error::domain(format!("dt {} outside (0, 0.01]", self.dt)));
        }
        if self.control_substeps == 0 || self.solver_sweeps == 0 {
            return Err(Error::domain("substep/sweep counts must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimState {
    /// CoM world position.
    pub position: Vector3<f64>,
    pub orientation: UnitQuaternion<f64>,
    pub linear_velocity: Vector3<f64>,
    /// Angular velocity in the world frame.
    pub angular_velocity: Vector3<f64>,
    pub q: [f64; NUM_JOINTS],
    pub qd: [f64; NUM_JOINTS],
    pub time: f64,
    pub foot_contacts: [bool; NUM_LEGS],
    pub q_des: [f64; NUM_JOINTS],
    /// Per-leg foot tangential impulse applied last step (diagnostics).
    #[serde(skip)]
    pub diag_foot_tangent: [[f64; 2]; NUM_LEGS],
    /// Tangential impulse via knee and base contacts last step.
    #[serde(skip)]
    pub diag_other_tangent: [f64; 2],
    /// Smallest normal impulse among last step's active contacts
    /// (infinity when none were active).
    #[serde(skip)]
    pub diag_min_normal: f64,
    /// Net kinetic energy delivered by contact impulses last step.
    #[serde(skip)]
    pub diag_contact_work: f64,
}

impl SimState {
    pub fn is_finite(&self) -> bool {
        self.position.iter().all(|v| v.is_finite())
            && self.linear_velocity.iter().all(|v| v.is_finite())
            && self.angular_velocity.iter().all(|v| v.is_finite())
            && self.orientation.as_vector().iter().all(|v| v.is_finite())
            && self.q.iter().all(|v| v.is_finite())
            && self.qd.iter().all(|v| v.is_finite())
    }

    /// Cosine of the base tilt from upright.
    pub fn upright_cos(&self) -> f64 {
        (self.orientation * Vector3::z()).z
    }

    /// World up axis expressed in the base frame.
    pub fn gravity_axis(&self) -> Vector3<f64> {
        self.orientation.inverse() * Vector3::z()
    }

    /// Base-frame linear velocity.
    pub fn body_linear_velocity(&self) -> Vector3<f64> {
        self.orientation.inverse() * self.linear_velocity
    }

    pub fn body_angular_velocity(&self) -> Vector3<f64> {
        self.orientation.inverse() * self.angular_velocity
    }
}

/// Immutable per-configuration simulation context.
#[derive(Debug, Clone)]
pub struct SimContext {
    pub params: SimParams,
    pub cfg_params: Vec<f64>,
    pub leg_type: crate::model::LegType,
    pub total_mass: f64,
    pub inv_mass: f64,
    pub inertia_body: Vector3<f64>,
    pub joint_inertia: f64,
    pub joint_limits: Vec<(f64, f64)>,
    pub torque_limits: [f64; NUM_JOINTS],
    pub gains: [(f64, f64); NUM_JOINTS],
    pub friction: f64,
    pub com: Vector3<f64>,
    pub base_half_extents: [f64; 3],
    pub knee_radius: f64,
    pub q_nominal: [f64; NUM_JOINTS],
    pub standing_height: f64,
}

impl SimContext {
    pub fn new(cfg: &RobotConfiguration, model: &ReferenceModel, params: SimParams) -> Result<Self> {
        params.validate()?;
        let total_mass = cfg.total_mass();
        let [hx, hy, hz] = model.base_half_extents;
        // box inertia of the lumped body
        let inertia_body = Vector3::new(
            total_mass / 3.0 * (hy * hy + hz * hz),
            total_mass / 3.0 * (hx * hx + hz * hz),
            total_mass / 3.0 * (hx * hx + hy * hy),
        );
        let mut q_nominal = [0.0; NUM_JOINTS];
        q_nominal.copy_from_slice(cfg.nominal_joint_positions());
        let mut torque_limits = [0.0; NUM_JOINTS];
        torque_limits.copy_from_slice(cfg.torque_limits());
        let mut gains = [(0.0, 0.0); NUM_JOINTS];
        for (g, &pair) in gains.iter_mut().zip(&cfg.pd_gains) {
            *g = pair;
        }
        let mut min_z: f64 = 0.0;
        for leg in 0..NUM_LEGS {
            let q = [q_nominal[3 * leg], q_nominal[3 * leg + 1], q_nominal[3 * leg + 2]];
            let foot = leg_points(&cfg.params, cfg.leg_type, leg, q).2;
            min_z = min_z.min(foot.z);
        }
        Ok(SimContext {
            params,
            cfg_params: cfg.params.clone(),
            leg_type: cfg.leg_type,
            total_mass,
            inv_mass: 1.0 / total_mass,
            inertia_body,
            joint_inertia: model.reflected_inertia,
            joint_limits: model.joint_limits.clone(),
            torque_limits,
            gains,
            friction: cfg.friction(),
            com: cfg.com(),
            base_half_extents: model.base_half_extents,
            knee_radius: model.knee_radius,
            q_nominal,
            standing_height: -min_z,
        })
    }

    /// Standing state at the nominal joint configuration, feet touching
    /// the ground.
    pub fn standing_state(&self) -> SimState {
        SimState {
            position: Vector3::new(-self.com.x, -self.com.y, self.standing_height - self.com.z),
            orientation: UnitQuaternion::identity(),
            linear_velocity: Vector3::zeros(),
            angular_velocity: Vector3::zeros(),
            q: self.q_nominal,
            qd: [0.0; NUM_JOINTS],
            time: 0.0,
            foot_contacts: [false; NUM_LEGS],
            q_des: self.q_nominal,
            diag_foot_tangent: [[0.0; 2]; NUM_LEGS],
            diag_other_tangent: [0.0; 2],
            diag_min_normal: f64::INFINITY,
            diag_contact_work: 0.0,
        }
    }

    fn world_inertia_inv(&self, r: &nalgebra::Rotation3<f64>) -> Matrix3<f64> {
        let rm = r.matrix();
        let inv_diag = Matrix3::from_diagonal(&Vector3::new(
            1.0 / self.inertia_body.x,
            1.0 / self.inertia_body.y,
            1.0 / self.inertia_body.z,
        ));
        rm * inv_diag * rm.transpose()
    }

    /// Base-frame position of a point with base coordinates `local`,
    /// relative to the CoM.
    fn com_relative(&self, local: Vector3<f64>) -> Vector3<f64> {
        local - self.com
    }
}

/// PD control law with torque clipping.
pub fn pd_torque(
    q_des: &[f64; NUM_JOINTS],
    q: &[f64; NUM_JOINTS],
    qd: &[f64; NUM_JOINTS],
    gains: &[(f64, f64); NUM_JOINTS],
    tau_max: &[f64; NUM_JOINTS],
) -> [f64; NUM_JOINTS] {
    let mut tau = [0.0; NUM_JOINTS];
    for j in 0..NUM_JOINTS {
        let (kp, kd) = gains[j];
        tau[j] = (kp * (q_des[j] - q[j]) - kd * qd[j]).clamp(-tau_max[j], tau_max[j]);
    }
    tau
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum AttachKind {
    Foot(usize),
    Knee(usize),
    BaseCorner,
}

struct Contact {
    kind: AttachKind,
    /// Point position relative to the CoM, base frame.
    local: Vector3<f64>,
    /// d(point)/dq for the owning leg's three joints, base frame.
    jac: [Vector3<f64>; 3],
    penetration: f64,
    engaged: bool,
    normal_impulse: f64,
    tangent_impulse: [f64; 2],
}

fn leg_contact_geometry(ctx: &SimContext, q: &[f64; NUM_JOINTS]) -> Vec<Contact> {
    let mut out = Vec::with_capacity(NUM_LEGS * 2 + 4);
    let h = 1e-5;
    for leg in 0..NUM_LEGS {
        let q_leg = [q[3 * leg], q[3 * leg + 1], q[3 * leg + 2]];
        let (_, knee, foot) = leg_points(&ctx.cfg_params, ctx.leg_type, leg, q_leg);
        let mut jac_knee = [Vector3::zeros(); 3];
        let mut jac_foot = [Vector3::zeros(); 3];
        for j in 0..3 {
            let mut qp = q_leg;
            let mut qm = q_leg;
            qp[j] += h;
            qm[j] -= h;
            let (_, kp, fp) = leg_points(&ctx.cfg_params, ctx.leg_type, leg, qp);
            let (_, km, fm) = leg_points(&ctx.cfg_params, ctx.leg_type, leg, qm);
            jac_knee[j] = (kp - km) / (2.0 * h);
            jac_foot[j] = (fp - fm) / (2.0 * h);
        }
        out.push(Contact {
            kind: AttachKind::Foot(leg),
            local: ctx.com_relative(foot),
            jac: jac_foot,
            penetration: 0.0,
            engaged: false,
            normal_impulse: 0.0,
            tangent_impulse: [0.0; 2],
        });
        out.push(Contact {
            kind: AttachKind::Knee(leg),
            local: ctx.com_relative(knee),
            jac: jac_knee,
            penetration: 0.0,
            engaged: false,
            normal_impulse: 0.0,
            tangent_impulse: [0.0; 2],
        });
    }
    let [hx, hy, hz] = ctx.base_half_extents;
    for &sx in &[-1.0, 1.0] {
        for &sy in &[-1.0, 1.0] {
            out.push(Contact {
                kind: AttachKind::BaseCorner,
                local: ctx.com_relative(Vector3::new(sx * hx, sy * hy, -hz)),
                jac: [Vector3::zeros(); 3],
                penetration: 0.0,
                engaged: false,
                normal_impulse: 0.0,
                tangent_impulse: [0.0; 2],
            });
        }
    }
    out
}

/// Advances the state by one physics substep. `external_force` is a
/// world-frame force on the base (perturbation sweeps).
pub fn step(
    state: &mut SimState,
    ctx: &SimContext,
    q_des: &[f64; NUM_JOINTS],
    external_force: Vector3<f64>,
) -> Result<()> {
    let dt = ctx.params.dt;
    state.q_des = *q_des;

    // actuation on the decoupled joints
    let tau = pd_torque(q_des, &state.q, &state.qd, &ctx.gains, &ctx.torque_limits);
    for j in 0..NUM_JOINTS {
        state.qd[j] += dt * tau[j] / ctx.joint_inertia;
    }

    // free-body update: gravity, external push, gyroscopic torque
    state.linear_velocity += dt * (Vector3::new(0.0, 0.0, -ctx.params.gravity) + external_force * ctx.inv_mass);
    let rot = state.orientation.to_rotation_matrix();
    let inertia_inv = ctx.world_inertia_inv(&rot);
    let inertia_w = inertia_inv
        .try_inverse()
        .ok_or(Error::IntegrationDiverged { time: state.time })?;
    let gyro = -state.angular_velocity.cross(&(inertia_w * state.angular_velocity));
    state.angular_velocity += dt * (inertia_inv * gyro);

    // A joint resting on its limit cannot move outward, so it is excluded
    // from the contact coupling for this step: otherwise the solver books
    // impulse against joint motion that the limit clamp discards, and the
    // foot keeps sinking into the spring it already paid for.
    let mut locked = [false; NUM_JOINTS];
    for (j, l) in locked.iter_mut().enumerate() {
        let (lo, hi) = ctx.joint_limits[j];
        *l = (state.q[j] >= hi && state.qd[j] >= 0.0)
            || (state.q[j] <= lo && state.qd[j] <= 0.0);
    }

    // Contact assembly. Every candidate point stays in the solve; a point
    // engages when it is penetrated or predicted (at current velocities)
    // to cross the ground by the end of the step. Activation is re-checked
    // every sweep because impulses on one contact can push another back
    // down; dropping points up front lets them gain spring energy that no
    // impulse paid for. The spring sees max(p, 0), so energy stored at
    // first touch is bounded by what the damper solve removed.
    let mut contacts = leg_contact_geometry(ctx, &state.q);
    for c in contacts.iter_mut() {
        let world = state.position + rot * c.local;
        let radius = match c.kind {
            AttachKind::Knee(_) => ctx.knee_radius,
            _ => 0.0,
        };
        c.penetration = radius - world.z;
    }

    let kn = ctx.params.contact_kn;
    let dn = ctx.params.contact_dn;
    let kt = ctx.params.contact_kt;
    let mu = ctx.friction;
    let gain = kn * dt + dn;

    // sequential impulses with implicit local spring-damper solves
    let mut contact_work = 0.0;
    for _ in 0..ctx.params.solver_sweeps {
        for c in contacts.iter_mut() {
            let r = rot * c.local;
            let leg = match c.kind {
                AttachKind::Foot(l) | AttachKind::Knee(l) => Some(l),
                AttachKind::BaseCorner => None,
            };
            let jac_w: [Vector3<f64>; 3] = match leg {
                Some(_) => [rot * c.jac[0], rot * c.jac[1], rot * c.jac[2]],
                None => [Vector3::zeros(); 3],
            };
            let point_velocity = |state: &SimState| -> Vector3<f64> {
                let mut v = state.linear_velocity + state.angular_velocity.cross(&r);
                if let Some(l) = leg {
                    for j in 0..3 {
                        if !locked[3 * l + j] {
                            v += jac_w[j] * state.qd[3 * l + j];
                        }
                    }
                }
                v
            };
            let eff_w = |dir: &Vector3<f64>| -> f64 {
                let rxn = r.cross(dir);
                let mut w = ctx.inv_mass + rxn.dot(&(inertia_inv * rxn));
                if let Some(l) = leg {
                    for (j, jw) in jac_w.iter().enumerate() {
                        if !locked[3 * l + j] {
                            let g = jw.dot(dir);
                            w += g * g / ctx.joint_inertia;
                        }
                    }
                }
                w
            };
            let apply = |state: &mut SimState, imp: Vector3<f64>| {
                state.linear_velocity += imp * ctx.inv_mass;
                state.angular_velocity += inertia_inv * r.cross(&imp);
                if let Some(l) = leg {
                    for j in 0..3 {
                        if !locked[3 * l + j] {
                            state.qd[3 * l + j] += jac_w[j].dot(&imp) / ctx.joint_inertia;
                        }
                    }
                }
            };

            // normal: lambda = dt * (kn * p' + dn * pdot'), implicit in the
            // post-impulse penetration rate. Engagement is sticky for the
            // rest of the solve; the impulse solve itself handles a point
            // that turns out to separate, because its rhs goes negative and
            // the accumulated impulse falls back to zero.
            let n = Vector3::z();
            let pdot = -point_velocity(state).z;
            if c.penetration > 0.0 || c.penetration + dt * pdot > 0.0 {
                c.engaged = true;
            }
            if !c.engaged {
                continue;
            }
            let w_n = eff_w(&n);
            let rhs = dt * (kn * c.penetration.max(0.0) + gain * pdot) - c.normal_impulse;
            let delta = rhs / (1.0 + dt * gain * w_n);
            let new_total = (c.normal_impulse + delta).max(0.0);
            let applied = new_total - c.normal_impulse;
            c.normal_impulse = new_total;
            let vb = point_velocity(state);
            apply(state, n * applied);
            contact_work += (n * applied).dot(&(vb + point_velocity(state))) * 0.5;

            // friction: viscous tangential impulse capped by the cone
            let v_t = point_velocity(state);
            for (axis, dir) in [(0usize, Vector3::x()), (1, Vector3::y())] {
                let w_t = eff_w(&dir);
                let v_axis = v_t.dot(&dir);
                let delta =
                    (-kt * dt * v_axis - c.tangent_impulse[axis]) / (1.0 + kt * dt * w_t);
                c.tangent_impulse[axis] += delta;
                let vb = point_velocity(state);
                apply(state, dir * delta);
                contact_work += (dir * delta).dot(&(vb + point_velocity(state))) * 0.5;
            }
            let cap = mu * c.normal_impulse;
            let mag = (c.tangent_impulse[0].powi(2) + c.tangent_impulse[1].powi(2)).sqrt();
            if mag > cap && mag > 0.0 {
                let scale = cap / mag;
                let excess = [
                    c.tangent_impulse[0] * (scale - 1.0),
                    c.tangent_impulse[1] * (scale - 1.0),
                ];
                c.tangent_impulse[0] *= scale;
                c.tangent_impulse[1] *= scale;
                let imp = Vector3::new(excess[0], excess[1], 0.0);
                let vb = point_velocity(state);
                apply(state, imp);
                contact_work += imp.dot(&(vb + point_velocity(state))) * 0.5;
            }
        }
    }

    // position integration
    state.position += dt * state.linear_velocity;
    let w = state.angular_velocity;
    let angle = w.norm() * dt;
    if angle > 0.0 {
        let axis = nalgebra::Unit::new_normalize(w);
        state.orientation = UnitQuaternion::from_axis_angle(&axis, angle) * state.orientation;
    }
    state.orientation.renormalize();
    for j in 0..NUM_JOINTS {
        state.q[j] += dt * state.qd[j];
        let (lo, hi) = ctx.joint_limits[j];
        if state.q[j] < lo {
            state.q[j] = lo;
            state.qd[j] = state.qd[j].max(0.0);
        } else if state.q[j] > hi {
            state.q[j] = hi;
            state.qd[j] = state.qd[j].min(0.0);
        }
    }
    state.time += dt;

    state.diag_foot_tangent = [[0.0; 2]; NUM_LEGS];
    state.diag_other_tangent = [0.0; 2];
    state.diag_min_normal = f64::INFINITY;
    state.diag_contact_work = contact_work;
    for c in &contacts {
        state.diag_min_normal = state.diag_min_normal.min(c.normal_impulse);
    }
    for c in &contacts {
        match c.kind {
            AttachKind::Foot(l) => {
                state.diag_foot_tangent[l][0] += c.tangent_impulse[0];
                state.diag_foot_tangent[l][1] += c.tangent_impulse[1];
            }
            _ => {
                state.diag_other_tangent[0] += c.tangent_impulse[0];
                state.diag_other_tangent[1] += c.tangent_impulse[1];
            }
        }
    }
    for leg in 0..NUM_LEGS {
        state.foot_contacts[leg] = contacts
            .iter()
            .any(|c| c.kind == AttachKind::Foot(leg) && c.normal_impulse > 0.0);
    }

    if !state.is_finite() {
        return Err(Error::IntegrationDiverged { time: state.time });
    }
    Ok(())
}

/// Total mechanical energy: kinetic (base + joints), gravitational, and
/// penalty-spring storage of all penetrating contacts.
pub fn mechanical_energy(state: &SimState, ctx: &SimContext) -> f64 {
    let rot = state.orientation.to_rotation_matrix();
    let inertia_inv = ctx.world_inertia_inv(&rot);
    let inertia_w = inertia_inv.try_inverse().unwrap();
    let mut e = 0.5 * ctx.total_mass * state.linear_velocity.norm_squared()
        + 0.5 * state.angular_velocity.dot(&(inertia_w * state.angular_velocity))
        + ctx.total_mass * ctx.params.gravity * state.position.z;
    for qd in &state.qd {
        e += 0.5 * ctx.joint_inertia * qd * qd;
    }
    let contacts = leg_contact_geometry(ctx, &state.q);
    for c in &contacts {
        let world = state.position + rot * c.local;
        let radius = match c.kind {
            AttachKind::Knee(_) => ctx.knee_radius,
            _ => 0.0,
        };
        let p = radius - world.z;
        if p > 0.0 {
            e += 0.5 * ctx.params.contact_kn * p * p;
        }
    }
    e
}

/// Outcome of the 2 s stand-admission test.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AdmissionOutcome {
    Pass,
    Fail(AdmissionFailure),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AdmissionFailure {
    Collision,
    Tilt,
    Diverged,
}

impl AdmissionOutcome {
    pub fn passed(&self) -> bool {
        matches!(self, AdmissionOutcome::Pass)
    }
}

/// Simulates 2 s of standing at the nominal pose with q_des = q^n;
/// passes iff no collision termination and tilt stays below the limit.
pub fn stand_admission(
    cfg: &RobotConfiguration,
    model: &ReferenceModel,
    params: SimParams,
) -> AdmissionOutcome {
    let ctx = match SimContext::new(cfg, model, params) {
        Ok(c) => c,
        Err(_) => return AdmissionOutcome::Fail(AdmissionFailure::Diverged),
    };
    let mut state = ctx.standing_state();
    let steps = (2.0 / ctx.params.dt).round() as usize;
    let q_des = ctx.q_nominal;
    for _ in 0..steps {
        if step(&mut state, &ctx, &q_des, Vector3::zeros()).is_err() {
            return AdmissionOutcome::Fail(AdmissionFailure::Diverged);
        }
        if episode::detect_collision(&state, &ctx).is_some() {
            return AdmissionOutcome::Fail(AdmissionFailure::Collision);
        }
        if state.upright_cos() < ctx.params.tilt_limit.cos() {
            return AdmissionOutcome::Fail(AdmissionFailure::Tilt);
        }
    }
    AdmissionOutcome::Pass
}
