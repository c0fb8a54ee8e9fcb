//! Policy interface consumed by the simulator, plus the built-in
//! heuristic policies (stance hold and an open-loop trot generator).
//!
//! These are evaluation stand-ins, not learned controllers.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::model::{leg_points, leg_signs, slots, LegType, RobotConfiguration, NUM_JOINTS};
use crate::sampling::Command;

/// Observation handed to a policy at every control tick.
#[derive(Debug, Clone)]
pub struct PolicyInput {
    /// World up axis expressed in the base frame (unit vector).
    pub gravity_axis: Vector3<f64>,
    /// Base angular velocity in the base frame.
    pub angular_velocity: Vector3<f64>,
    /// Joint offsets from the nominal positions.
    pub joint_offsets: [f64; NUM_JOINTS],
    pub joint_velocities: [f64; NUM_JOINTS],
    /// Previous desired joint positions (slew reference).
    pub prev_desired: [f64; NUM_JOINTS],
    pub command: Command,
}

impl PolicyInput {
    pub fn is_finite(&self) -> bool {
        self.gravity_axis.iter().all(|v| v.is_finite())
            && self.angular_velocity.iter().all(|v| v.is_finite())
            && self.joint_offsets.iter().all(|v| v.is_finite())
            && self.joint_velocities.iter().all(|v| v.is_finite())
            && self.prev_desired.iter().all(|v| v.is_finite())
    }
}

/// Maps observations to desired joint positions; gait phase advances
/// only through the explicit `tick`.
pub trait Policy {
    fn act(&mut self, input: &PolicyInput) -> [f64; NUM_JOINTS];
    fn tick(&mut self, _dt: f64) {}
}

/// Holds the nominal joint configuration.
#[derive(Debug, Clone)]
pub struct StancePolicy {
    q_nominal: [f64; NUM_JOINTS],
}

impl StancePolicy {
    pub fn new(cfg: &RobotConfiguration) -> Self {
        let mut q = [0.0; NUM_JOINTS];
        q.copy_from_slice(cfg.nominal_joint_positions());
        StancePolicy { q_nominal: q }
    }
}

impl Policy for StancePolicy {
    fn act(&mut self, _input: &PolicyInput) -> [f64; NUM_JOINTS] {
        self.q_nominal
    }
}

/// Gait fixture constants; lengths scale with leg reach.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct GaitParams {
    pub cycle: f64,
    pub duty: f64,
    /// Swing apex height for a 0.41 m reference leg, scaled by reach.
    pub step_height: f64,
    /// Max change of any desired joint per control tick.
    pub slew_limit: f64,
    /// Base-tilt foot-height feedback gain.
    pub tilt_gain: f64,
    /// Foothold placement gain on the body-velocity error, seconds.
    pub fb_gain: f64,
    /// Stance-leg extension gain on the measured body-height droop.
    pub height_gain: f64,
}

impl Default for GaitParams {
    fn default() -> Self {
        GaitParams {
            cycle: 0.4,
            duty: 0.55,
            step_height: 0.06,
            slew_limit: 0.25,
            tilt_gain: 0.5,
            fb_gain: 0.1,
            height_gain: 1.0,
        }
    }
}

/// Open-loop trot generator with velocity-proportional stride and
/// per-leg inverse kinematics of the 3-joint chain.
#[derive(Debug, Clone)]
pub struct TrotPolicy {
    params: Vec<f64>,
    leg_type: LegType,
    joint_limits: Vec<(f64, f64)>,
    q_nominal: [f64; NUM_JOINTS],
    nominal_feet: [Vector3<f64>; 4],
    reach: f64,
    gait: GaitParams,
    phase: f64,
    elapsed: f64,
    v_filt: Vector3<f64>,
}

const REFERENCE_REACH: f64 = 0.41;

impl TrotPolicy {
    pub fn new(cfg: &RobotConfiguration, joint_limits: &[(f64, f64)], gait: GaitParams) -> Self {
        let mut q_nominal = [0.0; NUM_JOINTS];
        q_nominal.copy_from_slice(cfg.nominal_joint_positions());
        let mut nominal_feet = [Vector3::zeros(); 4];
        for leg in 0..4 {
            let q = [q_nominal[3 * leg], q_nominal[3 * leg + 1], q_nominal[3 * leg + 2]];
            nominal_feet[leg] = leg_points(&cfg.params, cfg.leg_type, leg, q).2;
        }
        TrotPolicy {
            params: cfg.params.clone(),
            leg_type: cfg.leg_type,
            joint_limits: joint_limits.to_vec(),
            q_nominal,
            nominal_feet,
            reach: crate::model::leg_reach(&cfg.params),
            gait,
            // both diagonal pairs mid-phase so targets start at nominal
            phase: 0.275,
            elapsed: 0.0,
            v_filt: Vector3::zeros(),
        }
    }

    /// Diagonal pairs: FL/HR at phase 0, FR/HL at half cycle.
    pub fn leg_phase(&self, leg: usize) -> f64 {
        let offset = match leg {
            0 | 3 => 0.0,
            _ => 0.5,
        };
        (self.phase + offset).fract()
    }

    /// Body height inferred from the lowest foot of the measured joint
    /// configuration; swing clearance is referenced to it so a sagging
    /// base does not cause early, forward-moving touchdowns.
    fn estimated_ground_z(&self, input: &PolicyInput) -> f64 {
        let mut z_min = f64::INFINITY;
        for leg in 0..4 {
            let q = [
                self.q_nominal[3 * leg] + input.joint_offsets[3 * leg],
                self.q_nominal[3 * leg + 1] + input.joint_offsets[3 * leg + 1],
                self.q_nominal[3 * leg + 2] + input.joint_offsets[3 * leg + 2],
            ];
            let foot = leg_points(&self.params, self.leg_type, leg, q).2;
            z_min = z_min.min(foot.z);
        }
        if z_min.is_finite() {
            z_min
        } else {
            self.nominal_feet[0].z
        }
    }

    /// Body-frame planar velocity estimated from the leg kinematics of
    /// the legs currently in their stance window: a grounded foot is
    /// stationary, so the base moves at minus its kinematic velocity.
    fn estimated_velocity(&self, input: &PolicyInput) -> Vector3<f64> {
        let h = 1e-5;
        let mut sum = Vector3::zeros();
        let mut n = 0.0;
        for leg in 0..4 {
            if self.leg_phase(leg) >= self.gait.duty {
                continue;
            }
            let mut q = [0.0; 3];
            let mut qd = [0.0; 3];
            for j in 0..3 {
                q[j] = self.q_nominal[3 * leg + j] + input.joint_offsets[3 * leg + j];
                qd[j] = input.joint_velocities[3 * leg + j];
            }
            let mut v = Vector3::zeros();
            for j in 0..3 {
                let mut qp = q;
                let mut qm = q;
                qp[j] += h;
                qm[j] -= h;
                let fp = leg_points(&self.params, self.leg_type, leg, qp).2;
                let fm = leg_points(&self.params, self.leg_type, leg, qm).2;
                v += (fp - fm) * (qd[j] / (2.0 * h));
            }
            sum += -v;
            n += 1.0;
        }
        if n > 0.0 {
            Vector3::new(sum.x / n, sum.y / n, 0.0)
        } else {
            Vector3::zeros()
        }
    }

    fn foot_target(
        &self,
        leg: usize,
        input: &PolicyInput,
        ground_z: f64,
        v_est: Vector3<f64>,
    ) -> Vector3<f64> {
        let cmd = &input.command;
        let p0 = self.nominal_feet[leg];
        // commanded ground velocity of this foot relative to the base
        let v = Vector3::new(
            cmd.v_x - cmd.omega_z * p0.y,
            cmd.v_y + cmd.omega_z * p0.x,
            0.0,
        );
        let speed = (v.x * v.x + v.y * v.y).sqrt();
        // fade stepping out near zero command and in over the first cycle
        let soft_start = (self.elapsed / self.gait.cycle).min(1.0);
        let amp = (speed / 0.3).min(1.0) * soft_start;
        let stride = v * (self.gait.duty * self.gait.cycle) * soft_start;
        // foothold velocity feedback: too fast lands the foot further
        // ahead (braking), too slow lands it behind (accelerating)
        let max_fb = 0.3 * self.reach;
        let fb = Vector3::new(
            (self.gait.fb_gain * (v_est.x - cmd.v_x)).clamp(-max_fb, max_fb),
            (self.gait.fb_gain * (v_est.y - cmd.v_y)).clamp(-max_fb, max_fb),
            0.0,
        ) * soft_start;
        let phi = self.leg_phase(leg);
        let mut target = p0;
        // PD tracking droops under load; extend stance legs by the
        // measured sag so the body height recovers
        let sag = (ground_z - p0.z).max(0.0);
        if phi < self.gait.duty || amp == 0.0 {
            target.z -= self.gait.height_gain * sag;
        }
        if amp > 0.0 {
            if phi < self.gait.duty {
                let u = phi / self.gait.duty;
                target += stride * (0.5 - u) + fb * (1.0 - u);
            } else {
                let u = (phi - self.gait.duty) / (1.0 - self.gait.duty);
                // smoothstep sweep: zero horizontal foot speed at lift-off
                // and touchdown, so early contacts do not kick the base
                let sweep = u * u * (3.0 - 2.0 * u);
                target += (stride * 0.5 + fb) * sweep + stride * -0.5 * (1.0 - sweep);
                let lift = self.gait.step_height * (self.reach / REFERENCE_REACH) * amp;
                target.z = ground_z + lift * (std::f64::consts::PI * u).sin();
            }
        }
        // lengthen legs on the dipped side to push the base level again
        let g = &input.gravity_axis;
        target.z += self.gait.tilt_gain * (g.x * p0.x + g.y * p0.y);
        target
    }
}

impl Policy for TrotPolicy {
    fn act(&mut self, input: &PolicyInput) -> [f64; NUM_JOINTS] {
        let mut q_des = [0.0; NUM_JOINTS];
        let ground_z = self.estimated_ground_z(input);
        // kinematic velocity estimates are noisy; low-pass before use
        let raw = self.estimated_velocity(input);
        self.v_filt += (raw - self.v_filt) * 0.08;
        let v_est = self.v_filt;
        for leg in 0..4 {
            let target = self.foot_target(leg, input, ground_z, v_est);
            let q = leg_ik(&self.params, self.leg_type, leg, &target);
            q_des[3 * leg..3 * leg + 3].copy_from_slice(&q);
        }
        for j in 0..NUM_JOINTS {
            let (lo, hi) = self.joint_limits[j];
            q_des[j] = q_des[j].clamp(lo, hi);
            let prev = input.prev_desired[j];
            q_des[j] = q_des[j].clamp(prev - self.gait.slew_limit, prev + self.gait.slew_limit);
        }
        q_des
    }

    fn tick(&mut self, dt: f64) {
        self.phase = (self.phase + dt / self.gait.cycle).fract();
        self.elapsed += dt;
    }
}

/// Analytic inverse kinematics of the 3-revolute leg chain for a foot
/// target in the base frame. Exact for the file's chain structure;
/// unreachable targets are projected onto the workspace boundary.
pub fn leg_ik(params: &[f64], leg_type: LegType, leg: usize, target: &Vector3<f64>) -> [f64; 3] {
    let off = &params[slots::LINK_OFFSETS..slots::LINK_OFFSETS + 9];
    let (sx, sy) = leg_signs(leg);
    let sp = match leg_type {
        LegType::A => 1.0,
        LegType::X => {
            if leg < 2 {
                -1.0
            } else {
                1.0
            }
        }
    };

    let p1 = Vector3::new(sx * off[0], sy * off[1], off[2]);
    let p = target - p1;

    // abduction: the rest of the chain sits at a fixed lateral offset in
    // the abduction-rotated frame
    let d_lat = sy * (off[4] + off[7]);
    let r = (p.y * p.y + p.z * p.z).sqrt().max(1e-9);
    let d = d_lat.clamp(-r, r);
    let q1 = (p.y).atan2(-p.z) - d.atan2((r * r - d * d).max(0.0).sqrt());

    // un-rotate into the pitch plane and drop the c2 offset
    let (s1, c1) = q1.sin_cos();
    let pz = -s1 * p.y + c1 * p.z;
    let x = p.x - sx * off[3];
    let z = pz - off[5];

    // planar links as (length, phase): Ry(theta) * v traces
    // (-L sin(theta + delta), -L cos(theta + delta)) with
    // delta = atan2(-vx, -vz)
    let l1v = (sx * off[6], off[8]);
    let l2v = (0.0, params[slots::FOOT_OFFSET_Z]);
    let link = |v: (f64, f64)| {
        let len = (v.0 * v.0 + v.1 * v.1).sqrt();
        ((-v.0).atan2(-v.1), len)
    };
    let (d1, l1) = link(l1v);
    let (d2, l2) = link(l2v);

    let xp = -x;
    let zp = -z;
    let mut rho2 = xp * xp + zp * zp;
    let max_r = (l1 + l2) * 0.999;
    if rho2 > max_r * max_r {
        rho2 = max_r * max_r;
    }
    let cos_psi2 = ((rho2 - l1 * l1 - l2 * l2) / (2.0 * l1 * l2)).clamp(-1.0, 1.0);
    // knee branch matching the shared (negative) nominal flexion
    let psi2 = -sp * cos_psi2.acos();
    let psi1 = xp.atan2(zp) - (l2 * psi2.sin()).atan2(l1 + l2 * psi2.cos());

    let alpha = psi1 - d1;
    let beta = psi2 - d2 + d1;
    [q1, sp * alpha, sp * beta]
}
