//! Episode rollout: command protocols, reward accounting, tracking
//! indicators, and early-termination handling.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::curriculum::{nu_lin, nu_zero, TrackingRecord};
use crate::error::{Error, Result};
use crate::model::{leg_points, NUM_JOINTS, NUM_LEGS};
use crate::policy::{Policy, PolicyInput};
use crate::rng::Stream;
use crate::sampling::{sample_command, Command};
use crate::sim::{step, SimContext, SimState};

/// Reward discount per control step.
pub const DISCOUNT: f64 = 0.997;
/// One-off penalty applied when an episode terminates early.
pub const EARLY_TERMINATION_PENALTY: f64 = -0.25;

/// Per-term reward weights, in the order of [`RewardTerms::as_array`].
pub const REWARD_WEIGHTS: [f64; 13] = [
    3.0,    // linear velocity tracking
    1.5,    // yaw rate tracking
    -5.0,   // flat body orientation
    -20.0,  // body height deviation
    -0.5,   // undesired vertical / roll / pitch motion
    -0.2,   // foot slip
    -6.0,   // excessive foot air time
    -0.2,   // joint position deviation
    -3.0e-4, // joint velocity
    -2.0e-7, // joint acceleration
    -3.0e-5, // joint torque
    -0.12,  // action rate
    -0.05,  // action curvature
];

const AIR_TIME_LIMIT: f64 = 0.5;
const SELF_COLLISION_RADIUS: f64 = 0.04;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TerminationCause {
    BodyGroundCollision,
    SelfCollision,
    Tilt,
    Diverged,
}

/// Mean weighted contribution of each reward term over an episode.
#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize)]
pub struct RewardTerms {
    pub lin_velocity: f64,
    pub yaw_rate: f64,
    pub orientation: f64,
    pub height: f64,
    pub undesired_motion: f64,
    pub foot_slip: f64,
    pub air_time: f64,
    pub joint_position: f64,
    pub joint_velocity: f64,
    pub joint_acceleration: f64,
    pub joint_torque: f64,
    pub action_rate: f64,
    pub action_curvature: f64,
}

impl RewardTerms {
    pub fn as_array(&self) -> [f64; 13] {
        [
            self.lin_velocity,
            self.yaw_rate,
            self.orientation,
            self.height,
            self.undesired_motion,
            self.foot_slip,
            self.air_time,
            self.joint_position,
            self.joint_velocity,
            self.joint_acceleration,
            self.joint_torque,
            self.action_rate,
            self.action_curvature,
        ]
    }

    pub fn total(&self) -> f64 {
        self.as_array().iter().sum()
    }

    fn accumulate(&mut self, step: &[f64; 13]) {
        let arr = [
            &mut self.lin_velocity,
            &mut self.yaw_rate,
            &mut self.orientation,
            &mut self.height,
            &mut self.undesired_motion,
            &mut self.foot_slip,
            &mut self.air_time,
            &mut self.joint_position,
            &mut self.joint_velocity,
            &mut self.joint_acceleration,
            &mut self.joint_torque,
            &mut self.action_rate,
            &mut self.action_curvature,
        ];
        for (slot, v) in arr.into_iter().zip(step) {
            *slot += v;
        }
    }

    fn scale(&mut self, f: f64) {
        self.lin_velocity *= f;
        self.yaw_rate *= f;
        self.orientation *= f;
        self.height *= f;
        self.undesired_motion *= f;
        self.foot_slip *= f;
        self.air_time *= f;
        self.joint_position *= f;
        self.joint_velocity *= f;
        self.joint_acceleration *= f;
        self.joint_torque *= f;
        self.action_rate *= f;
        self.action_curvature *= f;
    }
}

/// Sustained world-frame push on the base.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct PushSpec {
    pub force: [f64; 3],
    pub start: f64,
    pub duration: f64,
}

#[derive(Debug, Clone, Default)]
pub struct EpisodeOptions {
    pub push: Option<PushSpec>,
    pub friction_override: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EpisodeResult {
    pub terminated: Option<TerminationCause>,
    pub sim_time: f64,
    pub control_steps: usize,
    pub lin_hits: usize,
    pub lin_total: usize,
    pub zero_hits: usize,
    pub zero_total: usize,
    pub reward_terms: RewardTerms,
    pub mean_reward: f64,
    pub discounted_return: f64,
}

impl EpisodeResult {
    /// Tracking ratios; segments with no steps of a kind report 0.
    pub fn tracking_record(&self) -> TrackingRecord {
        let ratio = |hits: usize, total: usize| {
            if total == 0 {
                0.0
            } else {
                hits as f64 / total as f64
            }
        };
        TrackingRecord {
            tr_lin: ratio(self.lin_hits, self.lin_total),
            tr_zero: ratio(self.zero_hits, self.zero_total),
            steps_lin: self.lin_total,
            steps_zero: self.zero_total,
        }
    }

    pub fn completed(&self) -> bool {
        self.terminated.is_none()
    }
}

/// A sequence of velocity commands covering at least `total_s` seconds.
pub fn random_protocol(total_s: f64, rng: &mut Stream) -> Vec<Command> {
    let mut out = Vec::new();
    let mut t = 0.0;
    while t < total_s {
        let c = sample_command(rng);
        t += c.duration;
        out.push(c);
    }
    out
}

pub(crate) fn detect_collision(state: &SimState, ctx: &SimContext) -> Option<TerminationCause> {
    let rot = state.orientation.to_rotation_matrix();
    let base = state.position;
    let [hx, hy, hz] = ctx.base_half_extents;
    for &sx in &[-1.0f64, 1.0] {
        for &sy in &[-1.0f64, 1.0] {
            for &sz in &[-1.0f64, 1.0] {
                let p = base + rot * (Vector3::new(sx * hx, sy * hy, sz * hz) - ctx.com);
                if p.z < 0.0 {
                    return Some(TerminationCause::BodyGroundCollision);
                }
            }
        }
    }
    let mut knees = [Vector3::zeros(); NUM_LEGS];
    let mut feet = [Vector3::zeros(); NUM_LEGS];
    for leg in 0..NUM_LEGS {
        let q = [state.q[3 * leg], state.q[3 * leg + 1], state.q[3 * leg + 2]];
        let (_, knee, foot) = leg_points(&ctx.cfg_params, ctx.leg_type, leg, q);
        let knee_w = base + rot * (knee - ctx.com);
        if knee_w.z < ctx.knee_radius {
            return Some(TerminationCause::BodyGroundCollision);
        }
        knees[leg] = knee_w;
        feet[leg] = base + rot * (foot - ctx.com);
    }
    for a in 0..NUM_LEGS {
        for b in (a + 1)..NUM_LEGS {
            if (feet[a] - feet[b]).norm() < SELF_COLLISION_RADIUS
                || (knees[a] - knees[b]).norm() < 2.0 * ctx.knee_radius
            {
                return Some(TerminationCause::SelfCollision);
            }
        }
    }
    None
}

/// Rolls out one episode from the standing pose under the given command
/// protocol and policy.
pub fn run_episode(
    ctx: &SimContext,
    policy: &mut dyn Policy,
    protocol: &[Command],
    options: &EpisodeOptions,
) -> Result<EpisodeResult> {
    if protocol.is_empty() {
        return Err(Error::domain("episode needs at least one command"));
    }
    let mut ctx = ctx.clone();
    if let Some(mu) = options.friction_override {
        ctx.friction = mu;
    }
    let ctrl_dt = ctx.params.control_dt();
    let mut state = ctx.standing_state();
    let nominal_height = state.position.z;
    let total_time: f64 = protocol.iter().map(|c| c.duration).sum();
    let total_steps = (total_time / ctrl_dt).round() as usize;

    let mut segment = 0usize;
    let mut segment_end = protocol[0].duration;

    let mut prev_q_des = ctx.q_nominal;
    let mut prev2_q_des = ctx.q_nominal;
    let mut prev_qd = state.qd;
    let mut air_time = [0.0f64; NUM_LEGS];

    let mut terms = RewardTerms::default();
    let mut discounted = 0.0;
    let mut reward_sum = 0.0;
    let mut terminated = None;
    let mut lin_hits = 0;
    let mut lin_total = 0;
    let mut zero_hits = 0;
    let mut zero_total = 0;
    let mut steps_done = 0usize;

    'outer: for k in 0..total_steps {
        let t = k as f64 * ctrl_dt;
        while t >= segment_end - 1e-12 && segment + 1 < protocol.len() {
            segment += 1;
            segment_end += protocol[segment].duration;
        }
        let cmd = protocol[segment];

        let mut offsets = [0.0; NUM_JOINTS];
        for j in 0..NUM_JOINTS {
            offsets[j] = state.q[j] - ctx.q_nominal[j];
        }
        let input = PolicyInput {
            gravity_axis: state.gravity_axis(),
            angular_velocity: state.body_angular_velocity(),
            joint_offsets: offsets,
            joint_velocities: state.qd,
            prev_desired: prev_q_des,
            command: cmd,
        };
        let q_des = policy.act(&input);
        policy.tick(ctrl_dt);

        let mut force = Vector3::zeros();
        if let Some(push) = options.push {
            if t >= push.start && t < push.start + push.duration {
                force = Vector3::new(push.force[0], push.force[1], push.force[2]);
            }
        }
        let mut tau_sq = 0.0;
        for _ in 0..ctx.params.control_substeps {
            let tau = super::pd_torque(&q_des, &state.q, &state.qd, &ctx.gains, &ctx.torque_limits);
            tau_sq = tau.iter().map(|t| t * t).sum();
            if step(&mut state, &ctx, &q_des, force).is_err() {
                terminated = Some(TerminationCause::Diverged);
                break 'outer;
            }
        }
        steps_done = k + 1;

        if let Some(cause) = detect_collision(&state, &ctx) {
            terminated = Some(cause);
            break;
        }
        if state.upright_cos() < ctx.params.tilt_limit.cos() {
            terminated = Some(TerminationCause::Tilt);
            break;
        }

        let v_body = state.body_linear_velocity();
        let w_body = state.body_angular_velocity();

        if cmd.is_zero() {
            zero_total += 1;
            if nu_zero([v_body.x, v_body.y, w_body.z]) {
                zero_hits += 1;
            }
        } else if cmd.v_x != 0.0 || cmd.v_y != 0.0 {
            lin_total += 1;
            if nu_lin([v_body.x, v_body.y], [cmd.v_x, cmd.v_y])? {
                lin_hits += 1;
            }
        }

        // per-step weighted reward terms
        let g = state.gravity_axis();
        let lin_err = (v_body.x - cmd.v_x).powi(2) + (v_body.y - cmd.v_y).powi(2);
        let yaw_err = (w_body.z - cmd.omega_z).powi(2);
        let mut slip = 0.0;
        let rot = state.orientation.to_rotation_matrix();
        for leg in 0..NUM_LEGS {
            if state.foot_contacts[leg] {
                let q = [state.q[3 * leg], state.q[3 * leg + 1], state.q[3 * leg + 2]];
                let foot = leg_points(&ctx.cfg_params, ctx.leg_type, leg, q).2;
                let r = rot * (foot - ctx.com);
                let v = state.linear_velocity + state.angular_velocity.cross(&r);
                slip += v.x * v.x + v.y * v.y;
                air_time[leg] = 0.0;
            } else {
                air_time[leg] += ctrl_dt;
            }
        }
        let air_excess: f64 = air_time
            .iter()
            .map(|&a| if a > AIR_TIME_LIMIT { ctrl_dt } else { 0.0 })
            .sum();
        let mut q_dev = 0.0;
        let mut qd_sq = 0.0;
        let mut qdd_sq = 0.0;
        let mut rate = 0.0;
        let mut curvature = 0.0;
        for j in 0..NUM_JOINTS {
            q_dev += (state.q[j] - ctx.q_nominal[j]).powi(2);
            qd_sq += state.qd[j] * state.qd[j];
            qdd_sq += ((state.qd[j] - prev_qd[j]) / ctrl_dt).powi(2);
            rate += (q_des[j] - prev_q_des[j]).powi(2);
            curvature += (q_des[j] - 2.0 * prev_q_des[j] + prev2_q_des[j]).powi(2);
        }
        let bases = [
            (-lin_err / 0.25).exp(),
            (-yaw_err / 0.25).exp(),
            g.x * g.x + g.y * g.y,
            (state.position.z - nominal_height).powi(2),
            v_body.z * v_body.z + w_body.x * w_body.x + w_body.y * w_body.y,
            slip,
            air_excess,
            q_dev,
            qd_sq,
            qdd_sq,
            tau_sq,
            rate,
            curvature,
        ];
        let mut weighted = [0.0; 13];
        let mut r_step = 0.0;
        for i in 0..13 {
            weighted[i] = REWARD_WEIGHTS[i] * bases[i];
            r_step += weighted[i];
        }
        terms.accumulate(&weighted);
        reward_sum += r_step;
        discounted += DISCOUNT.powi(k as i32) * r_step;

        prev2_q_des = prev_q_des;
        prev_q_des = q_des;
        prev_qd = state.qd;
    }

    if terminated.is_some() {
        discounted += DISCOUNT.powi(steps_done as i32) * EARLY_TERMINATION_PENALTY;
    }
    let n = steps_done.max(1) as f64;
    terms.scale(1.0 / n);

    Ok(EpisodeResult {
        terminated,
        sim_time: state.time,
        control_steps: steps_done,
        lin_hits,
        lin_total,
        zero_hits,
        zero_total,
        reward_terms: terms,
        mean_reward: reward_sum / n,
        discounted_return: discounted,
    })
}

/// Fraction of episodes that ran to completion.
pub fn success_rate(results: &[EpisodeResult]) -> Result<f64> {
    if results.is_empty() {
        return Err(Error::UndefinedMetric("success rate of zero episodes".into()));
    }
    let ok = results.iter().filter(|r| r.completed()).count();
    Ok(ok as f64 / results.len() as f64)
}
