//! Reference quadruped models and sampled robot configurations.
//!
//! A configuration is a flat 51-slot parameter vector (see [`slots`])
//! plus per-joint PD gains and a categorical leg type. Slot order is
//! fixed so normalized L2 distances are comparable across all
//! configurations of a run.
//!
//! Kinematic convention: each leg is a 3-revolute serial chain
//! (abduction about x, hip pitch about y, knee pitch about y) with a
//! point foot. Leg order is FL, FR, HL, HR; x offsets are mirrored for
//! hind legs, y offsets for right legs. Leg type X mirrors the pitch
//! joints of the front pair so knees point toward the base. The data
//! file documents the same convention next to the numbers.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use nalgebra::{Rotation3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sampling::{PdRange, PdStrategy};

pub const NUM_LEGS: usize = 4;
pub const NUM_JOINTS: usize = 12;

/// Flat parameter-vector layout shared by all configurations.
pub mod slots {
    pub const BASE_MASS: usize = 0;
    /// 12 limb masses, leg-major (FL, FR, HL, HR) x (hip, thigh, shank).
    pub const LIMB_MASS: usize = 1;
    pub const COM: usize = 13;
    /// 9 link-offset components: c1, c2, c3 each xyz.
    pub const LINK_OFFSETS: usize = 16;
    pub const FOOT_OFFSET_Z: usize = 25;
    pub const NOMINAL_JOINTS: usize = 26;
    pub const TORQUE_LIMITS: usize = 38;
    pub const FRICTION: usize = 50;
    pub const LEN: usize = 51;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LegType {
    /// Knees pointing backward on all legs.
    A,
    /// Knees pointing toward the base (front pair pitch-mirrored).
    X,
}

impl fmt::Display for LegType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LegType::A => write!(f, "A"),
            LegType::X => write!(f, "X"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Uniform,
    SrClipped,
    ParticleWalk,
    Replay,
    Nominal,
}

/// Nominal morphology/actuation parameter set for one quadruped archetype.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReferenceModel {
    pub name: String,
    pub leg_type: LegType,
    /// Nominal value per slot, `slots::LEN` entries.
    pub params_nominal: Vec<f64>,
    /// Closed `[min, max]` sampling envelope per slot.
    pub parameter_ranges: Vec<(f64, f64)>,
    /// Nominal (K_p, K_d) pair shared across joints.
    pub pd_nominal: (f64, f64),
    pub total_mass_nominal: f64,
    /// Per-joint position limits (lo, hi), 12 entries.
    pub joint_limits: Vec<(f64, f64)>,
    /// Reflected rotor+link inertia used by the decoupled joint dynamics.
    pub reflected_inertia: f64,
    pub base_half_extents: [f64; 3],
    pub knee_radius: f64,
}

impl ReferenceModel {
    pub fn base_mass(&self) -> f64 {
        self.params_nominal[slots::BASE_MASS]
    }

    pub fn nominal_joint_positions(&self) -> &[f64] {
        &self.params_nominal[slots::NOMINAL_JOINTS..slots::NOMINAL_JOINTS + NUM_JOINTS]
    }

    fn validate(&self) -> Result<()> {
        let key = |s: &str| format!("models.{}.{}", self.name, s);
        if self.params_nominal.len() != slots::LEN || self.parameter_ranges.len() != slots::LEN {
            return Err(Error::validation(key("params"), "bad parameter vector length"));
        }
        if self.base_mass() <= 0.0 {
            return Err(Error::validation(key("base_mass"), "must be > 0"));
        }
        for i in 0..NUM_JOINTS {
            if self.params_nominal[slots::LIMB_MASS + i] <= 0.0 {
                return Err(Error::validation(key("limb_masses"), "must be > 0"));
            }
            if self.params_nominal[slots::TORQUE_LIMITS + i] <= 0.0 {
                return Err(Error::validation(key("torque_limit"), "must be > 0"));
            }
        }
        if self.pd_nominal.0 <= 0.0 {
            return Err(Error::validation(key("pd_nominal"), "K_p must be > 0"));
        }
        if self.pd_nominal.1 < 0.0 {
            return Err(Error::validation(key("pd_nominal"), "K_d must be >= 0"));
        }
        let mass_sum: f64 = self.params_nominal[slots::BASE_MASS]
            + self.params_nominal[slots::LIMB_MASS..slots::LIMB_MASS + NUM_JOINTS]
                .iter()
                .sum::<f64>();
        if ((mass_sum - self.total_mass_nominal) / self.total_mass_nominal).abs() > 1e-9 {
            return Err(Error::validation(
                key("total_mass_nominal"),
                "does not equal base + limb mass sum",
            ));
        }
        for (i, &(lo, hi)) in self.parameter_ranges.iter().enumerate() {
            let n = self.params_nominal[i];
            if !(lo <= n && n <= hi) {
                return Err(Error::validation(
                    key("parameter_ranges"),
                    format!("slot {i} nominal {n} outside [{lo}, {hi}]"),
                ));
            }
        }
        Ok(())
    }
}

/// One sampled parameter vector plus PD gains and leg type.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobotConfiguration {
    /// Name of the source reference model.
    pub reference: String,
    pub params: Vec<f64>,
    /// (K_p, K_d) per joint, 12 pairs.
    pub pd_gains: Vec<(f64, f64)>,
    pub leg_type: LegType,
    pub provenance: Provenance,
}

impl RobotConfiguration {
    pub fn total_mass(&self) -> f64 {
        self.params[slots::BASE_MASS]
            + self.params[slots::LIMB_MASS..slots::LIMB_MASS + NUM_JOINTS]
                .iter()
                .sum::<f64>()
    }

    pub fn com(&self) -> Vector3<f64> {
        Vector3::new(
            self.params[slots::COM],
            self.params[slots::COM + 1],
            self.params[slots::COM + 2],
        )
    }

    pub fn nominal_joint_positions(&self) -> &[f64] {
        &self.params[slots::NOMINAL_JOINTS..slots::NOMINAL_JOINTS + NUM_JOINTS]
    }

    pub fn torque_limits(&self) -> &[f64] {
        &self.params[slots::TORQUE_LIMITS..slots::TORQUE_LIMITS + NUM_JOINTS]
    }

    pub fn friction(&self) -> f64 {
        self.params[slots::FRICTION]
    }

    /// Checks the post-clipping invariants against the source envelope.
    pub fn validate(&self, model: &ReferenceModel) -> Result<()> {
        if self.params.len() != slots::LEN {
            return Err(Error::validation("params", "bad length"));
        }
        for (i, &x) in self.params.iter().enumerate() {
            let (lo, hi) = model.parameter_ranges[i];
            if !(x >= lo - 1e-12 && x <= hi + 1e-12) {
                return Err(Error::validation(
                    "params",
                    format!("slot {i} value {x} outside envelope [{lo}, {hi}]"),
                ));
            }
        }
        if self.pd_gains.len() != NUM_JOINTS {
            return Err(Error::validation("pd_gains", "bad length"));
        }
        for &(kp, kd) in &self.pd_gains {
            if kp <= 0.0 || kd < 0.0 {
                return Err(Error::validation("pd_gains", "K_p > 0, K_d >= 0 required"));
            }
        }
        Ok(())
    }

    pub fn normalize(&self, model: &ReferenceModel) -> NormalizedParamVector {
        NormalizedParamVector {
            values: self
                .params
                .iter()
                .zip(&model.parameter_ranges)
                .map(|(&x, &(lo, hi))| if hi > lo { (x - lo) / (hi - lo) } else { 0.5 })
                .collect(),
        }
    }

    /// Normalized L2 distance to another configuration of the same model,
    /// excluding the categorical leg type.
    pub fn normalized_distance(&self, other: &RobotConfiguration, model: &ReferenceModel) -> f64 {
        let a = self.normalize(model);
        let b = other.normalize(model);
        a.values
            .iter()
            .zip(&b.values)
            .map(|(x, y)| (x - y) * (x - y))
            .sum::<f64>()
            .sqrt()
    }
}

/// Unitless per-slot coordinates in [0, 1] against a model envelope.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizedParamVector {
    pub values: Vec<f64>,
}

impl NormalizedParamVector {
    pub fn denormalize(&self, model: &ReferenceModel) -> Vec<f64> {
        self.values
            .iter()
            .zip(&model.parameter_ranges)
            .map(|(&u, &(lo, hi))| lo + u * (hi - lo))
            .collect()
    }
}

/// All slots of the nominal configuration, provenance `Nominal`.
pub fn nominal_configuration(model: &ReferenceModel) -> RobotConfiguration {
    RobotConfiguration {
        reference: model.name.clone(),
        params: model.params_nominal.clone(),
        pd_gains: vec![model.pd_nominal; NUM_JOINTS],
        leg_type: model.leg_type,
        provenance: Provenance::Nominal,
    }
}

pub fn total_mass(cfg: &RobotConfiguration) -> f64 {
    cfg.total_mass()
}

// ---------------------------------------------------------------------------
// Forward kinematics

/// Per-leg mirror signs, leg order FL, FR, HL, HR.
pub fn leg_signs(leg: usize) -> (f64, f64) {
    let sx = if leg < 2 { 1.0 } else { -1.0 };
    let sy = if leg % 2 == 0 { 1.0 } else { -1.0 };
    (sx, sy)
}

fn pitch_sign(leg_type: LegType, leg: usize) -> f64 {
    match leg_type {
        LegType::A => 1.0,
        // front pair mirrored: knees point toward the base
        LegType::X => {
            if leg < 2 {
                -1.0
            } else {
                1.0
            }
        }
    }
}

/// Joint-frame positions of one leg in the base frame:
/// (hip attachment, knee joint, foot point).
pub fn leg_points(
    params: &[f64],
    leg_type: LegType,
    leg: usize,
    q_leg: [f64; 3],
) -> (Vector3<f64>, Vector3<f64>, Vector3<f64>) {
    let off = &params[slots::LINK_OFFSETS..slots::LINK_OFFSETS + 9];
    let (sx, sy) = leg_signs(leg);
    let sp = pitch_sign(leg_type, leg);
    let mirror = |v: &[f64]| Vector3::new(sx * v[0], sy * v[1], v[2]);

    let p1 = mirror(&off[0..3]);
    let r1 = Rotation3::from_axis_angle(&Vector3::x_axis(), q_leg[0]);
    let p2 = p1 + r1 * mirror(&off[3..6]);
    let r2 = r1 * Rotation3::from_axis_angle(&Vector3::y_axis(), sp * q_leg[1]);
    let p3 = p2 + r2 * mirror(&off[6..9]);
    let r3 = r2 * Rotation3::from_axis_angle(&Vector3::y_axis(), sp * q_leg[2]);
    let foot = p3 + r3 * Vector3::new(0.0, 0.0, params[slots::FOOT_OFFSET_Z]);
    (p1, p3, foot)
}

/// Base-frame positions of the four feet at the given joint vector.
pub fn foot_positions(cfg: &RobotConfiguration, joint_positions: &[f64]) -> [Vector3<f64>; 4] {
    assert_eq!(joint_positions.len(), NUM_JOINTS);
    let mut out = [Vector3::zeros(); 4];
    for leg in 0..NUM_LEGS {
        let q = [
            joint_positions[3 * leg],
            joint_positions[3 * leg + 1],
            joint_positions[3 * leg + 2],
        ];
        out[leg] = leg_points(&cfg.params, cfg.leg_type, leg, q).2;
    }
    out
}

/// Sum of link lengths of one leg; Lipschitz bound for foot motion.
pub fn leg_reach(params: &[f64]) -> f64 {
    let off = &params[slots::LINK_OFFSETS..slots::LINK_OFFSETS + 9];
    let seg = |v: &[f64]| (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
    seg(&off[3..6]) + seg(&off[6..9]) + params[slots::FOOT_OFFSET_Z].abs()
}

// ---------------------------------------------------------------------------
// Data file schema and loading

#[derive(Debug, Deserialize)]
struct RawFile {
    #[allow(dead_code)]
    schema_version: u32,
    sampling_envelopes: RawEnvelopes,
    pd_uniform_range: RawPdRange,
    #[serde(default)]
    models: Vec<RawModel>,
    #[serde(default)]
    strategies: BTreeMap<String, crate::sampling::RawStrategy>,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
pub struct RawEnvelopes {
    pub mass_fraction: f64,
    pub offset_fraction: f64,
    pub offset_abs_halfwidth: f64,
    pub joint_nominal_halfwidth: f64,
    pub torque_fraction: f64,
    pub com_x_halfwidth: f64,
    pub com_yz_halfwidth: f64,
    pub friction_range: (f64, f64),
}

#[derive(Debug, Deserialize)]
struct RawPdRange {
    kp: (f64, f64),
    kd: (f64, f64),
}

#[derive(Debug, Deserialize)]
struct RawModel {
    name: String,
    leg_type: String,
    base_mass: f64,
    limb_masses: RawLimbMasses,
    com_nominal: [f64; 3],
    link_offsets: RawLinkOffsets,
    foot_offset_z: f64,
    nominal_joint_triple: [f64; 3],
    torque_limit: f64,
    pd_nominal: (f64, f64),
    friction_nominal: f64,
    joint_limits: RawJointLimits,
    reflected_inertia: f64,
    base_half_extents: [f64; 3],
    knee_radius: f64,
}

#[derive(Debug, Deserialize)]
struct RawLimbMasses {
    hip: f64,
    thigh: f64,
    shank: f64,
}

#[derive(Debug, Deserialize)]
struct RawLinkOffsets {
    c1: [f64; 3],
    c2: [f64; 3],
    c3: [f64; 3],
}

#[derive(Debug, Deserialize)]
struct RawJointLimits {
    abduction: (f64, f64),
    hip: (f64, f64),
    knee: (f64, f64),
}

/// Loaded model set: reference models (sorted by nominal total mass),
/// the global PD sampling range, and the strategy parameter tables.
#[derive(Debug, Clone)]
pub struct ModelSet {
    pub models: Vec<ReferenceModel>,
    pub pd_range: PdRange,
    pub strategies: BTreeMap<String, PdStrategy>,
    pub envelopes: RawEnvelopes,
}

impl ModelSet {
    pub fn model(&self, name: &str) -> Result<&ReferenceModel> {
        self.models
            .iter()
            .find(|m| m.name == name)
            .ok_or_else(|| Error::domain(format!("unknown model `{name}`")))
    }

    /// Parses and validates a model-set file.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::Schema {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        Self::parse(&text, &path.display().to_string())
    }

    /// The model set packaged with the crate.
    pub fn builtin() -> Self {
        Self::parse(include_str!("../data/quadrupeds.toml"), "<builtin>")
            .expect("packaged model set must parse")
    }

    pub fn parse(text: &str, origin: &str) -> Result<Self> {
        let raw: RawFile = toml::from_str(text).map_err(|e| Error::Schema {
            path: origin.to_string(),
            message: e.to_string(),
        })?;
        if raw.models.is_empty() {
            return Err(Error::Schema {
                path: origin.to_string(),
                message: "no [[models]] entries".to_string(),
            });
        }
        let env = &raw.sampling_envelopes;
        let mut models = Vec::with_capacity(raw.models.len());
        for m in &raw.models {
            models.push(build_model(m, env)?);
        }
        models.sort_by(|a, b| a.total_mass_nominal.total_cmp(&b.total_mass_nominal));

        let pd_range = PdRange {
            kp: raw.pd_uniform_range.kp,
            kd: raw.pd_uniform_range.kd,
        };
        if pd_range.kp.0 >= pd_range.kp.1 || pd_range.kd.0 >= pd_range.kd.1 {
            return Err(Error::validation("pd_uniform_range", "min must be < max"));
        }
        let mut strategies = BTreeMap::new();
        for (name, s) in raw.strategies {
            strategies.insert(name.clone(), PdStrategy::build(&name, s)?);
        }
        Ok(ModelSet {
            models,
            pd_range,
            strategies,
            envelopes: raw.sampling_envelopes.clone(),
        })
    }
}

fn build_model(raw: &RawModel, env: &RawEnvelopes) -> Result<ReferenceModel> {
    let key = |s: &str| format!("models.{}.{}", raw.name, s);
    let leg_type = match raw.leg_type.as_str() {
        "A" => LegType::A,
        "X" => LegType::X,
        other => {
            return Err(Error::validation(
                key("leg_type"),
                format!("expected \"A\" or \"X\", got \"{other}\""),
            ))
        }
    };

    let mut nominal = vec![0.0; slots::LEN];
    nominal[slots::BASE_MASS] = raw.base_mass;
    for leg in 0..NUM_LEGS {
        nominal[slots::LIMB_MASS + 3 * leg] = raw.limb_masses.hip;
        nominal[slots::LIMB_MASS + 3 * leg + 1] = raw.limb_masses.thigh;
        nominal[slots::LIMB_MASS + 3 * leg + 2] = raw.limb_masses.shank;
    }
    nominal[slots::COM..slots::COM + 3].copy_from_slice(&raw.com_nominal);
    nominal[slots::LINK_OFFSETS..slots::LINK_OFFSETS + 3].copy_from_slice(&raw.link_offsets.c1);
    nominal[slots::LINK_OFFSETS + 3..slots::LINK_OFFSETS + 6].copy_from_slice(&raw.link_offsets.c2);
    nominal[slots::LINK_OFFSETS + 6..slots::LINK_OFFSETS + 9].copy_from_slice(&raw.link_offsets.c3);
    nominal[slots::FOOT_OFFSET_Z] = raw.foot_offset_z;
    for leg in 0..NUM_LEGS {
        for j in 0..3 {
            nominal[slots::NOMINAL_JOINTS + 3 * leg + j] = raw.nominal_joint_triple[j];
        }
    }
    for j in 0..NUM_JOINTS {
        nominal[slots::TORQUE_LIMITS + j] = raw.torque_limit;
    }
    nominal[slots::FRICTION] = raw.friction_nominal;

    let mut ranges = vec![(0.0, 0.0); slots::LEN];
    let frac = |n: f64, f: f64| (n - f * n.abs(), n + f * n.abs());
    ranges[slots::BASE_MASS] = frac(raw.base_mass, env.mass_fraction);
    for i in 0..NUM_JOINTS {
        ranges[slots::LIMB_MASS + i] = frac(nominal[slots::LIMB_MASS + i], env.mass_fraction);
        ranges[slots::NOMINAL_JOINTS + i] = (
            nominal[slots::NOMINAL_JOINTS + i] - env.joint_nominal_halfwidth,
            nominal[slots::NOMINAL_JOINTS + i] + env.joint_nominal_halfwidth,
        );
        ranges[slots::TORQUE_LIMITS + i] = frac(nominal[slots::TORQUE_LIMITS + i], env.torque_fraction);
    }
    ranges[slots::COM] = (
        raw.com_nominal[0] - env.com_x_halfwidth,
        raw.com_nominal[0] + env.com_x_halfwidth,
    );
    for k in 1..3 {
        ranges[slots::COM + k] = (
            raw.com_nominal[k] - env.com_yz_halfwidth,
            raw.com_nominal[k] + env.com_yz_halfwidth,
        );
    }
    for i in 0..10 {
        let idx = slots::LINK_OFFSETS + i; // 9 offsets plus foot_offset_z
        let n = nominal[idx];
        ranges[idx] = if n.abs() > 1e-6 {
            frac(n, env.offset_fraction)
        } else {
            (n - env.offset_abs_halfwidth, n + env.offset_abs_halfwidth)
        };
    }
    ranges[slots::FRICTION] = env.friction_range;
    if !(env.friction_range.0 <= raw.friction_nominal && raw.friction_nominal <= env.friction_range.1)
    {
        return Err(Error::validation(
            key("friction_nominal"),
            "outside friction_range",
        ));
    }

    let mut joint_limits = Vec::with_capacity(NUM_JOINTS);
    for _ in 0..NUM_LEGS {
        joint_limits.push(raw.joint_limits.abduction);
        joint_limits.push(raw.joint_limits.hip);
        joint_limits.push(raw.joint_limits.knee);
    }

    let total = raw.base_mass + 4.0 * (raw.limb_masses.hip + raw.limb_masses.thigh + raw.limb_masses.shank);
    let model = ReferenceModel {
        name: raw.name.clone(),
        leg_type,
        params_nominal: nominal,
        parameter_ranges: ranges,
        pd_nominal: raw.pd_nominal,
        total_mass_nominal: total,
        joint_limits,
        reflected_inertia: raw.reflected_inertia,
        base_half_extents: raw.base_half_extents,
        knee_radius: raw.knee_radius,
    };
    model.validate()?;
    Ok(model)
}

/// Loads a model-set file and returns the reference models sorted by
/// nominal total mass.
pub fn load_reference_models(path: impl AsRef<Path>) -> Result<Vec<ReferenceModel>> {
    Ok(ModelSet::load(path)?.models)
}
