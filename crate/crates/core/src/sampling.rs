//! Morphology sampling and joint PD-gain sampling strategies.
//!
//! All draw operations are pure functions of their inputs plus an
//! explicit RNG stream, so callers own stream partitioning.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{slots, LegType, Provenance, ReferenceModel, RobotConfiguration, NUM_JOINTS};
use crate::rng::Stream;

/// Scalar sampling range SR clamped to [0.1, 1].
///
/// Stored in integer hundredths so the +-0.01 curriculum updates are
/// exact.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SamplingRange {
    hundredths: u32,
}

impl SamplingRange {
    pub const MIN: SamplingRange = SamplingRange { hundredths: 10 };
    pub const MAX: SamplingRange = SamplingRange { hundredths: 100 };

    /// Initialization value per the curriculum definition.
    pub fn initial() -> Self {
        Self::MIN
    }

    pub fn full() -> Self {
        Self::MAX
    }

    /// Nearest hundredth, clamped to [0.1, 1].
    pub fn from_value(v: f64) -> Self {
        let h = (v * 100.0).round().clamp(10.0, 100.0) as u32;
        SamplingRange { hundredths: h }
    }

    pub fn value(self) -> f64 {
        f64::from(self.hundredths) / 100.0
    }

    pub fn hundredths(self) -> u32 {
        self.hundredths
    }

    pub fn step_up(self) -> Self {
        SamplingRange {
            hundredths: (self.hundredths + 1).min(Self::MAX.hundredths),
        }
    }

    pub fn step_down(self) -> Self {
        SamplingRange {
            hundredths: self.hundredths.saturating_sub(1).max(Self::MIN.hundredths),
        }
    }
}

/// Global uniform PD sampling range.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct PdRange {
    pub kp: (f64, f64),
    pub kd: (f64, f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PdStrategyKind {
    MassLinear,
    MassPolynomial,
    Uniform,
    NominalInterpolation,
    AdaptiveParticle,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct PdAnchor {
    pub mass: f64,
    pub kp: f64,
    pub kd: f64,
}

/// Raw strategy table as written in the data file.
#[derive(Debug, Clone, Deserialize)]
pub struct RawStrategy {
    pub kind: String,
    #[serde(default)]
    pub anchors: Vec<[f64; 3]>,
    #[serde(default)]
    pub scale_range: Option<(f64, f64)>,
    #[serde(default)]
    pub scale_independent: Option<bool>,
    #[serde(default)]
    pub noise_fraction: Option<f64>,
    #[serde(default)]
    pub extrapolate: Option<bool>,
}

/// One PD-gain sampling strategy with its resolved coefficients.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PdStrategy {
    pub name: String,
    pub kind: PdStrategyKind,
    pub anchors: Vec<PdAnchor>,
    /// Uniform scale span for the mass-linear strategy.
    pub scale_range: (f64, f64),
    /// Whether K_p and K_d draw independent scales (see module docs).
    pub scale_independent: bool,
    /// Noise half-width as a fraction of the interpolated nominal.
    pub noise_fraction: f64,
    pub extrapolate: bool,
    /// Least-squares quadratic (c0, c1, c2) per gain, fitted at load.
    pub poly_kp: Option<[f64; 3]>,
    pub poly_kd: Option<[f64; 3]>,
}

impl PdStrategy {
    pub fn build(name: &str, raw: RawStrategy) -> Result<Self> {
        let key = |s: &str| format!("strategies.{name}.{s}");
        let kind = match raw.kind.as_str() {
            "mass_linear" => PdStrategyKind::MassLinear,
            "mass_polynomial" => PdStrategyKind::MassPolynomial,
            "uniform" => PdStrategyKind::Uniform,
            "nominal_interpolation" => PdStrategyKind::NominalInterpolation,
            "adaptive_particle" => PdStrategyKind::AdaptiveParticle,
            other => {
                return Err(Error::validation(
                    key("kind"),
                    format!("unknown strategy kind \"{other}\""),
                ))
            }
        };
        let mut anchors: Vec<PdAnchor> = raw
            .anchors
            .iter()
            .map(|a| PdAnchor {
                mass: a[0],
                kp: a[1],
                kd: a[2],
            })
            .collect();
        anchors.sort_by(|a, b| a.mass.total_cmp(&b.mass));
        let needs_anchors = matches!(
            kind,
            PdStrategyKind::MassLinear
                | PdStrategyKind::MassPolynomial
                | PdStrategyKind::NominalInterpolation
        );
        if needs_anchors && anchors.len() < 2 {
            return Err(Error::validation(key("anchors"), "need at least 2 anchors"));
        }
        for a in &anchors {
            if a.kp <= 0.0 || a.kd < 0.0 {
                return Err(Error::validation(key("anchors"), "gains must be positive"));
            }
        }
        let (poly_kp, poly_kd) = if kind == PdStrategyKind::MassPolynomial {
            (
                Some(fit_quadratic(&anchors, |a| a.kp)?),
                Some(fit_quadratic(&anchors, |a| a.kd)?),
            )
        } else {
            (None, None)
        };
        let strategy = PdStrategy {
            name: name.to_string(),
            kind,
            anchors,
            scale_range: raw.scale_range.unwrap_or((1.0, 1.0)),
            scale_independent: raw.scale_independent.unwrap_or(false),
            noise_fraction: raw.noise_fraction.unwrap_or(0.1),
            extrapolate: raw.extrapolate.unwrap_or(false),
            poly_kp,
            poly_kd,
        };
        if strategy.kind == PdStrategyKind::MassPolynomial {
            // mapped gains must stay positive over the reference-mass span
            let lo = strategy.anchors.first().unwrap().mass;
            let hi = strategy.anchors.last().unwrap().mass;
            let mut m = lo;
            while m <= hi {
                let (kp, kd) = strategy.eval_polynomial(m);
                if kp <= 0.0 || kd < 0.0 {
                    return Err(Error::validation(
                        key("anchors"),
                        format!("fitted polynomial non-positive at mass {m}"),
                    ));
                }
                m += 0.5;
            }
        }
        Ok(strategy)
    }

    fn eval_polynomial(&self, mass: f64) -> (f64, f64) {
        let ev = |c: &[f64; 3]| c[0] + c[1] * mass + c[2] * mass * mass;
        (
            ev(self.poly_kp.as_ref().expect("polynomial strategy")),
            ev(self.poly_kd.as_ref().expect("polynomial strategy")),
        )
    }

    /// Piecewise-linear interpolation through the anchors, with linear
    /// extrapolation on the end segments.
    fn interp_anchors(&self, mass: f64) -> (f64, f64) {
        let a = &self.anchors;
        let seg = if mass <= a[0].mass {
            0
        } else if mass >= a[a.len() - 1].mass {
            a.len() - 2
        } else {
            a.windows(2).position(|w| mass <= w[1].mass).unwrap()
        };
        let (l, r) = (&a[seg], &a[seg + 1]);
        let t = (mass - l.mass) / (r.mass - l.mass);
        (l.kp + t * (r.kp - l.kp), l.kd + t * (r.kd - l.kd))
    }
}

/// Least-squares quadratic fit over (mass, gain) anchor points.
fn fit_quadratic(anchors: &[PdAnchor], gain: impl Fn(&PdAnchor) -> f64) -> Result<[f64; 3]> {
    use nalgebra::{DMatrix, DVector};
    let n = anchors.len();
    let mut a = DMatrix::zeros(n, 3);
    let mut b = DVector::zeros(n);
    for (i, anchor) in anchors.iter().enumerate() {
        a[(i, 0)] = 1.0;
        a[(i, 1)] = anchor.mass;
        a[(i, 2)] = anchor.mass * anchor.mass;
        b[i] = gain(anchor);
    }
    let ata = a.transpose() * &a;
    let atb = a.transpose() * b;
    let sol = ata
        .lu()
        .solve(&atb)
        .ok_or_else(|| Error::validation("anchors", "degenerate polynomial fit"))?;
    Ok([sol[0], sol[1], sol[2]])
}

// ---------------------------------------------------------------------------
// Morphology sampling

fn sr_interval(nominal: f64, lo: f64, hi: f64, sr: f64) -> (f64, f64) {
    (nominal - sr * (nominal - lo), nominal + sr * (hi - nominal))
}

/// Draws one configuration with every slot uniform within the envelope
/// scaled by `sr` about the nominal. Nominal joint positions and torque
/// limits always use the full range. The leg type flips away from the
/// model's nominal with probability `0.5 * sr`.
pub fn sample_morphology(
    model: &ReferenceModel,
    sr: SamplingRange,
    rng: &mut Stream,
) -> RobotConfiguration {
    let s = sr.value();
    let mut params = vec![0.0; slots::LEN];
    for i in 0..slots::LEN {
        let (lo, hi) = model.parameter_ranges[i];
        let full_range = (slots::NOMINAL_JOINTS..slots::NOMINAL_JOINTS + NUM_JOINTS)
            .contains(&i)
            || (slots::TORQUE_LIMITS..slots::TORQUE_LIMITS + NUM_JOINTS).contains(&i);
        let (a, b) = if full_range {
            (lo, hi)
        } else {
            sr_interval(model.params_nominal[i], lo, hi, s)
        };
        params[i] = if b > a { rng.gen_range(a..=b) } else { a };
    }
    let leg_type = if rng.gen_bool(0.5 * s) {
        match model.leg_type {
            LegType::A => LegType::X,
            LegType::X => LegType::A,
        }
    } else {
        model.leg_type
    };
    RobotConfiguration {
        reference: model.name.clone(),
        params,
        pd_gains: vec![model.pd_nominal; NUM_JOINTS],
        leg_type,
        provenance: if sr == SamplingRange::full() {
            Provenance::Uniform
        } else {
            Provenance::SrClipped
        },
    }
}

// ---------------------------------------------------------------------------
// PD gain sampling

pub type PdGains = Vec<(f64, f64)>;

fn replicate(kp: f64, kd: f64) -> PdGains {
    vec![(kp, kd); NUM_JOINTS]
}

/// Line through the strategy anchors evaluated at the total mass, scaled
/// by a uniform draw from the strategy's scale span.
pub fn pd_mass_linear(total_mass: f64, strategy: &PdStrategy, rng: &mut Stream) -> Result<PdGains> {
    let lo = strategy.anchors.first().unwrap().mass * 0.5;
    let hi = strategy.anchors.last().unwrap().mass * 2.0;
    if !(lo..=hi).contains(&total_mass) {
        return Err(Error::domain(format!(
            "mass {total_mass} outside [{lo}, {hi}] for strategy {}",
            strategy.name
        )));
    }
    let (kp, kd) = strategy.interp_anchors(total_mass);
    let (s0, s1) = strategy.scale_range;
    let draw = |rng: &mut Stream| if s1 > s0 { rng.gen_range(s0..=s1) } else { s0 };
    let sp = draw(rng);
    let sd = if strategy.scale_independent { draw(rng) } else { sp };
    Ok(replicate(kp * sp, kd * sd))
}

/// Fitted quadratic mass-to-gain mapping, deterministic.
pub fn pd_mass_polynomial(total_mass: f64, strategy: &PdStrategy) -> Result<PdGains> {
    let lo = strategy.anchors.first().unwrap().mass * 0.5;
    let hi = strategy.anchors.last().unwrap().mass * 2.0;
    if !(lo..=hi).contains(&total_mass) {
        return Err(Error::domain(format!(
            "mass {total_mass} outside [{lo}, {hi}] for strategy {}",
            strategy.name
        )));
    }
    let (kp, kd) = strategy.eval_polynomial(total_mass);
    Ok(replicate(kp, kd))
}

/// Uniform draw from the global range clipped by SR about the per-model
/// nominal anchor. One (K_p, K_d) pair is drawn per joint-group index
/// (abduction, hip, knee) and shared across the four legs.
pub fn pd_uniform(
    range: &PdRange,
    anchor: (f64, f64),
    sr: SamplingRange,
    rng: &mut Stream,
) -> Result<PdGains> {
    if range.kp.0 >= range.kp.1 || range.kd.0 >= range.kd.1 {
        return Err(Error::domain("pd range min must be < max"));
    }
    let s = sr.value();
    let (kp_lo, kp_hi) = sr_interval(anchor.0, range.kp.0, range.kp.1, s);
    let (kd_lo, kd_hi) = sr_interval(anchor.1, range.kd.0, range.kd.1, s);
    let mut group = [(0.0, 0.0); 3];
    for g in &mut group {
        *g = (rng.gen_range(kp_lo..=kp_hi), rng.gen_range(kd_lo..=kd_hi));
    }
    Ok((0..NUM_JOINTS).map(|j| group[j % 3]).collect())
}

/// Piecewise-linear interpolation of both nominal gains and their noise
/// half-widths by mass, plus uniform noise of the interpolated width.
pub fn pd_nominal_interpolation(
    total_mass: f64,
    strategy: &PdStrategy,
    rng: &mut Stream,
) -> Result<PdGains> {
    let first = strategy.anchors.first().unwrap().mass;
    let last = strategy.anchors.last().unwrap().mass;
    if !strategy.extrapolate && (total_mass < first || total_mass > last) {
        return Err(Error::domain(format!(
            "mass {total_mass} outside anchor span [{first}, {last}] and extrapolation disabled"
        )));
    }
    let (kp, kd) = strategy.interp_anchors(total_mass);
    let hw_kp = strategy.noise_fraction * kp;
    let hw_kd = strategy.noise_fraction * kd;
    let kp = kp + rng.gen_range(-hw_kp..=hw_kp);
    let kd = kd + rng.gen_range(-hw_kd..=hw_kd);
    Ok(replicate(kp, kd.max(0.0)))
}

/// Domain-randomization noise: each gain is multiplied by an independent
/// factor clip(1 + eps, 0.95, 1.05), eps ~ N(0, 1).
pub fn rescale_pd_noise(gains: &mut PdGains, rng: &mut Stream) {
    for pair in gains.iter_mut() {
        let e_p: f64 = StandardNormal.sample(rng);
        let e_d: f64 = StandardNormal.sample(rng);
        pair.0 *= (1.0 + e_p).clamp(0.95, 1.05);
        pair.1 *= (1.0 + e_d).clamp(0.95, 1.05);
    }
}

/// Dispatches the configured strategy. `sr` only applies to the
/// adaptive-particle kind; the plain uniform kind always uses SR = 1.
pub fn sample_pd(
    strategy: &PdStrategy,
    range: &PdRange,
    model: &ReferenceModel,
    total_mass: f64,
    sr: SamplingRange,
    rng: &mut Stream,
) -> Result<PdGains> {
    match strategy.kind {
        PdStrategyKind::MassLinear => pd_mass_linear(total_mass, strategy, rng),
        PdStrategyKind::MassPolynomial => pd_mass_polynomial(total_mass, strategy),
        PdStrategyKind::Uniform => pd_uniform(range, model.pd_nominal, SamplingRange::full(), rng),
        PdStrategyKind::NominalInterpolation => pd_nominal_interpolation(total_mass, strategy, rng),
        PdStrategyKind::AdaptiveParticle => pd_uniform(range, model.pd_nominal, sr, rng),
    }
}

// ---------------------------------------------------------------------------
// Velocity commands

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Command {
    pub v_x: f64,
    pub v_y: f64,
    pub omega_z: f64,
    pub duration: f64,
}

impl Command {
    pub fn zero(duration: f64) -> Self {
        Command {
            v_x: 0.0,
            v_y: 0.0,
            omega_z: 0.0,
            duration,
        }
    }

    pub fn is_zero(&self) -> bool {
        self.v_x == 0.0 && self.v_y == 0.0 && self.omega_z == 0.0
    }
}

pub const V_X_MAX: f64 = 1.0;
pub const V_Y_MAX: f64 = 0.75;
pub const OMEGA_Z_MAX: f64 = 1.5;

/// Uniform command draw within the training boxes, 3-6 s duration.
pub fn sample_command(rng: &mut Stream) -> Command {
    Command {
        v_x: rng.gen_range(-V_X_MAX..=V_X_MAX),
        v_y: rng.gen_range(-V_Y_MAX..=V_Y_MAX),
        omega_z: rng.gen_range(-OMEGA_Z_MAX..=OMEGA_Z_MAX),
        duration: rng.gen_range(3.0..=6.0),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelSet;
    use crate::rng;

    fn set() -> ModelSet {
        ModelSet::builtin()
    }

    #[test]
    fn sampling_range_clamps() {
        assert_eq!(SamplingRange::from_value(0.0), SamplingRange::MIN);
        assert_eq!(SamplingRange::from_value(2.0), SamplingRange::MAX);
        assert_eq!(SamplingRange::MAX.step_up(), SamplingRange::MAX);
        assert_eq!(SamplingRange::MIN.step_down(), SamplingRange::MIN);
    }

    #[test]
    fn morphology_respects_clipped_envelope() {
        let set = set();
        let model = set.model("a1").unwrap();
        let mut rng = rng::stream(7, &[0]);
        let sr = SamplingRange::from_value(0.0); // clamps to 0.1
        for _ in 0..200 {
            let cfg = sample_morphology(model, sr, &mut rng);
            cfg.validate(model).unwrap();
            for i in 0..slots::LEN {
                let (lo, hi) = model.parameter_ranges[i];
                let nom = model.params_nominal[i];
                let full = (slots::NOMINAL_JOINTS..slots::NOMINAL_JOINTS + NUM_JOINTS).contains(&i)
                    || (slots::TORQUE_LIMITS..slots::TORQUE_LIMITS + NUM_JOINTS).contains(&i);
                if !full {
                    let (a, b) = sr_interval(nom, lo, hi, 0.1);
                    assert!(
                        cfg.params[i] >= a - 1e-12 && cfg.params[i] <= b + 1e-12,
                        "slot {i}"
                    );
                }
            }
        }
    }

    #[test]
    fn morphology_deterministic_per_seed() {
        let set = set();
        let model = set.model("anymal_c").unwrap();
        let a = sample_morphology(model, SamplingRange::full(), &mut rng::stream(42, &[1]));
        let b = sample_morphology(model, SamplingRange::full(), &mut rng::stream(42, &[1]));
        assert_eq!(a, b);
    }

    #[test]
    fn com_x_covers_declared_range_at_full_sr() {
        let set = set();
        let model = set.model("a1").unwrap();
        let mut rng = rng::stream(3, &[9]);
        let mut min = f64::INFINITY;
        let mut max = f64::NEG_INFINITY;
        for _ in 0..100_000 {
            let cfg = sample_morphology(model, SamplingRange::full(), &mut rng);
            let x = cfg.params[slots::COM];
            assert!((-0.15..=0.15).contains(&x));
            min = min.min(x);
            max = max.max(x);
        }
        // order statistics of U(-0.15, 0.15): 1e5 draws cover >= 99%
        assert!((max - min) / 0.30 >= 0.99, "coverage {}", (max - min) / 0.30);
    }

    #[test]
    fn mass_linear_hits_anchor_with_unit_scale() {
        let set = set();
        let mut s = set.strategies["genloco"].clone();
        s.scale_range = (1.0, 1.0);
        let gains = pd_mass_linear(12.0, &s, &mut rng::stream(0, &[])).unwrap();
        assert!((gains[0].0 - 400.0).abs() < 1e-12);
        assert!((gains[0].1 - 8.0).abs() < 1e-12);
        assert_eq!(gains.len(), NUM_JOINTS);
    }

    #[test]
    fn mass_linear_scale_moments() {
        let set = set();
        let s = &set.strategies["genloco"];
        let mut rng = rng::stream(11, &[2]);
        let base = {
            let mut f = s.clone();
            f.scale_range = (1.0, 1.0);
            pd_mass_linear(30.0, &f, &mut rng::stream(0, &[])).unwrap()[0].0
        };
        let n = 100_000;
        let mut sum = 0.0;
        for _ in 0..n {
            let g = pd_mass_linear(30.0, s, &mut rng).unwrap();
            let scale = g[0].0 / base;
            assert!((0.7..=1.1).contains(&scale), "scale {scale}");
            sum += scale;
        }
        let mean = sum / n as f64;
        assert!((mean - 0.9).abs() < 0.005, "mean {mean}");
    }

    #[test]
    fn mass_linear_rejects_out_of_span_mass() {
        let set = set();
        let s = &set.strategies["genloco"];
        assert!(pd_mass_linear(1.0, s, &mut rng::stream(0, &[])).is_err());
        assert!(pd_mass_linear(500.0, s, &mut rng::stream(0, &[])).is_err());
    }

    #[test]
    fn polynomial_reproduces_anchor_and_is_monotone() {
        let set = set();
        let s = &set.strategies["moral"];
        let g = pd_mass_polynomial(12.0, s).unwrap();
        assert!((g[0].0 - 82.0).abs() < 1e-6, "kp {}", g[0].0);
        assert!((g[0].1 - 5.0).abs() < 1e-6, "kd {}", g[0].1);
        let mut prev = 0.0;
        let mut m = 12.0;
        while m <= 50.0 {
            let g = pd_mass_polynomial(m, s).unwrap();
            assert!(g[0].0 >= prev);
            prev = g[0].0;
            m += 0.25;
        }
    }

    #[test]
    fn degree_one_polynomial_matches_linear_between_anchors() {
        // two anchors: the LS quadratic and the line agree on the segment
        let raw = RawStrategy {
            kind: "mass_linear".into(),
            anchors: vec![[12.0, 100.0, 2.0], [50.0, 300.0, 6.0]],
            scale_range: Some((1.0, 1.0)),
            scale_independent: None,
            noise_fraction: None,
            extrapolate: Some(true),
        };
        let lin = PdStrategy::build("lin", raw.clone()).unwrap();
        let mut raw_i = raw;
        raw_i.kind = "nominal_interpolation".into();
        raw_i.noise_fraction = Some(0.0);
        let interp = PdStrategy::build("interp", raw_i).unwrap();
        let mut m = 12.0;
        while m <= 50.0 {
            let a = pd_mass_linear(m, &lin, &mut rng::stream(0, &[])).unwrap()[0];
            let b = pd_nominal_interpolation(m, &interp, &mut rng::stream(0, &[])).unwrap()[0];
            assert!((a.0 - b.0).abs() < 1e-12 && (a.1 - b.1).abs() < 1e-12);
            m += 0.5;
        }
    }

    #[test]
    fn uniform_clipping_and_degenerate_range() {
        let set = set();
        let model = set.model("a1").unwrap();
        let mut rng = rng::stream(5, &[3]);
        let sr = SamplingRange::from_value(0.1);
        let (a_kp, b_kp) = sr_interval(model.pd_nominal.0, set.pd_range.kp.0, set.pd_range.kp.1, 0.1);
        for _ in 0..2000 {
            let g = pd_uniform(&set.pd_range, model.pd_nominal, sr, &mut rng).unwrap();
            for &(kp, kd) in &g {
                assert!(kp >= a_kp && kp <= b_kp);
                assert!(kd >= 0.0);
            }
            // joint-group sharing across legs
            for leg in 1..4 {
                for j in 0..3 {
                    assert_eq!(g[3 * leg + j], g[j]);
                }
            }
        }
        let tight = PdRange {
            kp: (30.0, 30.0 + 1e-9),
            kd: (0.5, 0.5 + 1e-9),
        };
        let g = pd_uniform(&tight, (30.0, 0.5), SamplingRange::full(), &mut rng).unwrap();
        assert!((g[0].0 - 30.0).abs() < 1e-9);
    }

    #[test]
    fn interpolation_hits_urma_anchor_and_midpoint() {
        let set = set();
        let mut s = set.strategies["urma"].clone();
        s.noise_fraction = 0.0;
        let g = pd_nominal_interpolation(50.0, &s, &mut rng::stream(0, &[])).unwrap();
        assert!((g[0].0 - 80.0).abs() < 1e-12 && (g[0].1 - 2.0).abs() < 1e-12);
        // midpoint between the 30 kg and 50 kg anchors
        let g = pd_nominal_interpolation(40.0, &s, &mut rng::stream(0, &[])).unwrap();
        assert!((g[0].0 - 70.0).abs() < 1e-12 && (g[0].1 - 1.75).abs() < 1e-12);
    }

    #[test]
    fn interpolation_noise_stays_within_halfwidth() {
        let set = set();
        let s = &set.strategies["urma"];
        let mut rng = rng::stream(17, &[]);
        for _ in 0..10_000 {
            let g = pd_nominal_interpolation(50.0, s, &mut rng).unwrap();
            assert!((g[0].0 - 80.0).abs() <= 80.0 * s.noise_fraction + 1e-12);
            assert!((g[0].1 - 2.0).abs() <= 2.0 * s.noise_fraction + 1e-12);
        }
    }

    #[test]
    fn interpolation_rejects_mass_below_first_anchor() {
        let set = set();
        let s = &set.strategies["urma"];
        assert!(pd_nominal_interpolation(5.0, s, &mut rng::stream(0, &[])).is_err());
    }

    #[test]
    fn rescale_noise_bounded_and_boundary_mass() {
        let mut rng = rng::stream(23, &[]);
        let n = 200_000;
        let mut low = 0usize;
        let mut high = 0usize;
        for _ in 0..n {
            let mut g = vec![(100.0, 1.0)];
            rescale_pd_noise(&mut g, &mut rng);
            let f = g[0].0 / 100.0;
            assert!((0.95 - 1e-12..=1.05 + 1e-12).contains(&f));
            if f <= 0.95 + 1e-12 {
                low += 1;
            }
            if f >= 1.05 - 1e-12 {
                high += 1;
            }
        }
        // P(|eps| > 0.05) from the standard normal CDF: ~0.48 per side
        let p_low = low as f64 / n as f64;
        let p_high = high as f64 / n as f64;
        assert!((p_low - 0.4801).abs() < 0.01, "p_low {p_low}");
        assert!((p_high - 0.4801).abs() < 0.01, "p_high {p_high}");
    }

    #[test]
    fn command_boxes_and_duration_mean() {
        let mut rng = rng::stream(31, &[]);
        let n = 100_000;
        let mut dur_sum = 0.0;
        for _ in 0..n {
            let c = sample_command(&mut rng);
            assert!(c.v_x.abs() <= V_X_MAX);
            assert!(c.v_y.abs() <= V_Y_MAX);
            assert!(c.omega_z.abs() <= OMEGA_Z_MAX);
            assert!((3.0..=6.0).contains(&c.duration));
            dur_sum += c.duration;
        }
        let mean = dur_sum / n as f64;
        assert!((mean - 4.5).abs() < 0.02, "mean {mean}");
        assert!(Command::zero(4.0).is_zero());
    }
}
