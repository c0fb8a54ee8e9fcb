//! Training-population maintenance: tracking metrics, sampling-range
//! adaptation, SIR particle filtering with a nearest-neighbor random
//! walk, and replay-buffer resampling.

use std::collections::VecDeque;

use rand::seq::index::sample as index_sample;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ModelSet, Provenance, RobotConfiguration};
use crate::rng::{self, Stream};
use crate::sampling::{
    rescale_pd_noise, sample_morphology, sample_pd, PdRange, PdStrategy, SamplingRange, V_X_MAX,
    V_Y_MAX,
};

/// Threshold for the linear-command indicator: 0.3 * |[v_x_max, v_y_max]|.
pub fn nu_lin_threshold() -> f64 {
    0.3 * (V_X_MAX * V_X_MAX + V_Y_MAX * V_Y_MAX).sqrt()
}

/// Instantaneous linear-tracking indicator: 1 iff the scalar projection
/// of the body velocity onto the command direction exceeds the threshold.
pub fn nu_lin(v_body: [f64; 2], cmd: [f64; 2]) -> Result<bool> {
    let norm = (cmd[0] * cmd[0] + cmd[1] * cmd[1]).sqrt();
    if norm == 0.0 {
        return Err(Error::domain("nu_lin undefined for zero command; use nu_zero"));
    }
    let projection = (v_body[0] * cmd[0] + v_body[1] * cmd[1]) / norm;
    Ok(projection > nu_lin_threshold())
}

/// Zero-command indicator: 1 iff the (v_x, v_y, omega) norm is below 0.2.
pub fn nu_zero(v: [f64; 3]) -> bool {
    (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt() < 0.2
}

/// Fraction of command-active steps whose indicator was 1.
pub fn tracking_ratio(indicators: &[bool]) -> Result<f64> {
    if indicators.is_empty() {
        return Err(Error::UndefinedMetric(
            "tracking ratio over empty indicator sequence".into(),
        ));
    }
    Ok(indicators.iter().filter(|&&b| b).count() as f64 / indicators.len() as f64)
}

/// SR update rule: +0.01 iff (lin > 0.65 and zero > 0.55), -0.01 iff
/// (lin < 0.55 or zero < 0.40), otherwise unchanged; clamped to [0.1, 1].
pub fn update_sr(sr: SamplingRange, tr_mean_lin: f64, tr_mean_zero: f64) -> SamplingRange {
    if tr_mean_lin > 0.65 && tr_mean_zero > 0.55 {
        sr.step_up()
    } else if tr_mean_lin < 0.55 || tr_mean_zero < 0.40 {
        sr.step_down()
    } else {
        sr
    }
}

/// Importance weight: 0.5 per task whose Tr lies in the closed interval
/// [0.4, 0.9].
pub fn particle_weight(tr_lin: f64, tr_zero: f64) -> f64 {
    let inside = |t: f64| (0.4..=0.9).contains(&t);
    0.5 * (inside(tr_lin) as u8 + inside(tr_zero) as u8) as f64
}

/// Systematic resampling: `n` ancestor indices drawn with probability
/// proportional to the weights. All-zero weights fall back to a uniform
/// draw over the population (logged).
pub fn sir_resample(weights: &[f64], n: usize, rng: &mut Stream) -> Vec<usize> {
    assert!(!weights.is_empty());
    let total: f64 = weights.iter().sum();
    if total <= 0.0 {
        log::warn!("sir_resample: all weights zero, falling back to uniform resampling");
        return (0..n).map(|_| rng.gen_range(0..weights.len())).collect();
    }
    let offset: f64 = rng.gen_range(0.0..1.0);
    let mut out = Vec::with_capacity(n);
    let mut cum = 0.0;
    let mut idx = 0usize;
    for k in 0..n {
        let target = (k as f64 + offset) / n as f64 * total;
        while cum + weights[idx] < target && idx + 1 < weights.len() {
            cum += weights[idx];
            idx += 1;
        }
        out.push(idx);
    }
    out
}

/// Resample-then-perturb step: an isotropic Gaussian step in normalized
/// parameter space (clamped to [0, 1]), the same step applied to the PD
/// gains in normalized global-range coordinates, and a small categorical
/// leg-type flip. `step_scale == 0` disables the flip as well and returns
/// an identical parameter vector.
pub fn nn_random_walk(
    cfg: &RobotConfiguration,
    model_set: &ModelSet,
    step_scale: f64,
    leg_flip_prob: f64,
    rng: &mut Stream,
) -> Result<RobotConfiguration> {
    let model = model_set.model(&cfg.reference)?;
    let mut normalized = cfg.normalize(model);
    for u in normalized.values.iter_mut() {
        let e: f64 = StandardNormal.sample(rng);
        *u = (*u + step_scale * e).clamp(0.0, 1.0);
    }
    let params = normalized.denormalize(model);

    let PdRange { kp, kd } = model_set.pd_range;
    let pd_gains = cfg
        .pd_gains
        .iter()
        .map(|&(p, d)| {
            let ep: f64 = StandardNormal.sample(rng);
            let ed: f64 = StandardNormal.sample(rng);
            let up = ((p - kp.0) / (kp.1 - kp.0) + step_scale * ep).clamp(0.0, 1.0);
            let ud = ((d - kd.0) / (kd.1 - kd.0) + step_scale * ed).clamp(0.0, 1.0);
            (kp.0 + up * (kp.1 - kp.0), kd.0 + ud * (kd.1 - kd.0))
        })
        .collect();

    let leg_type = if step_scale > 0.0 && rng.gen_bool(leg_flip_prob) {
        match cfg.leg_type {
            crate::model::LegType::A => crate::model::LegType::X,
            crate::model::LegType::X => crate::model::LegType::A,
        }
    } else {
        cfg.leg_type
    };

    Ok(RobotConfiguration {
        reference: cfg.reference.clone(),
        params,
        pd_gains,
        leg_type,
        provenance: Provenance::ParticleWalk,
    })
}

// ---------------------------------------------------------------------------
// Population state and epoch updates

/// Per-configuration tracking record for one epoch.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct TrackingRecord {
    pub tr_lin: f64,
    pub tr_zero: f64,
    pub steps_lin: usize,
    pub steps_zero: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplingStrategy {
    Uniform,
    PerformanceSr,
    ParticleFilter,
}

/// Fractions of n_p replaced per epoch per group.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SplitFractions {
    /// n_u: fresh uniform samples.
    pub fresh: f64,
    /// n_r: replay-buffer resamples.
    pub replay: f64,
    /// n_w: particle-filter weighted walks.
    pub walk: f64,
    /// n_SR: fresh samples at the adapted SR (performance curriculum).
    pub sr: f64,
}

impl SplitFractions {
    /// 10% / 10% / 10% split of the adaptive particle-filter preset.
    pub fn ours() -> Self {
        SplitFractions {
            fresh: 0.10,
            replay: 0.10,
            walk: 0.10,
            sr: 0.10,
        }
    }

    /// 15% fresh + 15% replay at SR = 1.
    pub fn pal() -> Self {
        SplitFractions {
            fresh: 0.15,
            replay: 0.15,
            walk: 0.0,
            sr: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let parts = [self.fresh, self.replay, self.walk, self.sr];
        if parts.iter().any(|&f| !(0.0..=1.0).contains(&f)) {
            return Err(Error::validation("split", "fractions must be in [0, 1]"));
        }
        if parts.iter().sum::<f64>() > 1.0 + 1e-12 {
            return Err(Error::validation("split", "fractions must sum to <= 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PopulationMember {
    pub config: RobotConfiguration,
    pub weight: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CurriculumState {
    pub sr: SamplingRange,
    pub members: Vec<PopulationMember>,
    pub replay: VecDeque<RobotConfiguration>,
    pub replay_capacity: usize,
    pub split: SplitFractions,
    pub epoch: u64,
    pub run_seed: u64,
}

/// Everything an epoch update needs besides the state itself.
pub struct EpochContext<'a> {
    pub model_set: &'a ModelSet,
    pub pd_strategy: &'a PdStrategy,
    /// Whether the adaptive SR clips the PD-gain range as well as the
    /// morphology envelope (default true).
    pub sr_governs_pd: bool,
    pub walk_step_scale: f64,
    pub leg_flip_prob: f64,
    pub max_admission_retries: usize,
}

impl<'a> EpochContext<'a> {
    pub fn new(model_set: &'a ModelSet, pd_strategy: &'a PdStrategy) -> Self {
        EpochContext {
            model_set,
            pd_strategy,
            sr_governs_pd: true,
            walk_step_scale: 0.05,
            leg_flip_prob: 0.05,
            max_admission_retries: 20,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize)]
pub struct EpochSummary {
    pub replaced_fresh: usize,
    pub replaced_replay: usize,
    pub replaced_walk: usize,
    pub admission_exhausted: usize,
    pub tr_mean_lin: f64,
    pub tr_mean_zero: f64,
    pub sr: f64,
    pub mean_weight: f64,
}

type Admit<'c> = dyn FnMut(&RobotConfiguration) -> bool + 'c;

impl CurriculumState {
    /// Builds the initial admitted population, `n_p / n_models`
    /// configurations per reference model (n_p must divide evenly).
    pub fn init(
        ctx: &EpochContext,
        strategy: SamplingStrategy,
        n_p: usize,
        split: SplitFractions,
        run_seed: u64,
        admit: &mut Admit,
    ) -> Result<Self> {
        split.validate()?;
        let n_models = ctx.model_set.models.len();
        if n_p == 0 || n_p % n_models != 0 {
            return Err(Error::validation(
                "n_p",
                format!("population size {n_p} not divisible by {n_models} models"),
            ));
        }
        let sr = match strategy {
            SamplingStrategy::Uniform => SamplingRange::full(),
            _ => SamplingRange::initial(),
        };
        let mut members = Vec::with_capacity(n_p);
        for i in 0..n_p {
            let model = &ctx.model_set.models[i % n_models];
            let mut rng = rng::stream(run_seed, &[u64::MAX, i as u64]);
            let config = sample_admitted(ctx, model.name.as_str(), sr, admit, &mut rng)?
                .unwrap_or_else(|| crate::model::nominal_configuration(model));
            members.push(PopulationMember {
                config,
                weight: 0.0,
            });
        }
        Ok(CurriculumState {
            sr,
            members,
            replay: VecDeque::new(),
            replay_capacity: 10 * n_p,
            split,
            epoch: 0,
            run_seed,
        })
    }

    fn push_replay(&mut self, cfg: RobotConfiguration) {
        if self.replay.len() == self.replay_capacity {
            self.replay.pop_front();
        }
        self.replay.push_back(cfg);
    }
}

/// Samples a fresh configuration for `model` at `sr`, retrying until the
/// admission check passes. Returns `None` on retry exhaustion.
fn sample_admitted(
    ctx: &EpochContext,
    model_name: &str,
    sr: SamplingRange,
    admit: &mut Admit,
    rng: &mut Stream,
) -> Result<Option<RobotConfiguration>> {
    let model = ctx.model_set.model(model_name)?;
    let pd_sr = if ctx.sr_governs_pd { sr } else { SamplingRange::full() };
    for _ in 0..ctx.max_admission_retries.max(1) {
        let mut cfg = sample_morphology(model, sr, rng);
        let mut gains = sample_pd(
            ctx.pd_strategy,
            &ctx.model_set.pd_range,
            model,
            cfg.total_mass(),
            pd_sr,
            rng,
        )?;
        rescale_pd_noise(&mut gains, rng);
        cfg.pd_gains = gains;
        if admit(&cfg) {
            return Ok(Some(cfg));
        }
    }
    Ok(None)
}

fn round_count(frac: f64, n_p: usize) -> usize {
    (frac * n_p as f64).round() as usize
}

/// One curriculum epoch: updates SR and weights from the tracking
/// records and replaces the strategy-specific population groups.
/// Replaced members' predecessors are pushed to the replay buffer.
pub fn epoch_update(
    state: &mut CurriculumState,
    records: &[TrackingRecord],
    strategy: SamplingStrategy,
    ctx: &EpochContext,
    admit: &mut Admit,
) -> Result<EpochSummary> {
    let n_p = state.members.len();
    if records.len() != n_p {
        return Err(Error::domain(format!(
            "expected {n_p} tracking records, got {}",
            records.len()
        )));
    }
    let tr_mean_lin = records.iter().map(|r| r.tr_lin).sum::<f64>() / n_p as f64;
    let tr_mean_zero = records.iter().map(|r| r.tr_zero).sum::<f64>() / n_p as f64;
    for (m, r) in state.members.iter_mut().zip(records) {
        m.weight = particle_weight(r.tr_lin, r.tr_zero);
    }

    match strategy {
        SamplingStrategy::Uniform => {}
        SamplingStrategy::PerformanceSr | SamplingStrategy::ParticleFilter => {
            state.sr = update_sr(state.sr, tr_mean_lin, tr_mean_zero);
        }
    }

    let (n_fresh, fresh_sr, n_replay, n_walk) = match strategy {
        SamplingStrategy::Uniform => (
            round_count(state.split.fresh, n_p),
            SamplingRange::full(),
            round_count(state.split.replay, n_p),
            0,
        ),
        SamplingStrategy::PerformanceSr => {
            (round_count(state.split.sr, n_p), state.sr, 0, 0)
        }
        SamplingStrategy::ParticleFilter => (
            round_count(state.split.fresh, n_p),
            state.sr,
            round_count(state.split.replay, n_p),
            round_count(state.split.walk, n_p),
        ),
    };

    let mut summary = EpochSummary {
        tr_mean_lin,
        tr_mean_zero,
        sr: state.sr.value(),
        ..Default::default()
    };

    // disjoint random member indices for all replacement groups
    let mut pick_rng = rng::stream(state.run_seed, &[state.epoch, 0x5e1ec7]);
    let total_replace = (n_fresh + n_replay + n_walk).min(n_p);
    let picked: Vec<usize> = index_sample(&mut pick_rng, n_p, total_replace).into_vec();
    let (fresh_idx, rest) = picked.split_at(n_fresh.min(picked.len()));
    let (replay_idx, walk_idx) = rest.split_at(n_replay.min(rest.len()));

    for &i in fresh_idx {
        let mut rng = rng::stream(state.run_seed, &[state.epoch, i as u64, 1]);
        let reference = state.members[i].config.reference.clone();
        match sample_admitted(ctx, &reference, fresh_sr, admit, &mut rng)? {
            Some(cfg) => {
                let old = std::mem::replace(&mut state.members[i].config, cfg);
                state.members[i].weight = 0.0;
                state.push_replay(old);
                summary.replaced_fresh += 1;
            }
            None => {
                log::warn!("admission retries exhausted for fresh sample, keeping predecessor");
                summary.admission_exhausted += 1;
            }
        }
    }

    for &i in replay_idx {
        let mut rng = rng::stream(state.run_seed, &[state.epoch, i as u64, 2]);
        let reference = state.members[i].config.reference.clone();
        let candidates: Vec<usize> = state
            .replay
            .iter()
            .enumerate()
            .filter(|(_, c)| c.reference == reference)
            .map(|(k, _)| k)
            .collect();
        if candidates.is_empty() {
            continue;
        }
        let mut cfg = state.replay[candidates[rng.gen_range(0..candidates.len())]].clone();
        cfg.provenance = Provenance::Replay;
        let old = std::mem::replace(&mut state.members[i].config, cfg);
        state.members[i].weight = 0.0;
        state.push_replay(old);
        summary.replaced_replay += 1;
    }

    if n_walk > 0 {
        let weights: Vec<f64> = state.members.iter().map(|m| m.weight).collect();
        let mut sir_rng = rng::stream(state.run_seed, &[state.epoch, 0x51e]);
        let ancestors = sir_resample(&weights, walk_idx.len(), &mut sir_rng);
        for (&i, &anc) in walk_idx.iter().zip(&ancestors) {
            let mut rng = rng::stream(state.run_seed, &[state.epoch, i as u64, 3]);
            let mut accepted = None;
            for _ in 0..ctx.max_admission_retries.max(1) {
                let cand = nn_random_walk(
                    &state.members[anc].config,
                    ctx.model_set,
                    ctx.walk_step_scale,
                    ctx.leg_flip_prob,
                    &mut rng,
                )?;
                if admit(&cand) {
                    accepted = Some(cand);
                    break;
                }
            }
            match accepted {
                Some(cfg) => {
                    let old = std::mem::replace(&mut state.members[i].config, cfg);
                    state.members[i].weight = state.members[anc].weight;
                    state.push_replay(old);
                    summary.replaced_walk += 1;
                }
                None => {
                    log::warn!("admission retries exhausted for walk sample, keeping predecessor");
                    summary.admission_exhausted += 1;
                }
            }
        }
    }

    state.epoch += 1;
    summary.mean_weight =
        state.members.iter().map(|m| m.weight).sum::<f64>() / n_p as f64;
    Ok(summary)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    #[test]
    fn nu_lin_threshold_and_boundary() {
        assert!((nu_lin_threshold() - 0.375).abs() < 1e-15);
        assert!(nu_lin([1.0, 0.0], [1.0, 0.0]).unwrap());
        assert!(!nu_lin([0.0, 0.0], [1.0, 0.0]).unwrap());
        assert!(nu_lin([0.375 + 1e-9, 0.0], [1.0, 0.0]).unwrap());
        assert!(!nu_lin([0.375 - 1e-9, 0.0], [1.0, 0.0]).unwrap());
        assert!(nu_lin([0.0, 0.0], [0.0, 0.0]).is_err());
    }

    #[test]
    fn nu_zero_strict_norm() {
        assert!(nu_zero([0.0, 0.0, 0.0]));
        assert!(!nu_zero([0.2, 0.0, 0.0]));
        assert!(nu_zero([0.1, 0.1, 0.1])); // norm ~0.173
    }

    #[test]
    fn tracking_ratio_basics() {
        assert_eq!(tracking_ratio(&[true, true]).unwrap(), 1.0);
        assert_eq!(tracking_ratio(&[false, false]).unwrap(), 0.0);
        assert_eq!(tracking_ratio(&[true, false, true, false]).unwrap(), 0.5);
        assert!(tracking_ratio(&[]).is_err());
    }

    #[test]
    fn update_sr_branches() {
        let sr = SamplingRange::from_value(0.5);
        assert_eq!(update_sr(sr, 0.70, 0.60).hundredths(), 51);
        assert_eq!(update_sr(sr, 0.60, 0.50).hundredths(), 50);
        assert_eq!(update_sr(sr, 0.70, 0.35).hundredths(), 49);
        assert_eq!(update_sr(SamplingRange::full(), 1.0, 1.0), SamplingRange::full());
        assert_eq!(
            update_sr(SamplingRange::initial(), 0.0, 0.0),
            SamplingRange::initial()
        );
    }

    #[test]
    fn particle_weight_cases() {
        assert_eq!(particle_weight(0.5, 0.5), 1.0);
        assert_eq!(particle_weight(0.95, 0.5), 0.5);
        assert_eq!(particle_weight(0.1, 0.95), 0.0);
        // closed endpoints
        assert_eq!(particle_weight(0.4, 0.9), 1.0);
    }

    #[test]
    fn sir_degenerate_single_weight() {
        let mut rng = rng::stream(1, &[]);
        let idx = sir_resample(&[0.0, 1.0, 0.0], 100, &mut rng);
        assert!(idx.iter().all(|&i| i == 1));
    }

    #[test]
    fn walk_zero_step_is_identity() {
        let set = ModelSet::builtin();
        let cfg = crate::model::nominal_configuration(set.model("a1").unwrap());
        let mut rng = rng::stream(2, &[]);
        let out = nn_random_walk(&cfg, &set, 0.0, 0.05, &mut rng).unwrap();
        assert_eq!(out.leg_type, cfg.leg_type);
        for (a, b) in cfg.params.iter().zip(&out.params) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn walk_stays_in_envelope_from_boundary() {
        let set = ModelSet::builtin();
        let model = set.model("a1").unwrap();
        let mut cfg = crate::model::nominal_configuration(model);
        for (i, p) in cfg.params.iter_mut().enumerate() {
            *p = model.parameter_ranges[i].1;
        }
        let mut rng = rng::stream(3, &[]);
        for _ in 0..200 {
            let out = nn_random_walk(&cfg, &set, 0.3, 0.05, &mut rng).unwrap();
            out.validate(model).unwrap();
        }
    }

    #[test]
    fn walk_mean_displacement_matches_folded_normal() {
        let set = ModelSet::builtin();
        let model = set.model("aliengo").unwrap();
        let cfg = crate::model::nominal_configuration(model);
        let sigma = 0.05;
        let mut rng = rng::stream(4, &[]);
        let mut sum = 0.0;
        let mut count = 0usize;
        for _ in 0..10_000 {
            let out = nn_random_walk(&cfg, &set, sigma, 0.0, &mut rng).unwrap();
            let a = cfg.normalize(model);
            let b = out.normalize(model);
            for (x, y) in a.values.iter().zip(&b.values) {
                sum += (x - y).abs();
                count += 1;
            }
        }
        let mean = sum / count as f64;
        let expect = sigma * (2.0 / std::f64::consts::PI).sqrt();
        assert!(
            (mean - expect).abs() / expect < 0.02,
            "mean {mean} vs {expect}"
        );
    }
}
