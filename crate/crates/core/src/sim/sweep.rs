//! Robustness sweeps, PD-gain grid evaluation, and a fast surrogate
//! tracking oracle for curriculum experiments.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::curriculum::TrackingRecord;
use crate::error::{Error, Result};
use crate::model::{nominal_configuration, ReferenceModel, RobotConfiguration, NUM_JOINTS};
use crate::policy::{GaitParams, TrotPolicy};
use crate::rng::stream;
use crate::sampling::{Command, V_X_MAX, V_Y_MAX};
use crate::sim::episode::{run_episode, EpisodeOptions, PushSpec};
use crate::sim::{SimContext, SimParams};

/// Length of each trial rollout in seconds.
const TRIAL_DURATION: f64 = 4.0;
const PUSH_DURATION: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    /// Sustained horizontal push of the given magnitude (N) for 1 s at
    /// the trial midpoint, random direction per trial.
    PushForce,
    /// Ground friction coefficient override.
    Friction,
    /// Multiplier on the base-mass parameter.
    BaseMassScale,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepSpec {
    pub axis: SweepAxis,
    pub values: Vec<f64>,
    pub trials: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepPoint {
    pub value: f64,
    pub success_rate: f64,
    pub trials: usize,
}

/// Random linear-velocity command held for the whole trial.
fn trial_command(rng: &mut crate::rng::Stream) -> Command {
    use rand::Rng;
    Command {
        v_x: rng.gen_range(-V_X_MAX..=V_X_MAX),
        v_y: rng.gen_range(-V_Y_MAX..=V_Y_MAX),
        omega_z: 0.0,
        duration: TRIAL_DURATION,
    }
}

fn run_trial(
    cfg: &RobotConfiguration,
    model: &ReferenceModel,
    params: SimParams,
    options: &EpisodeOptions,
    rng: &mut crate::rng::Stream,
) -> Result<bool> {
    let ctx = SimContext::new(cfg, model, params)?;
    let mut policy = TrotPolicy::new(cfg, &model.joint_limits, GaitParams::default());
    let protocol = [trial_command(rng)];
    let result = run_episode(&ctx, &mut policy, &protocol, options)?;
    Ok(result.completed())
}

/// Sweeps one perturbation axis and reports the rollout success rate at
/// each grid value.
pub fn robustness_sweep(
    cfg: &RobotConfiguration,
    model: &ReferenceModel,
    params: SimParams,
    spec: &SweepSpec,
    seed: u64,
) -> Result<Vec<SweepPoint>> {
    use rand::Rng;
    if spec.trials == 0 || spec.values.is_empty() {
        return Err(Error::domain("sweep needs at least one value and one trial"));
    }
    spec.values
        .par_iter()
        .enumerate()
        .map(|(i, &value)| {
            let successes: Result<Vec<bool>> = (0..spec.trials)
                .into_par_iter()
                .map(|t| {
                    let mut rng = stream(seed, &[0x5eeb, i as u64, t as u64]);
                    let mut cfg = cfg.clone();
                    let mut options = EpisodeOptions::default();
                    match spec.axis {
                        SweepAxis::PushForce => {
                            let theta = rng.gen_range(0.0..std::f64::consts::TAU);
                            options.push = Some(PushSpec {
                                force: [value * theta.cos(), value * theta.sin(), 0.0],
                                start: (TRIAL_DURATION - PUSH_DURATION) / 2.0,
                                duration: PUSH_DURATION,
                            });
                        }
                        SweepAxis::Friction => options.friction_override = Some(value),
                        SweepAxis::BaseMassScale => {
                            cfg.params[crate::model::slots::BASE_MASS] *= value;
                        }
                    }
                    run_trial(&cfg, model, params, &options, &mut rng)
                })
                .collect();
            let successes = successes?;
            let ok = successes.iter().filter(|&&b| b).count();
            Ok(SweepPoint {
                value,
                success_rate: ok as f64 / spec.trials as f64,
                trials: spec.trials,
            })
        })
        .collect()
}

/// Evaluates rollout success over a (K_p, K_d) grid on the nominal
/// morphology. Returns rows in K_p order; each row spans the K_d grid.
pub fn pd_grid_sweep(
    model: &ReferenceModel,
    params: SimParams,
    kp_values: &[f64],
    kd_values: &[f64],
    trials: usize,
    seed: u64,
) -> Result<Vec<Vec<f64>>> {
    if kp_values.is_empty() || kd_values.is_empty() || trials == 0 {
        return Err(Error::domain("pd grid needs nonempty grids and trials"));
    }
    let base = nominal_configuration(model);
    let cells: Vec<(usize, usize)> = (0..kp_values.len())
        .flat_map(|i| (0..kd_values.len()).map(move |j| (i, j)))
        .collect();
    let flat: Result<Vec<f64>> = cells
        .par_iter()
        .map(|&(i, j)| {
            let mut cfg = base.clone();
            cfg.pd_gains = vec![(kp_values[i], kd_values[j]); NUM_JOINTS];
            let mut ok = 0usize;
            for t in 0..trials {
                let mut rng = stream(seed, &[0x9d61, i as u64, j as u64, t as u64]);
                if run_trial(&cfg, model, params, &EpisodeOptions::default(), &mut rng)? {
                    ok += 1;
                }
            }
            Ok(ok as f64 / trials as f64)
        })
        .collect();
    let flat = flat?;
    Ok(flat
        .chunks(kd_values.len())
        .map(|row| row.to_vec())
        .collect())
}

/// Distance-based stand-in for rollout tracking: performance is perfect
/// inside a dead radius and decays linearly with normalized parameter
/// distance beyond it. The dead radius absorbs the distance floor coming
/// from the always-full-range slots (nominal joint positions and torque
/// limits), so the decay actually discriminates between sampling ranges.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SurrogateOracle {
    /// Distance below which tracking is perfect.
    pub dead_radius: f64,
    /// Distance beyond the dead radius at which tracking has dropped by half.
    pub half_radius: f64,
}

impl Default for SurrogateOracle {
    fn default() -> Self {
        SurrogateOracle {
            dead_radius: 0.0,
            half_radius: 0.5,
        }
    }
}

impl SurrogateOracle {
    pub fn tracking(&self, cfg: &RobotConfiguration, model: &ReferenceModel) -> TrackingRecord {
        let nominal = nominal_configuration(model);
        let d = cfg.normalized_distance(&nominal, model);
        let excess = (d - self.dead_radius).max(0.0);
        let tr = (1.0 - 0.5 * excess / self.half_radius).clamp(0.0, 1.0);
        TrackingRecord {
            tr_lin: tr,
            tr_zero: tr,
            steps_lin: 1,
            steps_zero: 1,
        }
    }
}

/// Convenience constructor mirroring [`SurrogateOracle::default`].
pub fn surrogate_oracle() -> SurrogateOracle {
    SurrogateOracle::default()
}
