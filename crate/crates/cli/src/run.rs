//! Mode implementations: curriculum comparisons, robustness and PD-grid
//! sweeps, and the stand-admission audit, plus the run-directory artifact
//! layout (`manifest.json`, `epochs/NNNN.json`, `metrics/*.csv`).

use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use rayon::prelude::*;
use serde::Serialize;

use uniquad::curriculum::{
    epoch_update, CurriculumState, EpochContext, EpochSummary, SamplingStrategy, TrackingRecord,
};
use uniquad::model::{nominal_configuration, ModelSet, RobotConfiguration};
use uniquad::policy::{GaitParams, TrotPolicy};
use uniquad::rng::{self, config_stream};
use uniquad::sampling::{rescale_pd_noise, sample_morphology, sample_pd, SamplingRange};
use uniquad::sim::episode::{random_protocol, run_episode, EpisodeOptions};
use uniquad::sim::{
    pd_grid_sweep, robustness_sweep, stand_admission, AdmissionFailure, AdmissionOutcome,
    SimParams, SurrogateOracle, SweepSpec,
};

use crate::spec::{ExperimentSpec, Mode};

/// FNV-1a over a byte string, for content fingerprints in the manifest.
fn fnv64(bytes: &[u8]) -> String {
    let mut h: u64 = 0xcbf29ce484222325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    format!("{h:016x}")
}

#[derive(Serialize)]
struct Manifest<'a> {
    tool_version: &'a str,
    mode: Mode,
    spec: &'a ExperimentSpec,
    sim: SimParams,
    model_set_source: String,
    /// Fingerprint of the resolved PD-strategy tables (including fitted
    /// polynomial coefficients), so CSV values trace back to exact inputs.
    strategy_hash: String,
    strategies: &'a std::collections::BTreeMap<String, uniquad::sampling::PdStrategy>,
    seeds: &'a [u64],
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut body = serde_json::to_vec_pretty(value)?;
    body.push(b'\n');
    fs::write(path, body).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

fn write_csv<R: Serialize>(path: &Path, rows: &[R]) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for row in rows {
        w.serialize(row)?;
    }
    let body = w.into_inner()?;
    fs::write(path, body).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

pub struct RunDirs {
    pub metrics: std::path::PathBuf,
    pub epochs: std::path::PathBuf,
}

pub fn prepare_out_dir(spec: &ExperimentSpec, set: &ModelSet, source: &str) -> Result<RunDirs> {
    let out = &spec.out_dir;
    let metrics = out.join("metrics");
    let epochs = out.join("epochs");
    fs::create_dir_all(&metrics)
        .with_context(|| format!("creating output directory {}", metrics.display()))?;
    fs::create_dir_all(&epochs)?;
    let strategy_json = serde_json::to_vec(&set.strategies)?;
    let manifest = Manifest {
        tool_version: env!("CARGO_PKG_VERSION"),
        mode: spec.mode,
        spec,
        sim: spec.sim.resolve(),
        model_set_source: source.to_string(),
        strategy_hash: fnv64(&strategy_json),
        strategies: &set.strategies,
        seeds: &spec.seeds,
    };
    write_json(&out.join("manifest.json"), &manifest)?;
    Ok(RunDirs { metrics, epochs })
}

// ---------------------------------------------------------------------------
// Curriculum modes

#[derive(Serialize)]
struct CurriculumRow {
    strategy: SamplingStrategy,
    seed: u64,
    epoch: u64,
    sr: f64,
    mean_weight: f64,
    tr_mean_lin: f64,
    tr_mean_zero: f64,
    replaced_fresh: usize,
    replaced_replay: usize,
    replaced_walk: usize,
    admission_exhausted: usize,
}

#[derive(Serialize)]
struct EpochSnapshot {
    strategy: SamplingStrategy,
    seed: u64,
    summary: EpochSummary,
}

/// Tracking records for the whole population, either from the surrogate
/// oracle or from simulated rollouts under the trot policy.
fn population_records(
    state: &CurriculumState,
    set: &ModelSet,
    params: SimParams,
    surrogate: Option<&SurrogateOracle>,
    episode_s: f64,
    seed: u64,
) -> Result<Vec<TrackingRecord>> {
    if let Some(oracle) = surrogate {
        return state
            .members
            .iter()
            .map(|m| {
                let model = set.model(&m.config.reference)?;
                Ok(oracle.tracking(&m.config, model))
            })
            .collect::<uniquad::Result<_>>()
            .map_err(Into::into);
    }
    let epoch = state.epoch;
    let records: uniquad::Result<Vec<TrackingRecord>> = state
        .members
        .par_iter()
        .enumerate()
        .map(|(i, m)| {
            let model = set.model(&m.config.reference)?;
            let ctx = uniquad::sim::SimContext::new(&m.config, model, params)?;
            let mut policy = TrotPolicy::new(&m.config, &model.joint_limits, GaitParams::default());
            let mut rng = config_stream(seed, i as u64, epoch);
            let protocol = random_protocol(episode_s, &mut rng);
            let result = run_episode(&ctx, &mut policy, &protocol, &EpisodeOptions::default())?;
            Ok(result.tracking_record())
        })
        .collect();
    Ok(records?)
}

pub fn run_curriculum(spec: &ExperimentSpec, set: &ModelSet, dirs: &RunDirs) -> Result<()> {
    let section = spec.curriculum.as_ref().expect("validated");
    let params = spec.sim.resolve();
    let surrogate = match spec.mode {
        Mode::SurrogateCurriculum => Some(SurrogateOracle {
            dead_radius: section.surrogate_dead_radius,
            half_radius: section.surrogate_half_radius,
        }),
        _ => None,
    };
    let pd_strategy = set
        .strategies
        .get(&section.pd_strategy)
        .with_context(|| format!("unknown pd strategy `{}`", section.pd_strategy))?;

    let mut rows: Vec<CurriculumRow> = Vec::new();
    let mut snapshots: Vec<Vec<EpochSnapshot>> = (0..section.epochs).map(|_| Vec::new()).collect();
    for &strategy in &section.strategies {
        for &seed in &spec.seeds {
            let ctx = EpochContext::new(set, pd_strategy);
            // The surrogate path replaces the simulator entirely, so
            // admission is a no-op there; the simulated path uses the
            // 2 s stand test.
            let mut admit: Box<dyn FnMut(&RobotConfiguration) -> bool> = if surrogate.is_some() {
                Box::new(|_| true)
            } else {
                Box::new(|cfg: &RobotConfiguration| {
                    set.model(&cfg.reference)
                        .map(|m| stand_admission(cfg, m, params).passed())
                        .unwrap_or(false)
                })
            };
            let mut state = CurriculumState::init(
                &ctx,
                strategy,
                section.n_p,
                section.split,
                seed,
                &mut admit,
            )?;
            for e in 0..section.epochs {
                let records = population_records(
                    &state,
                    set,
                    params,
                    surrogate.as_ref(),
                    section.episode_s,
                    seed,
                )?;
                let summary = epoch_update(&mut state, &records, strategy, &ctx, &mut admit)?;
                rows.push(CurriculumRow {
                    strategy,
                    seed,
                    epoch: state.epoch,
                    sr: summary.sr,
                    mean_weight: summary.mean_weight,
                    tr_mean_lin: summary.tr_mean_lin,
                    tr_mean_zero: summary.tr_mean_zero,
                    replaced_fresh: summary.replaced_fresh,
                    replaced_replay: summary.replaced_replay,
                    replaced_walk: summary.replaced_walk,
                    admission_exhausted: summary.admission_exhausted,
                });
                snapshots[e].push(EpochSnapshot {
                    strategy,
                    seed,
                    summary,
                });
            }
            log::info!("curriculum {strategy:?} seed {seed}: {} epochs done", section.epochs);
        }
    }
    for (e, snap) in snapshots.iter().enumerate() {
        write_json(&dirs.epochs.join(format!("{:04}.json", e + 1)), snap)?;
    }
    write_csv(&dirs.metrics.join("curriculum.csv"), &rows)?;
    Ok(())
}

// ---------------------------------------------------------------------------
// Sweep modes

#[derive(Serialize)]
struct SweepRow {
    axis: uniquad::sim::SweepAxis,
    value: f64,
    success_rate: f64,
    trials: usize,
    seed: u64,
}

pub fn run_robustness_sweep(spec: &ExperimentSpec, set: &ModelSet, dirs: &RunDirs) -> Result<()> {
    let section = spec.sweep.as_ref().expect("validated");
    let params = spec.sim.resolve();
    let model = set.model(&section.model)?;
    let cfg = nominal_configuration(model);
    let sweep = SweepSpec {
        axis: section.axis,
        values: section.values.clone(),
        trials: section.trials,
    };
    let mut rows = Vec::new();
    for &seed in &spec.seeds {
        let points = robustness_sweep(&cfg, model, params, &sweep, seed)?;
        for p in points {
            rows.push(SweepRow {
                axis: section.axis,
                value: p.value,
                success_rate: p.success_rate,
                trials: p.trials,
                seed,
            });
        }
    }
    write_csv(&dirs.metrics.join("sweep.csv"), &rows)?;
    Ok(())
}

#[derive(Serialize)]
struct PdGridRow {
    kp: f64,
    kd: f64,
    success_rate: f64,
    trials: usize,
    seed: u64,
}

pub fn run_pd_grid(spec: &ExperimentSpec, set: &ModelSet, dirs: &RunDirs) -> Result<()> {
    let section = spec.pd_grid.as_ref().expect("validated");
    let params = spec.sim.resolve();
    let model = set.model(&section.model)?;
    let mut rows = Vec::new();
    for &seed in &spec.seeds {
        let grid = pd_grid_sweep(model, params, &section.kp, &section.kd, section.trials, seed)?;
        for (i, row) in grid.iter().enumerate() {
            for (j, &sr) in row.iter().enumerate() {
                rows.push(PdGridRow {
                    kp: section.kp[i],
                    kd: section.kd[j],
                    success_rate: sr,
                    trials: section.trials,
                    seed,
                });
            }
        }
    }
    write_csv(&dirs.metrics.join("pd_grid.csv"), &rows)?;
    Ok(())
}

// ---------------------------------------------------------------------------
// Stand audit

#[derive(Serialize)]
struct AuditRow {
    model: String,
    seed: u64,
    samples: usize,
    passed: usize,
    pass_rate: f64,
    fail_diverged: usize,
    fail_collision: usize,
    fail_tilt: usize,
}

pub fn run_stand_audit(spec: &ExperimentSpec, set: &ModelSet, dirs: &RunDirs) -> Result<()> {
    let section = spec.audit.as_ref().expect("validated");
    let params = spec.sim.resolve();
    let pd_strategy = set
        .strategies
        .get(&section.pd_strategy)
        .with_context(|| format!("unknown pd strategy `{}`", section.pd_strategy))?;
    let mut rows = Vec::new();
    for &seed in &spec.seeds {
        for (mi, model) in set.models.iter().enumerate() {
            let outcomes: uniquad::Result<Vec<AdmissionOutcome>> = (0..section.samples_per_model)
                .into_par_iter()
                .map(|k| {
                    let mut rng = rng::stream(seed, &[0xa0d17, mi as u64, k as u64]);
                    let mut cfg = sample_morphology(model, SamplingRange::full(), &mut rng);
                    let mut gains = sample_pd(
                        pd_strategy,
                        &set.pd_range,
                        model,
                        cfg.total_mass(),
                        SamplingRange::full(),
                        &mut rng,
                    )?;
                    rescale_pd_noise(&mut gains, &mut rng);
                    cfg.pd_gains = gains;
                    Ok(stand_admission(&cfg, model, params))
                })
                .collect();
            let outcomes = outcomes?;
            let count = |f: AdmissionFailure| {
                outcomes
                    .iter()
                    .filter(|o| matches!(o, AdmissionOutcome::Fail(g) if *g == f))
                    .count()
            };
            let passed = outcomes.iter().filter(|o| o.passed()).count();
            let row = AuditRow {
                model: model.name.clone(),
                seed,
                samples: section.samples_per_model,
                passed,
                pass_rate: passed as f64 / section.samples_per_model as f64,
                fail_diverged: count(AdmissionFailure::Diverged),
                fail_collision: count(AdmissionFailure::Collision),
                fail_tilt: count(AdmissionFailure::Tilt),
            };
            println!(
                "audit {} seed {}: {}/{} pass ({:.0}%), diverged {}, collision {}, tilt {}",
                row.model,
                seed,
                row.passed,
                row.samples,
                100.0 * row.pass_rate,
                row.fail_diverged,
                row.fail_collision,
                row.fail_tilt
            );
            rows.push(row);
        }
    }
    write_csv(&dirs.metrics.join("stand_audit.csv"), &rows)?;
    Ok(())
}

pub fn run(spec: &ExperimentSpec) -> Result<()> {
    let (set, source) = spec.load_model_set()?;
    let dirs = prepare_out_dir(spec, &set, &source)?;
    match spec.mode {
        Mode::CurriculumCompare | Mode::SurrogateCurriculum => run_curriculum(spec, &set, &dirs),
        Mode::RobustnessSweep => run_robustness_sweep(spec, &set, &dirs),
        Mode::PdGrid => run_pd_grid(spec, &set, &dirs),
        Mode::StandAudit => run_stand_audit(spec, &set, &dirs),
    }
}
