//! Experiment specification: the TOML schema accepted by `run`, `audit`,
//! and `validate`, plus its validation rules.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use uniquad::curriculum::{SamplingStrategy, SplitFractions};
use uniquad::model::ModelSet;
use uniquad::sim::{SimParams, SweepAxis};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    CurriculumCompare,
    RobustnessSweep,
    PdGrid,
    StandAudit,
    SurrogateCurriculum,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CurriculumSection {
    pub n_p: usize,
    pub epochs: usize,
    pub strategies: Vec<SamplingStrategy>,
    /// Name of a PD-gain strategy from the model-set data file.
    #[serde(default = "default_pd_strategy")]
    pub pd_strategy: String,
    #[serde(default = "default_split")]
    pub split: SplitFractions,
    /// Rollout length per member per epoch (curriculum_compare only).
    #[serde(default = "default_episode_s")]
    pub episode_s: f64,
    /// Half-decay radius of the surrogate oracle.
    #[serde(default = "default_half_radius")]
    pub surrogate_half_radius: f64,
    /// Dead radius of the surrogate oracle (distance with perfect tracking).
    #[serde(default)]
    pub surrogate_dead_radius: f64,
}

fn default_pd_strategy() -> String {
    "adaptive".into()
}

fn default_split() -> SplitFractions {
    SplitFractions::ours()
}

fn default_episode_s() -> f64 {
    8.0
}

fn default_half_radius() -> f64 {
    0.5
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub model: String,
    pub axis: SweepAxis,
    pub values: Vec<f64>,
    pub trials: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PdGridSection {
    pub model: String,
    pub kp: Vec<f64>,
    pub kd: Vec<f64>,
    pub trials: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AuditSection {
    pub samples_per_model: usize,
    #[serde(default = "default_pd_strategy")]
    pub pd_strategy: String,
}

#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimSection {
    pub dt: Option<f64>,
    pub control_substeps: Option<usize>,
    pub solver_sweeps: Option<usize>,
}

impl SimSection {
    pub fn resolve(&self) -> SimParams {
        let mut params = SimParams::default();
        if let Some(dt) = self.dt {
            params.dt = dt;
        }
        if let Some(n) = self.control_substeps {
            params.control_substeps = n;
        }
        if let Some(n) = self.solver_sweeps {
            params.solver_sweeps = n;
        }
        params
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub mode: Mode,
    pub out_dir: PathBuf,
    pub seeds: Vec<u64>,
    /// Path to a model-set data file; omitted means the built-in set
    /// (or `UNIQUAD_MODEL_SET` if that variable is set).
    pub model_set: Option<PathBuf>,
    #[serde(default)]
    pub sim: SimSection,
    pub curriculum: Option<CurriculumSection>,
    pub sweep: Option<SweepSection>,
    pub pd_grid: Option<PdGridSection>,
    pub audit: Option<AuditSection>,
}

impl ExperimentSpec {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading spec file {}", path.display()))?;
        let spec: ExperimentSpec = toml::from_str(&text)
            .with_context(|| format!("parsing spec file {}", path.display()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            bail!("spec: `seeds` must be nonempty");
        }
        self.sim.resolve().validate()?;
        match self.mode {
            Mode::CurriculumCompare | Mode::SurrogateCurriculum => {
                let c = self
                    .curriculum
                    .as_ref()
                    .context("spec: curriculum modes need a [curriculum] section")?;
                c.split.validate()?;
                if c.epochs == 0 || c.strategies.is_empty() {
                    bail!("spec: [curriculum] needs epochs > 0 and at least one strategy");
                }
                if c.episode_s <= 0.0 || c.surrogate_half_radius <= 0.0 || c.surrogate_dead_radius < 0.0 {
                    bail!("spec: [curriculum] durations and radii must be positive");
                }
            }
            Mode::RobustnessSweep => {
                let s = self
                    .sweep
                    .as_ref()
                    .context("spec: robustness_sweep needs a [sweep] section")?;
                if s.values.is_empty() || s.trials == 0 {
                    bail!("spec: [sweep] needs values and trials > 0");
                }
            }
            Mode::PdGrid => {
                let g = self
                    .pd_grid
                    .as_ref()
                    .context("spec: pd_grid needs a [pd_grid] section")?;
                if g.kp.is_empty() || g.kd.is_empty() || g.trials == 0 {
                    bail!("spec: [pd_grid] needs kp, kd and trials > 0");
                }
            }
            Mode::StandAudit => {
                let a = self
                    .audit
                    .as_ref()
                    .context("spec: stand_audit needs an [audit] section")?;
                if a.samples_per_model == 0 {
                    bail!("spec: [audit] samples_per_model must be > 0 (empty report)");
                }
            }
        }
        Ok(())
    }

    /// Loads the model set named by the spec, the `UNIQUAD_MODEL_SET`
    /// environment variable, or the built-in data file, in that order.
    pub fn load_model_set(&self) -> Result<(ModelSet, String)> {
        if let Some(path) = &self.model_set {
            let set = ModelSet::load(path)?;
            return Ok((set, path.display().to_string()));
        }
        if let Ok(path) = std::env::var("UNIQUAD_MODEL_SET") {
            let set = ModelSet::load(&path)?;
            return Ok((set, path));
        }
        Ok((ModelSet::builtin(), "builtin".into()))
    }
}
