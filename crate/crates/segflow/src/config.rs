//! Experiment configuration: a schema-versioned JSON file that resolves
//! into runtime objects. Unknown keys are rejected everywhere so typos
//! fail loudly, and parse → serialize → parse is the identity.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::core::{AlphaDensity, Atom, Condition, Piece, TimeGrid, WeightSchedule};
use crate::error::{Error, Result};
use crate::fields::{GaussianMixtureTarget, GmmField, VelocityField, DEFAULT_T_MIN};
use crate::trainer::{ConditionSampling, MlpField, OptimizerKind, TrainConfig};
use crate::transport::{DensitySchedule, Estimator, TransportConfig, Variant};

pub const SCHEMA_VERSION: u32 = 1;

/// A velocity field resolved from the configuration.
pub type BoxedField = Box<dyn VelocityField + Send + Sync>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "snake_case")]
pub enum TargetSpec {
    /// Inline analytic mixture.
    Mixture(GaussianMixtureTarget),
    /// Path to a trained checkpoint (relative paths resolve against the
    /// config file's directory).
    Checkpoint(PathBuf),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConditionPair {
    pub a: Condition,
    pub b: Condition,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "snake_case")]
pub enum DensitySpec {
    /// Named preset: "paper-image", "paper-video", "paper-3d",
    /// "uniform" or "endpoints".
    Preset(String),
    Inline {
        #[serde(default)]
        atoms: Vec<Atom>,
        #[serde(default)]
        pieces: Vec<Piece>,
    },
}

impl DensitySpec {
    pub fn resolve(&self) -> Result<AlphaDensity> {
        match self {
            DensitySpec::Preset(name) => AlphaDensity::preset(name).ok_or_else(|| {
                Error::Config(format!("unknown density preset '{name}'"))
            }),
            DensitySpec::Inline { atoms, pieces } => {
                AlphaDensity::new(atoms.clone(), pieces.clone())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "snake_case")]
pub enum WeightsSpec {
    /// Named preset rescaled onto the configured grid length. Accepts
    /// the same names with a "-schedule" suffix.
    Preset(String),
    Explicit {
        breakpoints: Vec<(usize, f64)>,
        #[serde(default)]
        allow_non_monotone: bool,
    },
}

impl WeightsSpec {
    pub fn resolve(&self, n_steps: usize) -> Result<WeightSchedule> {
        match self {
            WeightsSpec::Preset(name) => {
                let canonical = name.strip_suffix("-schedule").unwrap_or(name);
                WeightSchedule::preset(canonical, n_steps).ok_or_else(|| {
                    Error::Config(format!("unknown weight-schedule preset '{name}'"))
                })
            }
            WeightsSpec::Explicit {
                breakpoints,
                allow_non_monotone,
            } => {
                if *allow_non_monotone {
                    WeightSchedule::new_allow_non_monotone(breakpoints.clone())
                } else {
                    WeightSchedule::new(breakpoints.clone())
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DensityScheduleKind {
    /// The same density at every step.
    Fixed,
    /// Midpoint-atom-heavy early, the configured density late, blended
    /// along the weight schedule.
    MidpointBlend,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransportSpec {
    pub variant: Variant,
    pub k: usize,
    pub steps: usize,
    pub density: DensitySpec,
    #[serde(default = "default_density_schedule")]
    pub density_schedule: DensityScheduleKind,
    pub weights: WeightsSpec,
    #[serde(default = "default_estimator")]
    pub estimator: Estimator,
    #[serde(default)]
    pub cutoff_step: Option<usize>,
}

fn default_density_schedule() -> DensityScheduleKind {
    DensityScheduleKind::MidpointBlend
}

fn default_estimator() -> Estimator {
    Estimator::Grid
}

impl TransportSpec {
    pub fn resolve(&self, seed: u64) -> Result<TransportConfig> {
        let weights = self.weights.resolve(self.steps)?;
        let base_density = self.density.resolve()?;
        let density = match self.density_schedule {
            DensityScheduleKind::Fixed => DensitySchedule::Fixed(base_density),
            DensityScheduleKind::MidpointBlend => DensitySchedule::MidpointBlend {
                target: base_density,
                weights: weights.clone(),
            },
        };
        let cfg = TransportConfig {
            variant: self.variant,
            k: self.k,
            density,
            weights,
            grid: TimeGrid::uniform(self.steps)?,
            estimator: self.estimator,
            cutoff_step: self.cutoff_step,
            seed,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSpec {
    pub batch_size: usize,
    pub steps: usize,
    pub learning_rate: f64,
    #[serde(default = "default_optimizer")]
    pub optimizer: OptimizerKind,
    #[serde(default = "default_hidden")]
    pub hidden: Vec<usize>,
    /// Train on c(α) with α uniform between the condition pair instead of
    /// only the two endpoints.
    #[serde(default)]
    pub interpolate_conditions: bool,
}

fn default_optimizer() -> OptimizerKind {
    OptimizerKind::Adam
}

fn default_hidden() -> Vec<usize> {
    vec![64, 64]
}

impl TrainSpec {
    pub fn resolve(&self, pair: &ConditionPair, t_min: f64, seed: u64) -> TrainConfig {
        let conditions = if self.interpolate_conditions {
            ConditionSampling::InterpolatedPair {
                a: pair.a.clone(),
                b: pair.b.clone(),
            }
        } else if pair.a == pair.b {
            ConditionSampling::Fixed(vec![pair.a.clone()])
        } else {
            ConditionSampling::Fixed(vec![pair.a.clone(), pair.b.clone()])
        };
        TrainConfig {
            batch_size: self.batch_size,
            steps: self.steps,
            learning_rate: self.learning_rate,
            optimizer: self.optimizer,
            seed,
            hidden: self.hidden.clone(),
            conditions,
            t_min,
        }
    }
}

/// Tolerances used by the diagnose command. Every field can be tightened
/// (or zeroed, to force the failure path) from the config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    /// Max relative error between analytic and finite-difference
    /// gradients.
    pub gradcheck_rel: f64,
    /// Oracle agreement: |v̂ − v| ≤ max(stderr_mult·stderr, rel·|v|).
    pub oracle_stderr_mult: f64,
    pub oracle_rel: f64,
    /// Fraction of oracle probes that must agree.
    pub oracle_pass_fraction: f64,
    /// Accepted band for kl_proxy / numerical_kl.
    pub kl_ratio_low: f64,
    pub kl_ratio_high: f64,
    /// Norm-residual convergence: log2 of the max-residual ratio between
    /// a grid and its halved-dt refinement must land in 1 ± band.
    pub residual_slope_band: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            gradcheck_rel: 1e-4,
            oracle_stderr_mult: 3.0,
            oracle_rel: 0.02,
            oracle_pass_fraction: 0.9,
            kl_ratio_low: 0.95,
            kl_ratio_high: 1.05,
            residual_slope_band: 0.35,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub target: TargetSpec,
    pub conditions: ConditionPair,
    pub transport: TransportSpec,
    #[serde(default)]
    pub train: Option<TrainSpec>,
    pub seeds: Vec<u64>,
    pub output_dir: PathBuf,
    #[serde(default = "default_t_min")]
    pub t_min: f64,
    #[serde(default)]
    pub tolerances: Tolerances,
    /// Optional existing trajectory CSV for log-based diagnostics.
    #[serde(default)]
    pub trajectory_csv: Option<PathBuf>,
}

fn default_t_min() -> f64 {
    DEFAULT_T_MIN
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig =
            serde_json::from_str(text).map_err(|e| Error::Config(format!("{e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Load from a file; relative checkpoint/trajectory paths inside the
    /// config are rebased onto the config file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg = Self::from_json(&text)?;
        if let Some(dir) = path.parent() {
            if let TargetSpec::Checkpoint(p) = &mut cfg.target {
                if p.is_relative() {
                    *p = dir.join(&*p);
                }
            }
            if let Some(p) = &mut cfg.trajectory_csv {
                if p.is_relative() {
                    *p = dir.join(&*p);
                }
            }
        }
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "schema_version {} unsupported (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        if self.seeds.is_empty() {
            return Err(Error::Config("field 'seeds' must list at least one seed".into()));
        }
        if self.conditions.a.dim() != self.conditions.b.dim() {
            return Err(Error::Config(format!(
                "conditions a and b have different dims ({} vs {})",
                self.conditions.a.dim(),
                self.conditions.b.dim()
            )));
        }
        if !(0.0..1.0).contains(&self.t_min) {
            return Err(Error::Config("t_min must lie in [0, 1)".into()));
        }
        if let TargetSpec::Mixture(m) = &self.target {
            if m.cond_dim() != self.conditions.a.dim() {
                return Err(Error::Config(format!(
                    "target condition map expects dim {}, conditions have dim {}",
                    m.cond_dim(),
                    self.conditions.a.dim()
                )));
            }
        }
        // Exercise schedule/density resolution so bad specs fail at load.
        self.transport.resolve(0)?;
        Ok(())
    }

    /// The analytic mixture, when the target is one.
    pub fn mixture(&self) -> Result<&GaussianMixtureTarget> {
        match &self.target {
            TargetSpec::Mixture(m) => Ok(m),
            TargetSpec::Checkpoint(p) => Err(Error::Config(format!(
                "this command needs an analytic mixture target, got checkpoint {}",
                p.display()
            ))),
        }
    }

    /// Velocity field for transport: the analytic field or a loaded
    /// checkpoint.
    pub fn resolve_field(&self) -> Result<BoxedField> {
        match &self.target {
            TargetSpec::Mixture(m) => Ok(Box::new(GmmField::with_t_min(m.clone(), self.t_min))),
            TargetSpec::Checkpoint(p) => {
                let field = MlpField::load_checkpoint(p)?;
                if field.cond_dim() != self.conditions.a.dim() {
                    return Err(Error::Config(format!(
                        "checkpoint expects condition dim {}, config has {}",
                        field.cond_dim(),
                        self.conditions.a.dim()
                    )));
                }
                Ok(Box::new(field))
            }
        }
    }
}
