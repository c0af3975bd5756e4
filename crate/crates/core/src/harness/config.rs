use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linear::RecoveryTrialConfig;
use crate::net::{AblationArm, ArmSettings, BlobsConfig, PruneArm, DEFAULT_BATCH, DEFAULT_DIMS};
use crate::pruning::TvPgdConfig;
use crate::schedules::Schedule;

fn default_jobs() -> usize {
    1
}
fn default_out_dir() -> PathBuf {
    PathBuf::from("out")
}

/// A complete, self-describing experiment. The master `seed` determines
/// every random draw; seeds inside sub-configs are overwritten from it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_out_dir")]
    pub out_dir: PathBuf,
    /// Worker threads for independent trials or arms.
    #[serde(default = "default_jobs")]
    pub jobs: usize,
    #[serde(flatten)]
    pub experiment: Experiment,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "experiment", rename_all = "snake_case")]
pub enum Experiment {
    /// Evaluate schedules at every iteration into `schedule.csv`.
    ScheduleDump {
        sparsity: Schedule,
        #[serde(default)]
        learning_rate: Option<Schedule>,
    },
    /// Recovery simulations, one `linear_sim.csv` row per cell.
    LinearSim { cells: Vec<RecoveryTrialConfig> },
    /// Pretrain a dense MLP on blobs, then prune it with one arm.
    PruneTrain {
        #[serde(default)]
        task: TaskConfig,
        #[serde(default = "default_prune_arm")]
        arm: PruneArm,
        settings: ArmSettings,
        /// Explicit loop configuration; replaces `arm` and `settings`.
        #[serde(default)]
        tvpgd: Option<TvPgdConfig>,
    },
    /// Per-cycle schedule ablation; one `ablation_<arm>.csv` per arm.
    Ablate {
        #[serde(default)]
        task: TaskConfig,
        arms: Vec<AblationArm>,
        cycles: usize,
        settings: ArmSettings,
    },
}

fn default_prune_arm() -> PruneArm {
    PruneArm::Cyclical { cycles: 5 }
}

impl Experiment {
    pub fn kind(&self) -> &'static str {
        match self {
            Experiment::ScheduleDump { .. } => "schedule_dump",
            Experiment::LinearSim { .. } => "linear_sim",
            Experiment::PruneTrain { .. } => "prune_train",
            Experiment::Ablate { .. } => "ablate",
        }
    }
}

fn default_task_dims() -> Vec<usize> {
    DEFAULT_DIMS.to_vec()
}
fn default_batch() -> usize {
    DEFAULT_BATCH
}
fn default_pretrain_iters() -> usize {
    500
}
fn default_pretrain_lr() -> f64 {
    1e-2
}

/// Blobs data plus the dense model that the pruning arms start from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskConfig {
    #[serde(default)]
    pub blobs: BlobsConfig,
    #[serde(default = "default_task_dims")]
    pub dims: Vec<usize>,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    #[serde(default = "default_pretrain_iters")]
    pub pretrain_iters: usize,
    #[serde(default = "default_pretrain_lr")]
    pub pretrain_lr: f64,
}

impl Default for TaskConfig {
    fn default() -> Self {
        Self {
            blobs: BlobsConfig::default(),
            dims: default_task_dims(),
            batch_size: default_batch(),
            pretrain_iters: default_pretrain_iters(),
            pretrain_lr: default_pretrain_lr(),
        }
    }
}

impl TaskConfig {
    pub fn validate(&self) -> Result<()> {
        let b = &self.blobs;
        if b.num_classes == 0 || b.dim == 0 || b.samples_per_class == 0 {
            return Err(Error::invalid("blobs", "sizes must be positive"));
        }
        if !(b.spread >= 0.0 && b.spread.is_finite()) {
            return Err(Error::invalid("blobs.spread", "must be non-negative"));
        }
        if self.dims.len() < 2 || self.dims.contains(&0) {
            return Err(Error::invalid("dims", format!("{:?} needs ≥ 2 positive sizes", self.dims)));
        }
        if self.dims[0] != b.dim || *self.dims.last().unwrap() != b.num_classes {
            return Err(Error::invalid(
                "dims",
                format!("{:?} must start at {} and end at {}", self.dims, b.dim, b.num_classes),
            ));
        }
        if self.batch_size == 0 {
            return Err(Error::invalid("batch_size", "must be positive"));
        }
        if !(self.pretrain_lr > 0.0 && self.pretrain_lr.is_finite()) {
            return Err(Error::invalid("pretrain_lr", "must be positive"));
        }
        Ok(())
    }
}

impl ExperimentConfig {
    pub fn new(experiment: Experiment) -> Self {
        Self {
            seed: 0,
            out_dir: default_out_dir(),
            jobs: default_jobs(),
            experiment,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Checks everything that can be checked without running.
    pub fn validate(&self) -> Result<()> {
        if self.jobs == 0 {
            return Err(Error::invalid("jobs", "must be at least 1"));
        }
        match &self.experiment {
            Experiment::ScheduleDump { sparsity, learning_rate } => {
                sparsity.validate_sparsity()?;
                if let Some(lr) = learning_rate {
                    lr.validate_learning_rate()?;
                    if lr.total_iters() != sparsity.total_iters() {
                        return Err(Error::invalid("learning_rate", "horizon differs from the sparsity schedule"));
                    }
                }
            }
            Experiment::LinearSim { cells } => {
                if cells.is_empty() {
                    return Err(Error::invalid("cells", "need at least one simulation cell"));
                }
                cells.iter().try_for_each(RecoveryTrialConfig::validate)?;
            }
            Experiment::PruneTrain {
                task,
                arm,
                settings,
                tvpgd,
            } => {
                task.validate()?;
                match tvpgd {
                    Some(c) => c.validate()?,
                    None => settings.config(*arm).validate()?,
                }
            }
            Experiment::Ablate {
                task,
                arms,
                cycles,
                settings,
            } => {
                task.validate()?;
                if arms.is_empty() {
                    return Err(Error::invalid("arms", "need at least one arm"));
                }
                if *cycles < 2 {
                    return Err(Error::invalid("cycles", "the ablation needs at least 2 cycles"));
                }
                arms.iter()
                    .try_for_each(|a| settings.ablation_config(*a, *cycles).validate())?;
            }
        }
        Ok(())
    }
}
