use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::data::{Blobs, Dataset};
use super::mlp::Mlp;
use crate::error::{Error, Result};
use crate::pruning::{jaccard_mask_distance, tv_pgd_observed, MaskMode, Objective, ParamSet, Scope, TvPgdConfig, TvPgdRun};
use crate::schedules::{CyclicalSchedule, Schedule, ScheduleKind, ScheduleSpec};

pub const DEFAULT_BATCH: usize = 32;

/// Mini-batch cross-entropy of an [`Mlp`] on a training set. Rows are
/// reshuffled with a seeded RNG at the start of every epoch.
pub struct MlpObjective<'a> {
    model: Mlp,
    data: &'a Dataset,
    batch_size: usize,
    rng: ChaCha8Rng,
    order: Vec<usize>,
    cursor: usize,
}

impl<'a> MlpObjective<'a> {
    pub fn new(model: Mlp, data: &'a Dataset, batch_size: usize, seed: u64) -> Result<Self> {
        if batch_size == 0 {
            return Err(Error::invalid("batch_size", "must be positive"));
        }
        if data.is_empty() {
            return Err(Error::invalid("dataset", "must be non-empty"));
        }
        let order: Vec<usize> = (0..data.len()).collect();
        Ok(Self {
            model,
            data,
            batch_size: batch_size.min(data.len()),
            rng: ChaCha8Rng::seed_from_u64(seed),
            order,
            cursor: usize::MAX,
        })
    }

    fn next_batch(&mut self) -> Vec<usize> {
        if self.cursor >= self.order.len() {
            self.order.shuffle(&mut self.rng);
            self.cursor = 0;
        }
        let end = (self.cursor + self.batch_size).min(self.order.len());
        let batch = self.order[self.cursor..end].to_vec();
        self.cursor = end;
        batch
    }

    pub fn into_model(self) -> Mlp {
        self.model
    }
}

impl Objective for MlpObjective<'_> {
    fn loss_grad(&mut self, params: &ParamSet, iter: usize) -> Result<(f64, ParamSet)> {
        self.model.set_params(params.clone())?;
        let batch = self.next_batch();
        self.model.gradient(self.data, &batch).map_err(|e| match e {
            Error::NonFinite { quantity, .. } => Error::NonFinite { quantity, iter },
            other => other,
        })
    }
}

/// Runs [`tv_pgd_observed`] on mini-batches of `data`, starting from `model`.
pub fn train_with<F>(model: &Mlp, data: &Dataset, config: &TvPgdConfig, batch_size: usize, observe: F) -> Result<(Mlp, TvPgdRun)>
where
    F: FnMut(usize, &ParamSet, &crate::pruning::PruneMask),
{
    let mut objective = MlpObjective::new(model.clone(), data, batch_size, config.seed)?;
    let run = tv_pgd_observed(&mut objective, model.params().clone(), config, observe)?;
    let mut trained = objective.into_model();
    trained.set_params(run.params.clone())?;
    Ok((trained, run))
}

/// Dense momentum-SGD training at a constant learning rate.
pub fn train_dense(model: &Mlp, data: &Dataset, iters: usize, lr: f64, batch_size: usize, seed: u64) -> Result<Mlp> {
    let config = TvPgdConfig {
        total_iters: iters,
        prune_interval: iters + 1,
        sparsity: ScheduleSpec::constant(iters, 0.0).into(),
        learning_rate: ScheduleSpec::constant(iters, lr).into(),
        mask_mode: MaskMode::InPlaceEveryStep,
        scope: Scope::Local,
        momentum: 0.9,
        zero_pruned_momentum: false,
        skip_step_at_prune: false,
        prune_until: None,
        seed,
    };
    Ok(train_with(model, data, &config, batch_size, |_, _, _| {})?.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "arm")]
pub enum PruneArm {
    /// Prune to the target at `t = 0`, then fine-tune with the mask frozen.
    OneShot,
    /// Cubic ramp with `η = 0` at prune iterations; masks only shrink.
    Gradual,
    /// `cycles` cubic ramps with sparsity and learning-rate resets.
    Cyclical { cycles: usize },
}

fn default_interval() -> usize {
    10
}
fn default_base_lr() -> f64 {
    1e-2
}
fn default_drop_factor() -> f64 {
    0.1
}
fn default_drop_fraction() -> f64 {
    0.75
}
fn default_ramp_fraction() -> f64 {
    0.8
}
fn default_momentum() -> f64 {
    0.9
}

/// Knobs shared by the pruning arms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmSettings {
    pub target: f64,
    /// Iteration budget of the pruning phase.
    pub total_iters: usize,
    #[serde(default = "default_interval")]
    pub prune_interval: usize,
    #[serde(default = "default_base_lr")]
    pub base_lr: f64,
    /// Learning rate is multiplied by this after `lr_drop_fraction` of each
    /// horizon (each cycle, for cyclical arms).
    #[serde(default = "default_drop_factor")]
    pub lr_drop_factor: f64,
    #[serde(default = "default_drop_fraction")]
    pub lr_drop_fraction: f64,
    /// Share of each horizon spent ramping sparsity; the rest fine-tunes.
    #[serde(default = "default_ramp_fraction")]
    pub ramp_fraction: f64,
    /// Starting sparsity of cycles after the first (defaults to half the target).
    #[serde(default)]
    pub later_initial: Option<f64>,
    #[serde(default = "default_momentum")]
    pub momentum: f64,
    #[serde(default)]
    pub scope: Scope,
    #[serde(default)]
    pub seed: u64,
}

impl ArmSettings {
    pub fn new(target: f64, total_iters: usize) -> Self {
        Self {
            target,
            total_iters,
            prune_interval: default_interval(),
            base_lr: default_base_lr(),
            lr_drop_factor: default_drop_factor(),
            lr_drop_fraction: default_drop_fraction(),
            ramp_fraction: default_ramp_fraction(),
            later_initial: None,
            momentum: default_momentum(),
            scope: Scope::Local,
            seed: 0,
        }
    }

    fn lr_kind(&self) -> ScheduleKind {
        ScheduleKind::PiecewiseStepDecay {
            base: self.base_lr,
            factor: self.lr_drop_factor,
            drop_fraction: self.lr_drop_fraction,
        }
    }

    fn ramp(&self, horizon: usize) -> usize {
        ((horizon as f64 * self.ramp_fraction).round() as usize).clamp(1, horizon.max(1))
    }

    fn base_config(&self, sparsity: Schedule, learning_rate: Schedule) -> TvPgdConfig {
        TvPgdConfig {
            total_iters: self.total_iters,
            prune_interval: self.prune_interval,
            sparsity,
            learning_rate,
            mask_mode: MaskMode::InPlaceEveryStep,
            scope: self.scope,
            momentum: self.momentum,
            zero_pruned_momentum: false,
            skip_step_at_prune: false,
            prune_until: None,
            seed: self.seed,
        }
    }

    fn cyclical(&self, inner: ScheduleKind, cycles: usize) -> TvPgdConfig {
        let t = self.total_iters;
        let later = self.later_initial.unwrap_or(0.5 * self.target);
        let sparsity = CyclicalSchedule::new(inner, t, cycles).with_initials(0.0, later);
        let lr = CyclicalSchedule::new(self.lr_kind(), t, cycles);
        self.base_config(sparsity.into(), lr.into())
    }

    /// TV-PGD configuration realising `arm`.
    pub fn config(&self, arm: PruneArm) -> TvPgdConfig {
        let t = self.total_iters;
        let lr: Schedule = ScheduleSpec::new(t, self.lr_kind()).into();
        match arm {
            PruneArm::OneShot => {
                let mut c = self.base_config(ScheduleSpec::step(t, 0, self.target).into(), lr);
                c.prune_interval = t + 1;
                c.skip_step_at_prune = true;
                c
            }
            PruneArm::Gradual => {
                let kind = ScheduleKind::Cubic {
                    initial: 0.0,
                    target: self.target,
                    ramp_iters: Some(self.ramp(t)),
                };
                let mut c = self.base_config(ScheduleSpec::new(t, kind).into(), lr);
                c.skip_step_at_prune = true;
                c
            }
            PruneArm::Cyclical { cycles } => {
                let len = t / cycles.max(1);
                let inner = ScheduleKind::Cubic {
                    initial: 0.0,
                    target: self.target,
                    ramp_iters: Some(self.ramp(len)),
                };
                self.cyclical(inner, cycles)
            }
        }
    }

    /// Configuration for one arm of the per-cycle schedule ablation.
    pub fn ablation_config(&self, arm: AblationArm, cycles: usize) -> TvPgdConfig {
        let len = self.total_iters / cycles.max(1);
        let ramp = Some(self.ramp(len));
        let target = self.target;
        let inner = match arm {
            AblationArm::Cubic | AblationArm::FinetuneOnly => ScheduleKind::Cubic {
                initial: 0.0,
                target,
                ramp_iters: ramp,
            },
            AblationArm::Linear => ScheduleKind::Linear {
                initial: 0.0,
                target,
                ramp_iters: ramp,
            },
            AblationArm::Step => ScheduleKind::Step {
                step_iter: len / 2,
                target,
                initial: 0.0,
            },
        };
        let mut c = self.cyclical(inner, cycles);
        if arm == AblationArm::FinetuneOnly {
            c.prune_until = Some(len);
        }
        c
    }
}

/// Outcome of pruning a model with one arm.
#[derive(Debug, Clone)]
pub struct ArmResult {
    pub model: Mlp,
    pub run: TvPgdRun,
    pub test_loss: f64,
    pub test_accuracy: f64,
}

pub fn run_arm(model: &Mlp, blobs: &Blobs, config: &TvPgdConfig, batch_size: usize) -> Result<ArmResult> {
    let (model, run) = train_with(model, &blobs.train, config, batch_size, |_, _, _| {})?;
    let (test_loss, test_accuracy) = model.evaluate(&blobs.test)?;
    Ok(ArmResult {
        model,
        run,
        test_loss,
        test_accuracy,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AblationArm {
    Cubic,
    Linear,
    Step,
    /// Cyclical pruning in cycle 1 only; later cycles keep that mask and
    /// fine-tune with the cyclical learning rate.
    FinetuneOnly,
}

impl std::str::FromStr for AblationArm {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cubic" => Ok(AblationArm::Cubic),
            "linear" => Ok(AblationArm::Linear),
            "step" => Ok(AblationArm::Step),
            "finetune_only" => Ok(AblationArm::FinetuneOnly),
            other => Err(Error::invalid("ablation arm", format!("unknown arm `{other}`"))),
        }
    }
}

/// State at the end of one cycle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CycleRecord {
    /// One-based.
    pub cycle: usize,
    pub accuracy: f64,
    /// Jaccard distance between this cycle's final mask and cycle 1's.
    pub mask_jaccard: f64,
    /// Regrown fraction at the last prune event of the cycle.
    pub regrown_fraction: f64,
}

#[derive(Debug, Clone)]
pub struct AblationResult {
    pub cycles: Vec<CycleRecord>,
    pub run: TvPgdRun,
}

/// Cyclical pruning of `model` with the per-cycle shape `arm`, recording
/// test accuracy and mask drift at every cycle end.
pub fn cycle_ablation(
    model: &Mlp,
    blobs: &Blobs,
    arm: AblationArm,
    cycles: usize,
    settings: &ArmSettings,
    batch_size: usize,
) -> Result<AblationResult> {
    if cycles < 2 {
        return Err(Error::invalid("cycles", "the ablation needs at least 2 cycles"));
    }
    let config = settings.ablation_config(arm, cycles);
    config.validate()?;
    let len = config.total_iters / cycles;
    let ends: Vec<usize> = (1..=cycles)
        .map(|m| if m == cycles { config.total_iters - 1 } else { m * len - 1 })
        .collect();

    let mut probe = model.clone();
    let mut ends_seen = Vec::with_capacity(cycles);
    let mut failure = None;
    let (_, run) = train_with(model, &blobs.train, &config, batch_size, |t, params, mask| {
        if failure.is_some() || !ends.contains(&t) {
            return;
        }
        let outcome = probe
            .set_params(params.clone())
            .and_then(|_| probe.evaluate(&blobs.test));
        match outcome {
            Ok((_, acc)) => ends_seen.push((t, acc, mask.clone())),
            Err(e) => failure = Some(e),
        }
    })?;
    if let Some(e) = failure {
        return Err(e);
    }

    let first_mask = ends_seen[0].2.clone();
    let mut records = Vec::with_capacity(cycles);
    for (m, (t, accuracy, mask)) in ends_seen.into_iter().enumerate() {
        let last_event = run
            .history
            .snapshots()
            .iter()
            .rev()
            .find(|(s, _)| *s <= t)
            .map(|(s, _)| *s);
        let regrown_fraction = match last_event {
            Some(s) => run.history.regrown_fraction(s)?,
            None => 0.0,
        };
        records.push(CycleRecord {
            cycle: m + 1,
            accuracy,
            mask_jaccard: jaccard_mask_distance(&first_mask, &mask)?,
            regrown_fraction,
        });
    }
    Ok(AblationResult { cycles: records, run })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::data::make_blobs;

    fn small() -> (Mlp, Blobs) {
        let blobs = make_blobs(3, 6, 40, 0.3, 5).unwrap();
        (Mlp::new(&[6, 16, 3], 2).unwrap(), blobs)
    }

    #[test]
    fn batches_cover_each_epoch_once() {
        let (m, b) = small();
        let mut obj = MlpObjective::new(m, &b.train, 10, 1).unwrap();
        let mut seen: Vec<usize> = (0..b.train.len().div_ceil(10)).flat_map(|_| obj.next_batch()).collect();
        seen.sort_unstable();
        assert_eq!(seen, (0..b.train.len()).collect::<Vec<_>>());
    }

    #[test]
    fn dense_training_is_deterministic() {
        let (m, b) = small();
        let a = train_dense(&m, &b.train, 50, 0.05, 8, 3).unwrap();
        let c = train_dense(&m, &b.train, 50, 0.05, 8, 3).unwrap();
        assert_eq!(a.params(), c.params());
        assert_ne!(a.params(), m.params());
    }

    #[test]
    fn arm_configs_validate() {
        let s = ArmSettings::new(0.9, 300);
        for arm in [PruneArm::OneShot, PruneArm::Gradual, PruneArm::Cyclical { cycles: 3 }] {
            s.config(arm).validate().unwrap();
        }
        for arm in [AblationArm::Cubic, AblationArm::Linear, AblationArm::Step, AblationArm::FinetuneOnly] {
            s.ablation_config(arm, 3).validate().unwrap();
        }
        let one = s.config(PruneArm::OneShot);
        assert!(one.is_prune_iter(0) && !(1..300).any(|t| one.is_prune_iter(t)));
    }

    #[test]
    fn finetune_arm_keeps_first_mask() {
        let (m, b) = small();
        let s = ArmSettings::new(0.8, 150);
        let r = cycle_ablation(&m, &b, AblationArm::FinetuneOnly, 3, &s, 16).unwrap();
        assert_eq!(r.cycles.len(), 3);
        assert!(r.cycles.iter().all(|c| c.mask_jaccard == 0.0));
        assert!(r.run.history.snapshots().iter().all(|(t, _)| *t < 50));
    }

    #[test]
    fn cubic_arm_moves_mask() {
        let (m, b) = small();
        let mut s = ArmSettings::new(0.8, 1500);
        s.base_lr = 0.05;
        let r = cycle_ablation(&m, &b, AblationArm::Cubic, 3, &s, 16).unwrap();
        assert_eq!(r.cycles[0].mask_jaccard, 0.0);
        assert!(r.cycles[1].mask_jaccard > 0.0);
        assert!(r.cycles[2].mask_jaccard > 0.0);
        assert!(r.run.history.regrown_fraction(500).unwrap() > 0.0);
        assert!(!r.run.history.recovery_events().is_empty());
        assert!(cycle_ablation(&m, &b, AblationArm::Cubic, 1, &s, 16).is_err());
    }
}
