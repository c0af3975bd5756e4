//! Time-varying projected gradient descent.
//!
//! Each iteration takes a momentum-SGD step with learning rate `η(t)`,
//! recomputes the magnitude mask at sparsity `s(t)` whenever
//! `t mod Δt = 0`, and projects the weights onto the mask. One-shot,
//! iterative, cubic, cyclical pruning and classical PGD are all choices of
//! `(s, η, Δt)`.

use serde::{Deserialize, Serialize};

use super::history::MaskHistory;
use super::mask::{apply_mask_in_place, magprune, PruneMask, Scope};
use super::params::ParamSet;
use crate::error::{Error, Result};
use crate::schedules::Schedule;

/// Loss and gradient oracle for the weights being pruned.
pub trait Objective {
    /// Loss and gradient at `params` for iteration `iter` (the iteration
    /// selects the mini-batch, if any).
    fn loss_grad(&mut self, params: &ParamSet, iter: usize) -> Result<(f64, ParamSet)>;
}

/// When the current mask is projected onto the weights.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaskMode {
    /// After every gradient step.
    #[default]
    InPlaceEveryStep,
    /// Only at prune events; weights stay dense in between and the final
    /// mask is applied once more to the returned weights.
    AtPruneStepsOnly,
}

fn default_momentum() -> f64 {
    0.9
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TvPgdConfig {
    pub total_iters: usize,
    /// Δt. Values above `total_iters` prune only at `t = 0`.
    pub prune_interval: usize,
    pub sparsity: Schedule,
    pub learning_rate: Schedule,
    #[serde(default)]
    pub mask_mode: MaskMode,
    #[serde(default)]
    pub scope: Scope,
    #[serde(default = "default_momentum")]
    pub momentum: f64,
    /// Zero momentum buffers of pruned weights whenever the mask is applied.
    #[serde(default)]
    pub zero_pruned_momentum: bool,
    /// Force `η = 0` at prune iterations, so the mask is computed from the
    /// weights as they stood after the previous fine-tuning step.
    #[serde(default)]
    pub skip_step_at_prune: bool,
    /// No prune events at or after this iteration; the mask is frozen.
    #[serde(default)]
    pub prune_until: Option<usize>,
    #[serde(default)]
    pub seed: u64,
}

impl TvPgdConfig {
    pub fn validate(&self) -> Result<()> {
        if self.total_iters == 0 {
            return Err(Error::invalid("total_iters", "must be at least 1"));
        }
        if self.prune_interval == 0 {
            return Err(Error::invalid("prune_interval", "must be at least 1"));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::invalid("momentum", format!("{} is outside [0, 1)", self.momentum)));
        }
        for (what, s) in [("sparsity schedule", &self.sparsity), ("learning-rate schedule", &self.learning_rate)] {
            if s.total_iters() + 1 < self.total_iters {
                return Err(Error::invalid(
                    what,
                    format!("horizon {} is shorter than {} iterations", s.total_iters(), self.total_iters),
                ));
            }
        }
        self.sparsity.validate_sparsity()?;
        self.learning_rate.validate_learning_rate()?;
        Ok(())
    }

    pub fn is_prune_iter(&self, t: usize) -> bool {
        t.is_multiple_of(self.prune_interval) && self.prune_until.is_none_or(|u| t < u)
    }
}

/// Per-iteration record.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterMetrics {
    pub t: usize,
    /// Loss at the weights entering iteration `t`.
    pub loss: f64,
    /// Fraction of zero prunable weights after the iteration.
    pub sparsity: f64,
    pub lr: f64,
    /// Regrown fraction at the most recent prune event.
    pub regrown_fraction: f64,
    /// Pruned weights whose squared update `(η g_j)²` exceeds the smallest
    /// squared non-zero kept weight, i.e. weights able to re-enter the mask
    /// at the next magnitude prune.
    pub recovery_candidates: usize,
}

#[derive(Debug, Clone)]
pub struct TvPgdRun {
    pub params: ParamSet,
    pub mask: PruneMask,
    pub history: MaskHistory,
    pub trace: Vec<IterMetrics>,
}

pub fn tv_pgd<O: Objective>(objective: &mut O, init: ParamSet, config: &TvPgdConfig) -> Result<TvPgdRun> {
    tv_pgd_observed(objective, init, config, |_, _, _| {})
}

/// [`tv_pgd`] with a callback invoked at the end of every iteration.
pub fn tv_pgd_observed<O, F>(
    objective: &mut O,
    init: ParamSet,
    config: &TvPgdConfig,
    mut observe: F,
) -> Result<TvPgdRun>
where
    O: Objective,
    F: FnMut(usize, &ParamSet, &PruneMask),
{
    config.validate()?;
    let mut theta = init;
    let mut velocity = theta.zeros_like();
    let mut mask = PruneMask::ones_like(&theta);
    let mut history = MaskHistory::new();
    let mut trace = Vec::with_capacity(config.total_iters);
    let mut pruned_before = vec![false; theta.total_dim()];
    let mut regrown = 0.0;

    for t in 0..config.total_iters {
        let prune_now = config.is_prune_iter(t);
        let lr = if config.skip_step_at_prune && prune_now {
            0.0
        } else {
            config.learning_rate.eval_learning_rate(t)?
        };

        let (loss, grad) = objective.loss_grad(&theta, t)?;
        if !loss.is_finite() {
            return Err(Error::NonFinite { quantity: "loss".into(), iter: t });
        }
        if !grad.same_shape(&theta) {
            return Err(Error::Shape(format!("gradient layout differs from weights at iteration {t}")));
        }
        if !grad.is_finite() {
            return Err(Error::NonFinite { quantity: "gradient".into(), iter: t });
        }

        let recovery_candidates = count_recovery_candidates(&theta, &grad, &mask, lr);

        if lr > 0.0 {
            for ((v, g), w) in velocity.iter_mut().zip(grad.iter()).zip(theta.iter_mut()) {
                *v = config.momentum * *v + g;
                *w -= lr * *v;
            }
            if !theta.is_finite() {
                return Err(Error::NonFinite { quantity: "weights".into(), iter: t });
            }
        }

        if prune_now {
            let s = config.sparsity.eval_sparsity(t)?;
            mask = magprune(&theta, s, config.scope)?;
            let d = pruned_before.len().max(1);
            regrown = mask
                .iter()
                .zip(&pruned_before)
                .filter(|(kept, before)| *kept && **before)
                .count() as f64
                / d as f64;
            for (b, k) in pruned_before.iter_mut().zip(mask.iter()) {
                *b |= !k;
            }
            history.push(t, mask.clone())?;
        }

        if prune_now || config.mask_mode == MaskMode::InPlaceEveryStep {
            apply_mask_in_place(&mut theta, &mask)?;
            if config.zero_pruned_momentum {
                apply_mask_in_place(&mut velocity, &mask)?;
            }
        }

        trace.push(IterMetrics {
            t,
            loss,
            sparsity: theta.sparsity(),
            lr,
            regrown_fraction: regrown,
            recovery_candidates,
        });
        observe(t, &theta, &mask);
    }

    if config.mask_mode == MaskMode::AtPruneStepsOnly {
        apply_mask_in_place(&mut theta, &mask)?;
    }

    Ok(TvPgdRun {
        params: theta,
        mask,
        history,
        trace,
    })
}

fn count_recovery_candidates(theta: &ParamSet, grad: &ParamSet, mask: &PruneMask, lr: f64) -> usize {
    let min_kept_sq = theta
        .layers()
        .iter()
        .zip(&mask.layers)
        .filter(|(l, _)| l.prunable)
        .flat_map(|(l, m)| l.values.iter().zip(m))
        .filter(|(v, k)| **k && **v != 0.0)
        .map(|(v, _)| v * v)
        .fold(f64::INFINITY, f64::min);
    if !min_kept_sq.is_finite() {
        return 0;
    }
    grad.layers()
        .iter()
        .zip(&mask.layers)
        .flat_map(|(g, m)| g.values.iter().zip(m))
        .filter(|(g, k)| !**k && (lr * **g).powi(2) > min_kept_sq)
        .count()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schedules::{CyclicalSchedule, ScheduleKind, ScheduleSpec};

    /// `½‖θ − target‖²`.
    struct Quadratic {
        target: Vec<f64>,
    }

    impl Objective for Quadratic {
        fn loss_grad(&mut self, params: &ParamSet, _iter: usize) -> Result<(f64, ParamSet)> {
            let mut g = params.clone();
            let mut loss = 0.0;
            for (gi, ti) in g.iter_mut().zip(&self.target) {
                *gi -= ti;
                loss += 0.5 * *gi * *gi;
            }
            Ok((loss, g))
        }
    }

    fn constant_lr(t: usize, lr: f64) -> Schedule {
        ScheduleSpec::constant(t, lr).into()
    }

    fn config(t: usize, dt: usize, sparsity: Schedule) -> TvPgdConfig {
        TvPgdConfig {
            total_iters: t,
            prune_interval: dt,
            sparsity,
            learning_rate: constant_lr(t, 0.1),
            mask_mode: MaskMode::InPlaceEveryStep,
            scope: Scope::Local,
            momentum: 0.0,
            zero_pruned_momentum: false,
            skip_step_at_prune: false,
            prune_until: None,
            seed: 0,
        }
    }

    #[test]
    fn pgd_on_separable_quadratic_keeps_largest_targets() {
        let target = vec![0.1, -3.0, 0.2, 2.0, -0.05, 1.0];
        let mut obj = Quadratic { target: target.clone() };
        let cfg = config(200, 1, ScheduleSpec::constant(200, 0.5).into());
        let run = tv_pgd(&mut obj, ParamSet::single(vec![0.0; 6]), &cfg).unwrap();
        let bits: Vec<bool> = run.mask.iter().collect();
        assert_eq!(bits, vec![false, true, false, true, false, true]);
        for (w, t) in run.params.iter().zip(&target) {
            if *w != 0.0 {
                assert!((w - t).abs() < 1e-6);
            }
        }
        assert_eq!(run.history.len(), 200);
    }

    #[test]
    fn zero_sparsity_is_plain_training() {
        let target = vec![1.0, -2.0, 3.0];
        let mut a = Quadratic { target: target.clone() };
        let cfg = config(50, 1, ScheduleSpec::constant(50, 0.0).into());
        let run = tv_pgd(&mut a, ParamSet::single(vec![0.0; 3]), &cfg).unwrap();
        assert!(run.mask.iter().all(|k| k));

        let mut w = vec![0.0; 3];
        for _ in 0..50 {
            for (wi, ti) in w.iter_mut().zip(&target) {
                *wi -= 0.1 * (*wi - ti);
            }
        }
        assert_eq!(run.params.flatten(), w);
    }

    #[test]
    fn step_past_horizon_never_prunes() {
        let mut obj = Quadratic { target: vec![1.0, 0.5, -0.1] };
        let cfg = config(30, 1, ScheduleSpec::step(30, 31, 0.9).into());
        let run = tv_pgd(&mut obj, ParamSet::single(vec![0.3; 3]), &cfg).unwrap();
        assert!(run.mask.iter().all(|k| k));
        assert!(run.history.recovery_events().is_empty());
    }

    #[test]
    fn one_shot_fixes_mask_at_t0() {
        let mut obj = Quadratic { target: vec![5.0, 0.1, -4.0, 0.2] };
        let mut cfg = config(40, 41, ScheduleSpec::step(40, 0, 0.5).into());
        cfg.skip_step_at_prune = true;
        let init = ParamSet::single(vec![0.1, 3.0, -0.2, 2.0]);
        let run = tv_pgd(&mut obj, init, &cfg).unwrap();
        assert_eq!(run.history.len(), 1);
        // pruned from the initial weights, not the targets
        assert_eq!(run.mask.iter().collect::<Vec<_>>(), vec![false, true, false, true]);
        assert!(run.history.recovery_events().is_empty());
        assert_eq!(run.trace[0].lr, 0.0);
    }

    #[test]
    fn cyclical_schedule_recovers_weights() {
        let mut obj = Quadratic { target: vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0] };
        let sparsity = CyclicalSchedule::new(
            ScheduleKind::Cubic { initial: 0.0, target: 0.75, ramp_iters: None },
            60,
            3,
        )
        .with_initials(0.0, 0.25);
        let cfg = config(60, 5, sparsity.into());
        let init = ParamSet::single(vec![8.0, 7.0, 6.0, 5.0, 4.0, 3.0, 2.0, 1.0]);
        let run = tv_pgd(&mut obj, init, &cfg).unwrap();
        assert!(!run.history.recovery_events().is_empty());
        assert!(run.history.regrown_fraction(20).unwrap() > 0.0);
    }

    #[test]
    fn at_prune_steps_only_stays_dense_between_events() {
        let mut obj = Quadratic { target: vec![1.0, 2.0, 3.0, 4.0] };
        let mut cfg = config(20, 10, ScheduleSpec::constant(20, 0.5).into());
        cfg.mask_mode = MaskMode::AtPruneStepsOnly;
        let mut dense_seen = false;
        let run = tv_pgd_observed(&mut obj, ParamSet::single(vec![1.0; 4]), &cfg, |t, p, _| {
            if t % 10 != 0 && p.iter().all(|v| *v != 0.0) {
                dense_seen = true;
            }
        })
        .unwrap();
        assert!(dense_seen);
        assert_eq!(run.params.sparsity(), 0.5);
    }

    #[test]
    fn non_finite_gradient_reports_iteration() {
        struct Exploding;
        impl Objective for Exploding {
            fn loss_grad(&mut self, p: &ParamSet, iter: usize) -> Result<(f64, ParamSet)> {
                let mut g = p.zeros_like();
                if iter == 3 {
                    g.iter_mut().for_each(|v| *v = f64::NAN);
                }
                Ok((1.0, g))
            }
        }
        let cfg = config(10, 1, ScheduleSpec::constant(10, 0.0).into());
        let err = tv_pgd(&mut Exploding, ParamSet::single(vec![1.0]), &cfg).unwrap_err();
        assert!(matches!(err, Error::NonFinite { iter: 3, .. }), "{err}");
    }

    #[test]
    fn rejects_invalid_config() {
        let mut cfg = config(10, 0, ScheduleSpec::constant(10, 0.0).into());
        assert!(cfg.validate().is_err());
        cfg.prune_interval = 1;
        cfg.total_iters = 0;
        assert!(cfg.validate().is_err());
        cfg.total_iters = 50;
        assert!(cfg.validate().is_err(), "schedule horizon too short");
    }
}
