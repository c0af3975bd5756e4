//! Sparsity and learning-rate schedules.
//!
//! Every schedule is a pure function of the iteration counter `t ∈ [0, T]`.
//! Sparsity schedules return a fraction in `[0, 1]` that is non-decreasing
//! within a cycle; learning-rate schedules return a strictly positive value.
//! [`CyclicalSchedule`] repeats a single-cycle shape `k` times, restarting
//! sparsity from a lower value at every cycle boundary.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Shape of a schedule over one horizon of `total_iters` iterations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ScheduleKind {
    /// Always `value`.
    Constant { value: f64 },
    /// `initial` before `step_iter`, `target` from `step_iter` on.
    Step {
        step_iter: usize,
        target: f64,
        #[serde(default)]
        initial: f64,
    },
    /// Linear ramp from `initial` to `target` over `ramp_iters` (defaults to
    /// the full horizon), then held at `target`.
    Linear {
        #[serde(default)]
        initial: f64,
        target: f64,
        #[serde(default)]
        ramp_iters: Option<usize>,
    },
    /// Cubic ramp `target + (initial - target) * (1 - t/R)^3` over `R =
    /// ramp_iters` (defaults to the full horizon), then held at `target`.
    Cubic {
        #[serde(default)]
        initial: f64,
        target: f64,
        #[serde(default)]
        ramp_iters: Option<usize>,
    },
    /// `base * factor^floor(t / interval)`.
    ExponentialDecay {
        base: f64,
        factor: f64,
        interval: usize,
    },
    /// `base` before `drop_fraction * T`, `base * factor` afterwards.
    PiecewiseStepDecay {
        base: f64,
        factor: f64,
        drop_fraction: f64,
    },
}

impl ScheduleKind {
    fn is_sparsity(&self) -> bool {
        matches!(
            self,
            ScheduleKind::Constant { .. }
                | ScheduleKind::Step { .. }
                | ScheduleKind::Linear { .. }
                | ScheduleKind::Cubic { .. }
        )
    }

    fn is_learning_rate(&self) -> bool {
        matches!(
            self,
            ScheduleKind::Constant { .. }
                | ScheduleKind::ExponentialDecay { .. }
                | ScheduleKind::PiecewiseStepDecay { .. }
        )
    }

    /// Final sparsity of a sparsity shape.
    pub fn target(&self) -> Option<f64> {
        match *self {
            ScheduleKind::Constant { value } => Some(value),
            ScheduleKind::Step { target, .. }
            | ScheduleKind::Linear { target, .. }
            | ScheduleKind::Cubic { target, .. } => Some(target),
            _ => None,
        }
    }

    fn with_initial(&self, new_initial: f64) -> ScheduleKind {
        let mut kind = self.clone();
        match &mut kind {
            ScheduleKind::Step { initial, .. }
            | ScheduleKind::Linear { initial, .. }
            | ScheduleKind::Cubic { initial, .. } => *initial = new_initial,
            _ => {}
        }
        kind
    }
}

/// A schedule shape bound to a horizon of `total_iters` iterations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduleSpec {
    pub total_iters: usize,
    #[serde(flatten)]
    pub kind: ScheduleKind,
}

fn check_fraction(what: &'static str, v: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&v) {
        return Err(Error::invalid(what, format!("{v} is outside [0, 1]")));
    }
    Ok(())
}

/// Monotone ramp from `initial` to `target` with progress `p ∈ [0, 1]`.
/// Exact at both ends: `p = 0` yields `initial` bit-for-bit and callers
/// return `target` directly once the ramp is complete.
fn ramp(initial: f64, target: f64, p: f64) -> f64 {
    (initial + (target - initial) * p).min(target)
}

impl ScheduleSpec {
    pub fn new(total_iters: usize, kind: ScheduleKind) -> Self {
        Self { total_iters, kind }
    }

    pub fn cubic(total_iters: usize, initial: f64, target: f64) -> Self {
        Self::new(
            total_iters,
            ScheduleKind::Cubic {
                initial,
                target,
                ramp_iters: None,
            },
        )
    }

    pub fn linear(total_iters: usize, initial: f64, target: f64) -> Self {
        Self::new(
            total_iters,
            ScheduleKind::Linear {
                initial,
                target,
                ramp_iters: None,
            },
        )
    }

    pub fn step(total_iters: usize, step_iter: usize, target: f64) -> Self {
        Self::new(
            total_iters,
            ScheduleKind::Step {
                step_iter,
                target,
                initial: 0.0,
            },
        )
    }

    pub fn constant(total_iters: usize, value: f64) -> Self {
        Self::new(total_iters, ScheduleKind::Constant { value })
    }

    fn check_t(&self, t: usize) -> Result<()> {
        if self.total_iters == 0 {
            return Err(Error::invalid("schedule", "total_iters must be positive"));
        }
        if t > self.total_iters {
            return Err(Error::invalid(
                "iteration",
                format!("t = {t} is outside [0, {}]", self.total_iters),
            ));
        }
        Ok(())
    }

    fn ramp_len(&self, ramp_iters: Option<usize>) -> Result<usize> {
        let r = ramp_iters.unwrap_or(self.total_iters);
        if r == 0 {
            return Err(Error::invalid("schedule", "ramp_iters must be positive"));
        }
        Ok(r)
    }

    /// Checks the parameters of a sparsity shape.
    pub fn validate_sparsity(&self) -> Result<()> {
        if !self.kind.is_sparsity() {
            return Err(Error::invalid(
                "schedule",
                format!("{:?} is not a sparsity schedule", self.kind),
            ));
        }
        match self.kind {
            ScheduleKind::Constant { value } => check_fraction("sparsity", value),
            ScheduleKind::Step {
                initial, target, ..
            }
            | ScheduleKind::Linear {
                initial, target, ..
            }
            | ScheduleKind::Cubic {
                initial, target, ..
            } => {
                check_fraction("initial sparsity", initial)?;
                check_fraction("target sparsity", target)?;
                if initial > target {
                    return Err(Error::invalid(
                        "schedule",
                        format!("initial sparsity {initial} exceeds target {target}"),
                    ));
                }
                Ok(())
            }
            _ => unreachable!(),
        }
    }

    /// Checks the parameters of a learning-rate shape.
    pub fn validate_learning_rate(&self) -> Result<()> {
        if !self.kind.is_learning_rate() {
            return Err(Error::invalid(
                "schedule",
                format!("{:?} is not a learning-rate schedule", self.kind),
            ));
        }
        let positive = |what, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::invalid(what, format!("{v} must be positive")))
            }
        };
        match self.kind {
            ScheduleKind::Constant { value } => positive("learning rate", value),
            ScheduleKind::ExponentialDecay {
                base,
                factor,
                interval,
            } => {
                positive("base learning rate", base)?;
                positive("decay factor", factor)?;
                if interval == 0 {
                    return Err(Error::invalid("decay interval", "must be positive"));
                }
                Ok(())
            }
            ScheduleKind::PiecewiseStepDecay {
                base,
                factor,
                drop_fraction,
            } => {
                positive("base learning rate", base)?;
                positive("decay factor", factor)?;
                check_fraction("drop fraction", drop_fraction)
            }
            _ => unreachable!(),
        }
    }

    pub fn eval_sparsity(&self, t: usize) -> Result<f64> {
        self.check_t(t)?;
        self.validate_sparsity()?;
        let s = match self.kind {
            ScheduleKind::Constant { value } => value,
            ScheduleKind::Step {
                step_iter,
                target,
                initial,
            } => {
                if t < step_iter {
                    initial
                } else {
                    target
                }
            }
            ScheduleKind::Linear {
                initial,
                target,
                ramp_iters,
            } => {
                let r = self.ramp_len(ramp_iters)?;
                if t >= r {
                    target
                } else {
                    ramp(initial, target, t as f64 / r as f64)
                }
            }
            ScheduleKind::Cubic {
                initial,
                target,
                ramp_iters,
            } => {
                let r = self.ramp_len(ramp_iters)?;
                if t >= r {
                    target
                } else {
                    let u = 1.0 - t as f64 / r as f64;
                    ramp(initial, target, 1.0 - u * u * u)
                }
            }
            _ => unreachable!(),
        };
        Ok(s.clamp(0.0, 1.0))
    }

    pub fn eval_learning_rate(&self, t: usize) -> Result<f64> {
        self.check_t(t)?;
        self.validate_learning_rate()?;
        Ok(match self.kind {
            ScheduleKind::Constant { value } => value,
            ScheduleKind::ExponentialDecay {
                base,
                factor,
                interval,
            } => base * factor.powi((t / interval) as i32),
            ScheduleKind::PiecewiseStepDecay {
                base,
                factor,
                drop_fraction,
            } => {
                if (t as f64) < drop_fraction * self.total_iters as f64 {
                    base
                } else {
                    base * factor
                }
            }
            _ => unreachable!(),
        })
    }
}

/// `k` repetitions of a single-cycle shape over a horizon of `total_iters`.
///
/// `cycle_len = floor(T / k)`; the last cycle absorbs the remainder by
/// holding its end-of-cycle value. Sparsity shapes start cycle 1 from
/// `first_cycle_initial` (default 0) and every later cycle from
/// `later_cycle_initial` (default half the target).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CyclicalSchedule {
    pub inner: ScheduleKind,
    pub total_iters: usize,
    pub cycles: usize,
    #[serde(default)]
    pub first_cycle_initial: Option<f64>,
    #[serde(default)]
    pub later_cycle_initial: Option<f64>,
}

impl CyclicalSchedule {
    pub fn new(inner: ScheduleKind, total_iters: usize, cycles: usize) -> Self {
        Self {
            inner,
            total_iters,
            cycles,
            first_cycle_initial: None,
            later_cycle_initial: None,
        }
    }

    pub fn with_initials(mut self, first: f64, later: f64) -> Self {
        self.first_cycle_initial = Some(first);
        self.later_cycle_initial = Some(later);
        self
    }

    pub fn cycle_len(&self) -> usize {
        self.total_iters / self.cycles.max(1)
    }

    fn validate(&self) -> Result<()> {
        if self.cycles == 0 {
            return Err(Error::invalid("cycles", "must be positive"));
        }
        if self.cycle_len() == 0 {
            return Err(Error::invalid(
                "cycles",
                format!(
                    "{} cycles do not fit in {} iterations",
                    self.cycles, self.total_iters
                ),
            ));
        }
        Ok(())
    }

    /// Zero-based cycle containing `t`.
    pub fn cycle_of(&self, t: usize) -> usize {
        (t / self.cycle_len().max(1)).min(self.cycles.saturating_sub(1))
    }

    /// Maps a global iteration to (cycle, cycle-local iteration).
    fn locate(&self, t: usize) -> Result<(usize, usize)> {
        self.validate()?;
        if t > self.total_iters {
            return Err(Error::invalid(
                "iteration",
                format!("t = {t} is outside [0, {}]", self.total_iters),
            ));
        }
        let len = self.cycle_len();
        let cycle = self.cycle_of(t);
        let local = (t - cycle * len).min(len);
        Ok((cycle, local))
    }

    fn cycle_spec(&self, cycle: usize) -> ScheduleSpec {
        let kind = if self.inner.is_sparsity() {
            let initial = if cycle == 0 {
                self.first_cycle_initial.unwrap_or(0.0)
            } else {
                self.later_cycle_initial
                    .unwrap_or(0.5 * self.inner.target().unwrap_or(0.0))
            };
            self.inner.with_initial(initial)
        } else {
            self.inner.clone()
        };
        ScheduleSpec::new(self.cycle_len(), kind)
    }

    pub fn eval_sparsity(&self, t: usize) -> Result<f64> {
        let (cycle, local) = self.locate(t)?;
        self.cycle_spec(cycle).eval_sparsity(local)
    }

    pub fn eval_learning_rate(&self, t: usize) -> Result<f64> {
        let (cycle, local) = self.locate(t)?;
        self.cycle_spec(cycle).eval_learning_rate(local)
    }
}

/// Either a single-horizon schedule or a cyclical one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Schedule {
    Single(ScheduleSpec),
    Cyclical(CyclicalSchedule),
}

impl Schedule {
    pub fn total_iters(&self) -> usize {
        match self {
            Schedule::Single(s) => s.total_iters,
            Schedule::Cyclical(c) => c.total_iters,
        }
    }

    pub fn eval_sparsity(&self, t: usize) -> Result<f64> {
        match self {
            Schedule::Single(s) => s.eval_sparsity(t),
            Schedule::Cyclical(c) => c.eval_sparsity(t),
        }
    }

    pub fn eval_learning_rate(&self, t: usize) -> Result<f64> {
        match self {
            Schedule::Single(s) => s.eval_learning_rate(t),
            Schedule::Cyclical(c) => c.eval_learning_rate(t),
        }
    }

    /// Checks every iteration of the horizon evaluates as a sparsity.
    pub fn validate_sparsity(&self) -> Result<()> {
        match self {
            Schedule::Single(s) => s.validate_sparsity(),
            Schedule::Cyclical(c) => {
                c.validate()?;
                (0..c.cycles).try_for_each(|m| c.cycle_spec(m).validate_sparsity())
            }
        }
    }

    pub fn validate_learning_rate(&self) -> Result<()> {
        match self {
            Schedule::Single(s) => s.validate_learning_rate(),
            Schedule::Cyclical(c) => {
                c.validate()?;
                c.cycle_spec(0).validate_learning_rate()
            }
        }
    }
}

impl From<ScheduleSpec> for Schedule {
    fn from(s: ScheduleSpec) -> Self {
        Schedule::Single(s)
    }
}

impl From<CyclicalSchedule> for Schedule {
    fn from(c: CyclicalSchedule) -> Self {
        Schedule::Cyclical(c)
    }
}
