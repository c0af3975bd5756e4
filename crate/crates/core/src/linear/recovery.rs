use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::problem::{adversarial_alpha, sample_rip_matrix_with, LinearProblem};
use crate::error::{Error, Result};
use crate::harness::seed_stream;

/// Index of the smallest-magnitude entry, lowest index on ties.
pub fn argmin_abs(w: &DVector<f64>) -> usize {
    w.iter()
        .enumerate()
        .min_by(|a, b| a.1.abs().total_cmp(&b.1.abs()).then(a.0.cmp(&b.0)))
        .map(|(i, _)| i)
        .unwrap_or(0)
}

/// Minimum-norm least squares for `y ≈ wᵀX` with `w` supported on `support`.
pub fn restricted_least_squares(x: &DMatrix<f64>, y: &DVector<f64>, support: &[usize]) -> DVector<f64> {
    let d = x.nrows();
    let mut w = DVector::zeros(d);
    if support.is_empty() {
        return w;
    }
    let xs_t = x.select_rows(support).transpose();
    let size = xs_t.nrows().max(xs_t.ncols()) as f64;
    let svd = xs_t.svd(true, true);
    let tol = svd.singular_values.max() * size * f64::EPSILON;
    let sol = svd.solve(y, tol).expect("both singular-vector sets were computed");
    for (k, &i) in support.iter().enumerate() {
        w[i] = sol[k];
    }
    w
}

#[derive(Debug, Clone, PartialEq)]
pub struct OneShotOutcome {
    pub w: DVector<f64>,
    pub pruned_index: usize,
}

/// Dense ridge training, pruning of the single smallest coordinate, then
/// exact (minimum-norm) retraining on the remaining support.
pub fn one_shot_linear(problem: &LinearProblem) -> Result<OneShotOutcome> {
    let w0 = problem.ridge()?;
    let pruned_index = argmin_abs(&w0);
    let support: Vec<usize> = (0..problem.dim()).filter(|&i| i != pruned_index).collect();
    let w = restricted_least_squares(&problem.x, &problem.y, &support);
    Ok(OneShotOutcome { w, pruned_index })
}

#[derive(Debug, Clone, PartialEq)]
pub struct PgdOutcome {
    pub w: DVector<f64>,
    /// Index zeroed at every step.
    pub pruned_trajectory: Vec<usize>,
    pub diverged: bool,
}

impl PgdOutcome {
    pub fn final_pruned(&self) -> Option<usize> {
        self.pruned_trajectory.last().copied()
    }
}

/// Iterative hard thresholding to `d − 1` non-zeros: full-batch gradient
/// steps on `‖y − wᵀX‖²`, each followed by zeroing the smallest-magnitude
/// coordinate. Starts from the ridge solution unless `w0` is given.
pub fn pgd_linear(problem: &LinearProblem, eta: f64, steps: usize, w0: Option<DVector<f64>>) -> Result<PgdOutcome> {
    if !(eta > 0.0 && eta.is_finite()) {
        return Err(Error::invalid("eta", format!("{eta} must be positive")));
    }
    let mut w = match w0 {
        Some(w) if w.len() != problem.dim() => {
            return Err(Error::Shape(format!("w0 has {} entries, expected {}", w.len(), problem.dim())))
        }
        Some(w) => w,
        None => problem.ridge()?,
    };
    let blowup = 1e12 * (1.0 + w.amax());
    let mut pruned_trajectory = Vec::with_capacity(steps);
    let xt = problem.x.transpose();
    for _ in 0..steps {
        let residual = &xt * &w - &problem.y;
        let grad = &problem.x * residual * 2.0;
        w -= grad * eta;
        if !w.iter().all(|v| v.is_finite()) || w.amax() > blowup {
            return Ok(PgdOutcome {
                w,
                pruned_trajectory,
                diverged: true,
            });
        }
        let i = argmin_abs(&w);
        w[i] = 0.0;
        pruned_trajectory.push(i);
    }
    Ok(PgdOutcome {
        w,
        pruned_trajectory,
        diverged: false,
    })
}

/// Largest singular value of `x`.
pub fn spectral_norm(x: &DMatrix<f64>) -> f64 {
    x.singular_values().max()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlphaMode {
    Random,
    Adversarial,
}

impl std::fmt::Display for AlphaMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            AlphaMode::Random => "random",
            AlphaMode::Adversarial => "adversarial",
        })
    }
}

impl std::str::FromStr for AlphaMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "random" => Ok(AlphaMode::Random),
            "adversarial" => Ok(AlphaMode::Adversarial),
            other => Err(Error::invalid("alpha mode", format!("unknown mode `{other}`"))),
        }
    }
}

fn default_lambda() -> f64 {
    1e-2
}
fn default_eta_factor() -> f64 {
    0.25
}
fn default_pgd_steps() -> usize {
    2000
}
fn default_tol() -> f64 {
    1e-3
}
fn default_design_scale() -> f64 {
    0.01
}
fn default_trials() -> usize {
    1000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecoveryTrialConfig {
    pub d: usize,
    pub n: usize,
    pub alpha_mode: AlphaMode,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default = "default_lambda")]
    pub lambda: f64,
    /// PGD step is `eta_factor / σ_max(X)²`.
    #[serde(default = "default_eta_factor")]
    pub eta_factor: f64,
    /// Absolute PGD step; overrides `eta_factor` when set.
    #[serde(default)]
    pub eta: Option<f64>,
    #[serde(default = "default_pgd_steps")]
    pub pgd_steps: usize,
    /// ε for the value-match metric `‖w* − α‖∞ ≤ ε`.
    #[serde(default = "default_tol")]
    pub success_tol: f64,
    /// Multiplier on the `N(0, 1/n)` design entries. Small values put the
    /// ridge fit in the shrinkage-dominated regime.
    #[serde(default = "default_design_scale")]
    pub design_scale: f64,
    /// Fixed zero coordinate of α; drawn uniformly per trial when absent.
    #[serde(default)]
    pub zero_index: Option<usize>,
    #[serde(default)]
    pub seed: u64,
}

impl RecoveryTrialConfig {
    pub fn new(d: usize, n: usize, alpha_mode: AlphaMode) -> Self {
        Self {
            d,
            n,
            alpha_mode,
            trials: default_trials(),
            lambda: default_lambda(),
            eta_factor: default_eta_factor(),
            eta: None,
            pgd_steps: default_pgd_steps(),
            success_tol: default_tol(),
            design_scale: default_design_scale(),
            zero_index: None,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.d < 2 || self.n == 0 {
            return Err(Error::invalid("dimensions", format!("need d ≥ 2 and n ≥ 1, got d = {}, n = {}", self.d, self.n)));
        }
        if self.trials == 0 {
            return Err(Error::invalid("trials", "must be at least 1"));
        }
        if !(self.success_tol > 0.0) {
            return Err(Error::invalid("success_tol", "must be positive"));
        }
        if !(self.lambda > 0.0) {
            return Err(Error::invalid("lambda", "must be positive"));
        }
        if !(self.eta_factor > 0.0) {
            return Err(Error::invalid("eta_factor", "must be positive"));
        }
        if !(self.design_scale > 0.0 && self.design_scale.is_finite()) {
            return Err(Error::invalid("design_scale", "must be positive"));
        }
        if let Some(eta) = self.eta {
            if !(eta > 0.0 && eta.is_finite()) {
                return Err(Error::invalid("eta", format!("{eta} must be positive")));
            }
        }
        if let Some(c) = self.zero_index {
            if c >= self.d {
                return Err(Error::invalid("zero_index", format!("{c} is outside [0, {})", self.d)));
            }
        }
        Ok(())
    }

    /// The problem solved in trial `index`.
    pub fn problem(&self, index: usize) -> Result<LinearProblem> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed_stream(self.seed, index as u64));
        let x = sample_rip_matrix_with(&mut rng, self.d, self.n) * self.design_scale;
        let c = self.zero_index.unwrap_or_else(|| rng.random_range(0..self.d));
        let alpha = match self.alpha_mode {
            AlphaMode::Random => {
                let mut a = DVector::from_fn(self.d, |_, _| rng.sample::<f64, _>(StandardNormal));
                a[c] = 0.0;
                a
            }
            AlphaMode::Adversarial => adversarial_alpha(&x, self.lambda, c)?,
        };
        LinearProblem::new(x, alpha, c, self.lambda)
    }
}

/// Outcome of one trial under both metrics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct TrialOutcome {
    /// One-shot pruned the true zero coordinate.
    pub one_shot_support: bool,
    pub one_shot_value: bool,
    /// PGD's final iterate has its zero on the true coordinate.
    pub pgd_support: bool,
    pub pgd_value: bool,
    pub pgd_diverged: bool,
}

pub fn run_trial(config: &RecoveryTrialConfig, index: usize) -> Result<TrialOutcome> {
    let problem = config.problem(index)?;
    let c = problem.zero_index;
    let close = |w: &DVector<f64>| (w - &problem.alpha).amax() <= config.success_tol;

    let one = one_shot_linear(&problem)?;
    let eta = match config.eta {
        Some(eta) => eta,
        None => config.eta_factor / spectral_norm(&problem.x).powi(2),
    };
    let pgd = pgd_linear(&problem, eta, config.pgd_steps, Some(problem.ridge()?))?;
    let pgd_ok = !pgd.diverged;
    Ok(TrialOutcome {
        one_shot_support: one.pruned_index == c,
        one_shot_value: close(&one.w),
        pgd_support: pgd_ok && pgd.final_pruned() == Some(c),
        pgd_value: pgd_ok && close(&pgd.w),
        pgd_diverged: pgd.diverged,
    })
}

/// 95% Wilson score interval for `successes / trials`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WilsonInterval {
    pub estimate: f64,
    pub lower: f64,
    pub upper: f64,
}

impl WilsonInterval {
    pub const Z95: f64 = 1.959963984540054;

    pub fn new(successes: usize, trials: usize) -> Self {
        let n = trials.max(1) as f64;
        let p = successes as f64 / n;
        let z2 = Self::Z95 * Self::Z95;
        let denom = 1.0 + z2 / n;
        let center = (p + z2 / (2.0 * n)) / denom;
        let half = Self::Z95 * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
        Self {
            estimate: p,
            lower: (center - half).max(0.0),
            upper: (center + half).min(1.0),
        }
    }

    pub fn half_width(&self) -> f64 {
        0.5 * (self.upper - self.lower)
    }

    pub fn overlaps(&self, other: &WilsonInterval) -> bool {
        self.lower <= other.upper && other.lower <= self.upper
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct TrialCounts {
    pub trials: usize,
    pub one_shot_support: usize,
    pub one_shot_value: usize,
    pub pgd_support: usize,
    pub pgd_value: usize,
    pub pgd_diverged: usize,
}

impl TrialCounts {
    fn add(mut self, o: TrialOutcome) -> Self {
        self.trials += 1;
        self.one_shot_support += o.one_shot_support as usize;
        self.one_shot_value += o.one_shot_value as usize;
        self.pgd_support += o.pgd_support as usize;
        self.pgd_value += o.pgd_value as usize;
        self.pgd_diverged += o.pgd_diverged as usize;
        self
    }

    fn merge(self, o: TrialCounts) -> Self {
        Self {
            trials: self.trials + o.trials,
            one_shot_support: self.one_shot_support + o.one_shot_support,
            one_shot_value: self.one_shot_value + o.one_shot_value,
            pgd_support: self.pgd_support + o.pgd_support,
            pgd_value: self.pgd_value + o.pgd_value,
            pgd_diverged: self.pgd_diverged + o.pgd_diverged,
        }
    }
}

/// Aggregate recovery probabilities. `p_one_shot` / `p_pgd` use support
/// recovery (the zero lands on the true coordinate); the value-match rates
/// are reported alongside.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecoveryResult {
    pub counts: TrialCounts,
    pub p_one_shot: f64,
    pub p_pgd: f64,
    pub ci_one_shot: WilsonInterval,
    pub ci_pgd: WilsonInterval,
    pub p_one_shot_value: f64,
    pub p_pgd_value: f64,
}

impl RecoveryResult {
    fn from_counts(counts: TrialCounts) -> Self {
        let n = counts.trials.max(1) as f64;
        let ci_one_shot = WilsonInterval::new(counts.one_shot_support, counts.trials);
        let ci_pgd = WilsonInterval::new(counts.pgd_support, counts.trials);
        Self {
            counts,
            p_one_shot: ci_one_shot.estimate,
            p_pgd: ci_pgd.estimate,
            ci_one_shot,
            ci_pgd,
            p_one_shot_value: counts.one_shot_value as f64 / n,
            p_pgd_value: counts.pgd_value as f64 / n,
        }
    }
}

pub fn recovery_experiment(config: &RecoveryTrialConfig) -> Result<RecoveryResult> {
    config.validate()?;
    let counts = (0..config.trials).try_fold(TrialCounts::default(), |acc, i| {
        run_trial(config, i).map(|o| acc.add(o))
    })?;
    Ok(RecoveryResult::from_counts(counts))
}

/// [`recovery_experiment`] on `jobs` worker threads. Trials are seeded by
/// index, so the counts equal the serial ones.
pub fn recovery_experiment_parallel(config: &RecoveryTrialConfig, jobs: usize) -> Result<RecoveryResult> {
    config.validate()?;
    if jobs <= 1 {
        return recovery_experiment(config);
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::invalid("jobs", e.to_string()))?;
    let counts = pool.install(|| {
        (0..config.trials)
            .into_par_iter()
            .map(|i| run_trial(config, i).map(|o| TrialCounts::default().add(o)))
            .try_reduce(TrialCounts::default, |a, b| Ok(a.merge(b)))
    })?;
    Ok(RecoveryResult::from_counts(counts))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_shot_with_correct_support_recovers_alpha() {
        // identity-like design: the ridge solution is a shrunk α, so its
        // smallest coordinate is the true zero
        let x = DMatrix::identity(4, 4) * 2.0;
        let alpha = DVector::from_vec(vec![1.0, -3.0, 0.0, 0.5]);
        let p = LinearProblem::new(x, alpha.clone(), 2, 1e-2).unwrap();
        let out = one_shot_linear(&p).unwrap();
        assert_eq!(out.pruned_index, 2);
        assert!((out.w - alpha).amax() < 1e-12);
    }

    #[test]
    fn pgd_identity_design_converges() {
        let x = DMatrix::identity(5, 5);
        let alpha = DVector::from_vec(vec![0.7, 0.0, -1.2, 2.0, 0.4]);
        let p = LinearProblem::new(x, alpha.clone(), 1, 1e-2).unwrap();
        let out = pgd_linear(&p, 0.25, 200, Some(DVector::from_element(5, 1.0))).unwrap();
        assert!(!out.diverged);
        assert_eq!(out.final_pruned(), Some(1));
        assert!((out.w - alpha).amax() < 1e-9);
    }

    #[test]
    fn pgd_reports_divergence() {
        let x = DMatrix::identity(3, 3);
        let alpha = DVector::from_vec(vec![1.0, 0.0, 2.0]);
        let p = LinearProblem::new(x, alpha, 1, 1e-2).unwrap();
        let out = pgd_linear(&p, 5.0, 500, None).unwrap();
        assert!(out.diverged);
        assert!(pgd_linear(&p, 0.0, 5, None).is_err());
    }

    #[test]
    fn restricted_least_squares_is_min_norm_when_underdetermined() {
        let x = DMatrix::from_row_slice(3, 1, &[1.0, 1.0, 0.0]);
        let y = DVector::from_vec(vec![2.0]);
        let w = restricted_least_squares(&x, &y, &[0, 1]);
        assert!((w[0] - 1.0).abs() < 1e-12 && (w[1] - 1.0).abs() < 1e-12);
        assert_eq!(w[2], 0.0);
    }

    #[test]
    fn wilson_interval_basics() {
        let w = WilsonInterval::new(50, 100);
        assert_eq!(w.estimate, 0.5);
        assert!((w.half_width() - 0.0960).abs() < 1e-3);
        let zero = WilsonInterval::new(0, 10);
        assert_eq!(zero.lower, 0.0);
        assert!(zero.upper > 0.0);
        assert!(!WilsonInterval::new(10, 1000).overlaps(&WilsonInterval::new(500, 1000)));
    }

    #[test]
    fn infinite_tolerance_counts_every_trial() {
        let mut cfg = RecoveryTrialConfig::new(5, 4, AlphaMode::Random);
        cfg.trials = 40;
        cfg.success_tol = f64::INFINITY;
        let r = recovery_experiment(&cfg).unwrap();
        assert_eq!(r.p_one_shot_value, 1.0);
        assert_eq!(r.p_pgd_value, 1.0);
    }

    #[test]
    fn parallel_matches_serial() {
        let mut cfg = RecoveryTrialConfig::new(5, 4, AlphaMode::Adversarial);
        cfg.trials = 64;
        cfg.pgd_steps = 200;
        cfg.seed = 17;
        let serial = recovery_experiment(&cfg).unwrap();
        let parallel = recovery_experiment_parallel(&cfg, 4).unwrap();
        assert_eq!(serial, parallel);
    }

    #[test]
    fn rejects_empty_trials() {
        let mut cfg = RecoveryTrialConfig::new(5, 4, AlphaMode::Random);
        cfg.trials = 0;
        assert!(matches!(recovery_experiment(&cfg), Err(Error::Validation { .. })));
    }
}
