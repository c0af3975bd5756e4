//! Sparse linear regression: one-shot pruning versus projected gradient descent.

mod nullspace;
mod problem;
mod recovery;

pub use nullspace::{construct_sparser_solution, left_null_space, sparse_solution_bound, SparserSolution};
pub use problem::{adversarial_alpha, ridge_operator, ridge_solution, sample_rip_matrix, sample_rip_matrix_with, LinearProblem};
pub use recovery::{
    argmin_abs, one_shot_linear, pgd_linear, recovery_experiment, recovery_experiment_parallel, restricted_least_squares,
    run_trial, spectral_norm, AlphaMode, OneShotOutcome, PgdOutcome, RecoveryResult, RecoveryTrialConfig, TrialCounts,
    TrialOutcome, WilsonInterval,
};
