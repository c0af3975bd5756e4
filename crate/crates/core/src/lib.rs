//! Pruning as time-varying projected gradient descent.
//!
//! - [`schedules`]: sparsity and learning-rate schedules, including cyclical ones.
//! - [`pruning`]: magnitude pruning, the TV-PGD loop and weight-recovery statistics.
//! - [`linear`]: sparse linear regression experiments (one-shot pruning vs PGD).
//! - [`net`]: a small MLP with analytic gradients and synthetic blob data.
//! - [`harness`]: configuration, seeding, orchestration and result files.

pub mod error;
pub mod harness;
pub mod linear;
pub mod net;
pub mod pruning;
pub mod schedules;

pub use error::{Error, Result};
