//! A small multi-layer perceptron with analytic gradients, synthetic blob
//! data and the pruning experiments built on them.

mod data;
mod mlp;
mod train;

pub use data::{make_blobs, Blobs, BlobsConfig, Dataset, Split};
pub use mlp::{Mlp, DEFAULT_DIMS};
pub use train::{
    cycle_ablation, run_arm, train_dense, train_with, AblationArm, AblationResult, ArmResult, ArmSettings, CycleRecord,
    MlpObjective, PruneArm, DEFAULT_BATCH,
};
