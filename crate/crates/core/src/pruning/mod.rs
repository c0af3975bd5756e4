//! Magnitude pruning, the TV-PGD loop and mask-history analytics.

mod history;
mod mask;
mod params;
mod tvpgd;

pub use history::{MaskHistory, RecoveryEvent};
pub use mask::{apply_mask, apply_mask_in_place, jaccard_mask_distance, magprune, PruneMask, Scope};
pub use params::{Layer, ParamSet};
pub use tvpgd::{tv_pgd, tv_pgd_observed, IterMetrics, MaskMode, Objective, TvPgdConfig, TvPgdRun};
