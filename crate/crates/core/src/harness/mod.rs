//! Configuration, seeding and orchestration of experiments into CSV
//! results plus a JSON run manifest.

mod config;
mod run;

use sha2::{Digest, Sha256};

pub use config::{Experiment, ExperimentConfig, TaskConfig};
pub use run::{cell_seed, pretrained_task, pruning_seed, replay, run, RunManifest, RunStatus, MANIFEST_FILE};

/// Child seed for stream `index` of `master`: the first eight bytes of
/// `SHA-256(master ‖ index)`, both little-endian.
pub fn seed_stream(master: u64, index: u64) -> u64 {
    let mut h = Sha256::new();
    h.update(master.to_le_bytes());
    h.update(index.to_le_bytes());
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("digest has 32 bytes"))
}
