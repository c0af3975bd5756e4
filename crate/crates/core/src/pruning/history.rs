use serde::{Deserialize, Serialize};

use super::mask::PruneMask;
use crate::error::{Error, Result};

/// A weight pruned at snapshot `pruned_at` and kept again at the next
/// snapshot `recovered_at`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecoveryEvent {
    pub index: usize,
    pub pruned_at: usize,
    pub recovered_at: usize,
}

/// Masks recorded at every prune event, in iteration order.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MaskHistory {
    snapshots: Vec<(usize, PruneMask)>,
    /// Element-wise OR of the complements of all snapshots.
    ever_pruned: Vec<bool>,
}

impl MaskHistory {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, iter: usize, mask: PruneMask) -> Result<()> {
        if let Some((last, first)) = self.snapshots.last().map(|(t, _)| *t).zip(self.snapshots.first()) {
            if iter <= last {
                return Err(Error::invalid(
                    "snapshot",
                    format!("iteration {iter} does not follow {last}"),
                ));
            }
            if !first.1.same_shape(&mask) {
                return Err(Error::Shape("snapshot layout differs from history".into()));
            }
        } else {
            self.ever_pruned = vec![false; mask.len()];
        }
        for (e, k) in self.ever_pruned.iter_mut().zip(mask.iter()) {
            *e |= !k;
        }
        self.snapshots.push((iter, mask));
        Ok(())
    }

    pub fn snapshots(&self) -> &[(usize, PruneMask)] {
        &self.snapshots
    }

    pub fn ever_pruned(&self) -> &[bool] {
        &self.ever_pruned
    }

    pub fn len(&self) -> usize {
        self.snapshots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.snapshots.is_empty()
    }

    fn position(&self, iter: usize) -> Result<usize> {
        self.snapshots
            .binary_search_by_key(&iter, |(t, _)| *t)
            .map_err(|_| Error::NotASnapshot(iter))
    }

    pub fn snapshot(&self, iter: usize) -> Result<&PruneMask> {
        Ok(&self.snapshots[self.position(iter)?].1)
    }

    /// Mask in force at `iter`: the latest snapshot taken at or before it.
    pub fn mask_at(&self, iter: usize) -> Option<&PruneMask> {
        let n = self.snapshots.partition_point(|(t, _)| *t <= iter);
        n.checked_sub(1).map(|i| &self.snapshots[i].1)
    }

    /// Every 0→1 transition of a mask entry between consecutive snapshots.
    /// Empty iff no weight was ever recovered.
    pub fn recovery_events(&self) -> Vec<RecoveryEvent> {
        self.snapshots
            .windows(2)
            .flat_map(|w| {
                let (t1, m1) = &w[0];
                let (t2, m2) = &w[1];
                m1.iter()
                    .zip(m2.iter())
                    .enumerate()
                    .filter(|(_, (a, b))| !a && *b)
                    .map(|(index, _)| RecoveryEvent {
                        index,
                        pruned_at: *t1,
                        recovered_at: *t2,
                    })
                    .collect::<Vec<_>>()
            })
            .collect()
    }

    /// Fraction of all entries that are kept at snapshot `iter` but were
    /// pruned in some earlier snapshot.
    pub fn regrown_fraction(&self, iter: usize) -> Result<f64> {
        let pos = self.position(iter)?;
        let current = &self.snapshots[pos].1;
        let d = current.len();
        if d == 0 {
            return Ok(0.0);
        }
        let mut before = vec![false; d];
        for (_, m) in &self.snapshots[..pos] {
            for (b, k) in before.iter_mut().zip(m.iter()) {
                *b |= !k;
            }
        }
        let regrown = current
            .iter()
            .zip(&before)
            .filter(|(kept, was_pruned)| *kept && **was_pruned)
            .count();
        Ok(regrown as f64 / d as f64)
    }
}
