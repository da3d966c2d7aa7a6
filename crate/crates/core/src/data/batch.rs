use rand::seq::SliceRandom;

use super::{Split, VerticalDataset};
use crate::rng::stream;

/// Seeded per-epoch batching over one split.
#[derive(Debug, Clone)]
pub struct BatchPlan {
    ids: Vec<u64>,
    batch_size: usize,
    seed: u64,
}

impl BatchPlan {
    pub fn new(ids: Vec<u64>, batch_size: usize, seed: u64) -> Self {
        assert!(batch_size >= 1, "batch size must be positive");
        Self { ids, batch_size, seed }
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// Shuffled batches for `epoch`; a final batch smaller than 2 is dropped.
    pub fn epoch(&self, epoch: usize) -> Vec<Vec<u64>> {
        let mut ids = self.ids.clone();
        ids.shuffle(&mut stream(self.seed, &format!("batches/{epoch}")));
        ids.chunks(self.batch_size)
            .filter(|c| c.len() >= 2)
            .map(<[u64]>::to_vec)
            .collect()
    }
}

pub fn iterate_batches(
    ds: &VerticalDataset,
    split: Split,
    batch_size: usize,
    seed: u64,
    epoch: usize,
) -> Vec<Vec<u64>> {
    BatchPlan::new(ds.ids_of(split), batch_size, seed).epoch(epoch)
}
