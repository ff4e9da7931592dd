use crate::error::{Error, Result};
use crate::numkit::{Mat64, Rng};

/// Rows per optimizer step drawn from each pool.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BatchPlan {
    pub labeled_batch: usize,
    pub unlabeled_batch: usize,
}

impl Default for BatchPlan {
    fn default() -> Self {
        Self {
            labeled_batch: 8,
            unlabeled_batch: 24,
        }
    }
}

impl BatchPlan {
    pub fn validate(&self) -> Result<()> {
        if self.labeled_batch == 0 {
            return Err(Error::Config("labeled batch size must be >= 1".into()));
        }
        Ok(())
    }
}

/// Feature matrices the batcher draws rows from.
#[derive(Debug, Clone)]
pub struct Pools {
    pub labeled_x: Mat64,
    pub labeled_y: Mat64,
    pub unlabeled_x: Mat64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComposedBatch {
    pub labeled_x: Mat64,
    pub labeled_y: Mat64,
    pub unlabeled_x: Mat64,
}

/// Cursor over the labeled pool (one pass per epoch) and the unlabeled pool
/// (cycled independently, reshuffled on every wrap).
#[derive(Debug, Clone)]
pub struct EpochState {
    plan: BatchPlan,
    labeled_order: Vec<usize>,
    labeled_pos: usize,
    unlabeled_order: Vec<usize>,
    unlabeled_pos: usize,
    labeled_rng: Rng,
    unlabeled_rng: Rng,
    epoch: usize,
}

impl EpochState {
    /// The two generators are consumed independently, so the labeled order
    /// does not depend on the unlabeled pool size or batch size.
    pub fn new(plan: BatchPlan, n_labeled: usize, n_unlabeled: usize, labeled_rng: Rng, unlabeled_rng: Rng) -> Self {
        Self {
            plan,
            labeled_order: (0..n_labeled).collect(),
            labeled_pos: n_labeled,
            unlabeled_order: (0..n_unlabeled).collect(),
            unlabeled_pos: n_unlabeled,
            labeled_rng,
            unlabeled_rng,
            epoch: 0,
        }
    }

    pub fn epoch(&self) -> usize {
        self.epoch
    }

    /// Reshuffles the labeled pool and starts a new pass.
    pub fn begin_epoch(&mut self) {
        self.labeled_rng.shuffle(&mut self.labeled_order);
        self.labeled_pos = 0;
        self.epoch += 1;
    }

    /// Row indices of the next step, or `None` once the labeled pass is done.
    pub fn next_indices(&mut self) -> Option<(Vec<usize>, Vec<usize>)> {
        if self.labeled_pos >= self.labeled_order.len() {
            return None;
        }
        let end = (self.labeled_pos + self.plan.labeled_batch).min(self.labeled_order.len());
        let labeled = self.labeled_order[self.labeled_pos..end].to_vec();
        self.labeled_pos = end;

        let mut unlabeled = Vec::with_capacity(self.plan.unlabeled_batch);
        if !self.unlabeled_order.is_empty() {
            while unlabeled.len() < self.plan.unlabeled_batch {
                if self.unlabeled_pos >= self.unlabeled_order.len() {
                    self.unlabeled_rng.shuffle(&mut self.unlabeled_order);
                    self.unlabeled_pos = 0;
                }
                unlabeled.push(self.unlabeled_order[self.unlabeled_pos]);
                self.unlabeled_pos += 1;
            }
        }
        Some((labeled, unlabeled))
    }

    pub fn next_batch(&mut self, pools: &Pools) -> Option<ComposedBatch> {
        let (l, u) = self.next_indices()?;
        Some(ComposedBatch {
            labeled_x: pools.labeled_x.select_rows(&l),
            labeled_y: pools.labeled_y.select_rows(&l),
            unlabeled_x: pools.unlabeled_x.select_rows(&u),
        })
    }
}
