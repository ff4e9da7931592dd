use std::collections::HashSet;

use serde::Serialize;

use super::dataset::{Language, LabeledRecord, Split};
use crate::error::{Error, Result};
use crate::numkit::Rng;

const SPLIT_STREAM: u64 = 0x5e17;

/// Labeled and unlabeled id pools for one semi-supervised run.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SemiSupSplit {
    pub labeled_ids: Vec<String>,
    pub unlabeled_ids: Vec<String>,
    pub seed: u64,
}

/// Number of labeled examples drawn from a pool of `n`.
pub fn labeled_count(rho: f64, n: usize) -> usize {
    // The small guard keeps e.g. 0.29 * 100 from landing on 28.999...
    ((rho * n as f64 + 1e-9).floor() as usize).min(n)
}

/// Draws `floor(rho * N)` labeled records from the target-language training
/// pool. The remaining target records and every training record of
/// `other_languages` form the unlabeled pool.
///
/// The draw is a prefix of one seeded permutation, so for a fixed seed the
/// labeled set at a smaller `rho` is contained in the one at a larger `rho`.
/// With `include_dev` the target dev records join the labeled candidates.
pub fn make_semisup_split(
    records: &[LabeledRecord],
    target: &Language,
    rho: f64,
    other_languages: &[Language],
    include_dev: bool,
    seed: u64,
) -> Result<SemiSupSplit> {
    if !(rho > 0.0 && rho <= 1.0) {
        return Err(Error::Config(format!("rho must be in (0, 1], got {rho}")));
    }
    let in_pool = |r: &LabeledRecord| r.split == Split::Train || (include_dev && r.split == Split::Dev);
    let target_pool: Vec<&LabeledRecord> = records
        .iter()
        .filter(|r| &r.language == target && in_pool(r))
        .collect();
    if target_pool.is_empty() {
        return Err(Error::Data(format!("no training records for {target}")));
    }

    let mut order: Vec<usize> = (0..target_pool.len()).collect();
    Rng::new(seed).substream(SPLIT_STREAM).shuffle(&mut order);
    let n_labeled = labeled_count(rho, target_pool.len());
    let mut chosen = vec![false; target_pool.len()];
    for &i in &order[..n_labeled] {
        chosen[i] = true;
    }

    let mut labeled_ids = Vec::with_capacity(n_labeled);
    let mut unlabeled_ids = Vec::new();
    for (r, &c) in target_pool.iter().zip(&chosen) {
        if c {
            labeled_ids.push(r.id.clone());
        } else {
            unlabeled_ids.push(r.id.clone());
        }
    }
    for r in records {
        if r.split == Split::Train && &r.language != target && other_languages.contains(&r.language) {
            unlabeled_ids.push(r.id.clone());
        }
    }
    let mut seen = HashSet::with_capacity(labeled_ids.len() + unlabeled_ids.len());
    for id in labeled_ids.iter().chain(&unlabeled_ids) {
        if !seen.insert(id.as_str()) {
            return Err(Error::DuplicateId(id.clone()));
        }
    }
    Ok(SemiSupSplit {
        labeled_ids,
        unlabeled_ids,
        seed,
    })
}
