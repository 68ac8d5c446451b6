use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{CorpusError, LabeledReview};

pub const TRAIN_FRACTION: f64 = 0.8;
const MIN_TO_SPLIT: usize = 5;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusSplit {
    pub train: BTreeSet<String>,
    pub dev: BTreeSet<String>,
    pub seed: u64,
}

impl CorpusSplit {
    pub fn partition<'a>(&self, labeled: &'a [LabeledReview]) -> (Vec<&'a LabeledReview>, Vec<&'a LabeledReview>) {
        labeled.iter().partition(|l| self.train.contains(&l.review.review_id))
    }
}

/// Stratified 80/20 split, deterministic for a given seed.
///
/// Positives and negatives are shuffled separately; the training side gets
/// `round(0.8 * positives)` positives and is topped up with negatives to
/// `round(0.8 * total)` reviews.
pub fn split_train_dev(labeled: &[LabeledReview], seed: u64) -> Result<CorpusSplit, CorpusError> {
    if labeled.len() < MIN_TO_SPLIT {
        return Err(CorpusError::TooFewToSplit {
            need: MIN_TO_SPLIT,
            got: labeled.len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // sort ids first so input order does not affect the split
    let mut pos: Vec<&str> = Vec::new();
    let mut neg: Vec<&str> = Vec::new();
    for l in labeled {
        if l.doc_label {
            pos.push(&l.review.review_id);
        } else {
            neg.push(&l.review.review_id);
        }
    }
    pos.sort_unstable();
    neg.sort_unstable();
    pos.shuffle(&mut rng);
    neg.shuffle(&mut rng);

    let n_train = (TRAIN_FRACTION * labeled.len() as f64).round() as usize;
    let pos_train = ((TRAIN_FRACTION * pos.len() as f64).round() as usize).min(n_train);
    let neg_train = (n_train - pos_train).min(neg.len());
    let pos_train = n_train - neg_train;

    let mut split = CorpusSplit {
        train: BTreeSet::new(),
        dev: BTreeSet::new(),
        seed,
    };
    for (i, id) in pos.iter().enumerate() {
        let side = if i < pos_train {
            &mut split.train
        } else {
            &mut split.dev
        };
        side.insert(id.to_string());
    }
    for (i, id) in neg.iter().enumerate() {
        let side = if i < neg_train {
            &mut split.train
        } else {
            &mut split.dev
        };
        side.insert(id.to_string());
    }
    Ok(split)
}
