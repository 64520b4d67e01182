use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Split {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

/// Shuffled k-fold splits: fold `f` is the test set, fold `f + 1` (cyclic)
/// the validation set, and the rest is training data.
pub fn kfold_split(n: usize, folds: usize, seed: u64) -> Result<Vec<Split>> {
    if folds < 3 {
        return Err(Error::InvalidArgument(format!("need at least 3 folds for train/val/test, got {folds}")));
    }
    if n < folds {
        return Err(Error::InvalidArgument(format!("{n} graphs cannot fill {folds} folds")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let chunks: Vec<Vec<usize>> = (0..folds).map(|f| order[f * n / folds..(f + 1) * n / folds].to_vec()).collect();
    Ok((0..folds)
        .map(|f| {
            let v = (f + 1) % folds;
            let train = (0..folds).filter(|&g| g != f && g != v).flat_map(|g| chunks[g].iter().copied()).collect();
            Split { train, val: chunks[v].clone(), test: chunks[f].clone() }
        })
        .collect())
}
