//! Seeded stratified splits and k-fold partitions.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::EvalError;
use crate::table::TrainingTable;

fn class_indices(labels: &[bool], rng: &mut ChaCha8Rng) -> [Vec<usize>; 2] {
    let mut neg: Vec<usize> = (0..labels.len()).filter(|&i| !labels[i]).collect();
    let mut pos: Vec<usize> = (0..labels.len()).filter(|&i| labels[i]).collect();
    neg.shuffle(rng);
    pos.shuffle(rng);
    [neg, pos]
}

/// Row indices of the two parts. Part A holds `round(fraction * n_c)` rows of
/// each class `c`; both lists come back sorted.
pub fn stratified_split_indices(
    labels: &[bool],
    fraction: f64,
    seed: u64,
) -> Result<(Vec<usize>, Vec<usize>), EvalError> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(EvalError::InvalidFraction(fraction));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut a = Vec::new();
    let mut b = Vec::new();
    for (class, idx) in class_indices(labels, &mut rng).into_iter().enumerate() {
        let take = (fraction * idx.len() as f64).round() as usize;
        if take == 0 || take == idx.len() {
            return Err(EvalError::ClassTooSmall {
                class: class == 1,
                count: idx.len(),
            });
        }
        a.extend_from_slice(&idx[..take]);
        b.extend_from_slice(&idx[take..]);
    }
    a.sort_unstable();
    b.sort_unstable();
    Ok((a, b))
}

pub fn stratified_split(
    table: &TrainingTable,
    fraction: f64,
    seed: u64,
) -> Result<(TrainingTable, TrainingTable), EvalError> {
    let (a, b) = stratified_split_indices(&table.labels(), fraction, seed)?;
    Ok((table.subset(&a), table.subset(&b)))
}

/// Test-fold indices for stratified k-fold CV. Each class is shuffled and dealt
/// round-robin, continuing across classes so fold sizes differ by at most one.
pub fn stratified_kfold(labels: &[bool], k: usize, seed: u64) -> Result<Vec<Vec<usize>>, EvalError> {
    if k < 2 || k > labels.len() {
        return Err(EvalError::InvalidFolds(k));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut folds = vec![Vec::new(); k];
    let mut next = 0;
    let [neg, pos] = class_indices(labels, &mut rng);
    for i in pos.into_iter().chain(neg) {
        folds[next].push(i);
        next = (next + 1) % k;
    }
    for f in &mut folds {
        f.sort_unstable();
    }
    Ok(folds)
}

/// Complement of `fold` in `0..n`.
pub fn complement(fold: &[usize], n: usize) -> Vec<usize> {
    let mut mask = vec![true; n];
    for &i in fold {
        mask[i] = false;
    }
    (0..n).filter(|&i| mask[i]).collect()
}
