//! Grid search over tree hyperparameters and recursive feature elimination,
//! both scored by injury-class F1 under stratified k-fold CV.

use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::tree::{fit_tree_sampled, DecisionTreeModel, TreeHyperParams};
use crate::evaluation::metrics::{metrics, ConfusionMatrix};
use crate::evaluation::split::stratified_kfold;
use crate::table::TrainingTable;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSubset {
    pub features: Vec<String>,
    /// `(subset size, mean CV F1)` from the full size down to 1.
    pub scores: Vec<(usize, f64)>,
}

pub fn default_grid() -> Vec<TreeHyperParams> {
    let mut grid = Vec::new();
    for depth in [2, 3, 4, 5, 6, 8] {
        for leaf in [1, 2, 5, 10] {
            for split in [2, 10] {
                grid.push(TreeHyperParams::new(Some(depth), leaf, split));
            }
        }
    }
    grid
}

fn fit_on(
    cols: &[Vec<f64>],
    labels: &[bool],
    feats: &[usize],
    rows: &[usize],
    hp: &TreeHyperParams,
) -> DecisionTreeModel {
    let sub: Vec<Vec<f64>> = feats.iter().map(|&f| cols[f].clone()).collect();
    let names: Vec<String> = feats.iter().map(|f| f.to_string()).collect();
    fit_tree_sampled(&sub, labels, rows.to_vec(), &names, hp, None, 0)
}

fn fold_f1(
    model: &DecisionTreeModel,
    cols: &[Vec<f64>],
    labels: &[bool],
    feats: &[usize],
    rows: &[usize],
) -> f64 {
    let mut cm = ConfusionMatrix::default();
    let mut x = vec![0.0; feats.len()];
    for &r in rows {
        for (slot, &f) in x.iter_mut().zip(feats) {
            *slot = cols[f][r];
        }
        cm.record(labels[r], model.predict_row(&x).class);
    }
    metrics(&cm).injury.f1
}

/// Stratified folds over the original rows. A synthetic row trains only when
/// both rows it was interpolated from are in the training part, and is never
/// scored, so no validation row leaks into training.
fn cv_folds(table: &TrainingTable, folds: usize, seed: u64) -> Vec<(Vec<usize>, Vec<usize>)> {
    let ex = table.examples();
    let originals: Vec<usize> = (0..ex.len()).filter(|&i| !ex[i].synthetic).collect();
    let labels: Vec<bool> = originals.iter().map(|&i| ex[i].label).collect();
    let k = folds.clamp(2, labels.len().max(2));
    let mut fold_of = vec![usize::MAX; ex.len()];
    let mut by_key = HashMap::new();
    for (f, test) in stratified_kfold(&labels, k, seed)
        .expect("fold count clamped")
        .into_iter()
        .enumerate()
    {
        for j in test {
            let i = originals[j];
            fold_of[i] = f;
            by_key.insert((ex[i].player_id.as_str(), ex[i].date), f);
        }
    }
    let parents: Vec<[Option<usize>; 2]> = ex
        .iter()
        .map(|e| {
            let base = by_key.get(&(e.player_id.as_str(), e.date)).copied();
            let partner = match &e.partner {
                Some((p, d)) => by_key.get(&(p.as_str(), *d)).copied(),
                None => base,
            };
            [base, partner]
        })
        .collect();
    (0..k)
        .map(|f| {
            let mut train = Vec::new();
            let mut test = Vec::new();
            for i in 0..ex.len() {
                if !ex[i].synthetic {
                    if fold_of[i] == f {
                        test.push(i);
                    } else {
                        train.push(i);
                    }
                } else if parents[i].iter().all(|p| p.is_some_and(|p| p != f)) {
                    train.push(i);
                }
            }
            (train, test)
        })
        .collect()
}

/// `None` depth sorts as deepest.
fn depth_key(hp: &TreeHyperParams) -> usize {
    hp.max_depth.unwrap_or(usize::MAX)
}

/// Grid point with the best mean CV F1; ties go to smaller `max_depth`, then
/// larger `min_samples_leaf`, then grid order.
pub fn tune(
    table: &TrainingTable,
    grid: &[TreeHyperParams],
    folds: usize,
    seed: u64,
) -> TreeHyperParams {
    assert!(!grid.is_empty(), "empty hyperparameter grid");
    if grid.len() == 1 || table.len() < 2 {
        return grid[0];
    }
    let cols = table.columns();
    let labels = table.labels();
    let feats: Vec<usize> = (0..table.n_features()).collect();
    let splits = cv_folds(table, folds, seed);
    let scores: Vec<f64> = grid
        .par_iter()
        .map(|hp| {
            splits
                .iter()
                .map(|(train, test)| {
                    let m = fit_on(&cols, &labels, &feats, train, hp);
                    fold_f1(&m, &cols, &labels, &feats, test)
                })
                .sum::<f64>()
                / splits.len() as f64
        })
        .collect();
    let mut best = 0;
    for i in 1..grid.len() {
        let (a, b) = (&grid[i], &grid[best]);
        let better = scores[i] > scores[best]
            || (scores[i] == scores[best]
                && (depth_key(a), std::cmp::Reverse(a.min_samples_leaf))
                    < (depth_key(b), std::cmp::Reverse(b.min_samples_leaf)));
        if better {
            best = i;
        }
    }
    grid[best]
}

/// Runs elimination on `rows`, calling `visit(size, model, feats)` for every
/// subset size from `feats.len()` down to `stop`. Returns the surviving features.
fn eliminate(
    cols: &[Vec<f64>],
    labels: &[bool],
    rows: &[usize],
    hp: &TreeHyperParams,
    stop: usize,
    mut visit: impl FnMut(usize, &DecisionTreeModel, &[usize]),
) -> Vec<usize> {
    let mut feats: Vec<usize> = (0..cols.len()).collect();
    let mut model = fit_on(cols, labels, &feats, rows, hp);
    let mut imp = model.raw_importances();
    loop {
        visit(feats.len(), &model, &feats);
        if feats.len() <= stop {
            return feats;
        }
        let mut drop = 0;
        for j in 1..imp.len() {
            if imp[j] < imp[drop] {
                drop = j;
            }
        }
        let unused = imp[drop] == 0.0;
        feats.remove(drop);
        imp.remove(drop);
        // an unused column never wins a split, so the tree is unchanged
        if unused {
            let names: Vec<String> = feats.iter().map(|f| f.to_string()).collect();
            model = remap(&model, &names);
        } else {
            model = fit_on(cols, labels, &feats, rows, hp);
            imp = model.raw_importances();
        }
    }
}

/// Same tree over a narrower column list (features referenced by name).
fn remap(model: &DecisionTreeModel, names: &[String]) -> DecisionTreeModel {
    use super::tree::Node;
    let old = model.feature_names();
    let nodes = model
        .nodes()
        .iter()
        .map(|n| match n {
            Node::Decision {
                feature,
                threshold,
                left,
                right,
                counts,
            } => Node::Decision {
                feature: names
                    .iter()
                    .position(|s| *s == old[*feature])
                    .expect("used feature kept"),
                threshold: *threshold,
                left: *left,
                right: *right,
                counts: *counts,
            },
            leaf => leaf.clone(),
        })
        .collect();
    DecisionTreeModel::from_parts(names.to_vec(), nodes, *model.hyperparams())
}

/// Recursive feature elimination (one feature per step, lowest Gini importance,
/// earliest column on ties) with CV over subset sizes. Returns the subset with
/// the best mean F1; ties go to the smaller subset.
pub fn rfecv(table: &TrainingTable, hp: &TreeHyperParams, folds: usize, seed: u64) -> FeatureSubset {
    let p = table.n_features();
    if p <= 1 || table.len() < 2 {
        return FeatureSubset {
            features: table.feature_names().to_vec(),
            scores: vec![(p, 0.0)],
        };
    }
    let cols = table.columns();
    let labels = table.labels();
    let splits = cv_folds(table, folds, seed);
    let per_fold: Vec<Vec<f64>> = splits
        .par_iter()
        .map(|(train, test)| {
            let mut s = vec![0.0; p + 1];
            eliminate(&cols, &labels, train, hp, 1, |size, m, feats| {
                s[size] = fold_f1(m, &cols, &labels, feats, test);
            });
            s
        })
        .collect();
    let scores: Vec<(usize, f64)> = (1..=p)
        .rev()
        .map(|size| {
            let mean = per_fold.iter().map(|s| s[size]).sum::<f64>() / per_fold.len() as f64;
            (size, mean)
        })
        .collect();
    let mut best = scores[0];
    for &(size, score) in &scores[1..] {
        if score >= best.1 {
            best = (size, score);
        }
    }
    let all: Vec<usize> = (0..table.len()).collect();
    let keep = eliminate(&cols, &labels, &all, hp, best.0, |_, _, _| {});
    FeatureSubset {
        features: keep
            .iter()
            .map(|&f| table.feature_names()[f].clone())
            .collect(),
        scores,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn planted(seed: u64) -> TrainingTable {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let names: Vec<String> = (0..10).map(|i| format!("f{i}")).collect();
        let refs: Vec<&str> = names.iter().map(String::as_str).collect();
        let rows: Vec<_> = (0..200)
            .map(|_| {
                let x: Vec<f64> = (0..10).map(|_| rng.random::<f64>()).collect();
                let y = x[3] > 0.6 && x[7] < 0.5;
                (x, y)
            })
            .collect();
        TrainingTable::from_rows(&refs, &rows).unwrap()
    }

    #[test]
    fn grid_has_48_points() {
        assert_eq!(default_grid().len(), 48);
    }

    #[test]
    fn single_point_grid() {
        let hp = TreeHyperParams::new(Some(3), 2, 2);
        assert_eq!(tune(&planted(1), &[hp], 3, 0), hp);
    }

    #[test]
    fn separating_config_wins() {
        let t = planted(2);
        let stump = TreeHyperParams::new(Some(1), 1, 2);
        let deep = TreeHyperParams::new(Some(4), 1, 2);
        assert_eq!(tune(&t, &[stump, deep], 3, 0), deep);
        assert_eq!(tune(&t, &default_grid(), 3, 4), tune(&t, &default_grid(), 3, 4));
    }

    #[test]
    fn rfecv_recovers_planted_pair() {
        let t = planted(3);
        let s = rfecv(&t, &TreeHyperParams::default(), 3, 0);
        assert!(s.features.contains(&"f3".to_string()));
        assert!(s.features.contains(&"f7".to_string()));
        assert_eq!(s.scores.len(), 10);
    }

    #[test]
    fn rfecv_single_feature() {
        let t = TrainingTable::from_rows(&["a"], &[(vec![1.0], true), (vec![0.0], false)]).unwrap();
        assert_eq!(rfecv(&t, &TreeHyperParams::default(), 3, 0).features, vec!["a"]);
    }
}
