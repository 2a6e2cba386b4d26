//! Bagged CART ensemble with per-split feature subsampling.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::tree::{fit_tree_sampled, DecisionTreeModel, TreeHyperParams};
use super::{LearnError, Prediction};
use crate::derive_seed;
use crate::table::TrainingTable;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MaxFeatures {
    /// `ceil(sqrt(p))` candidates per split.
    Sqrt,
    All,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestConfig {
    pub n_trees: usize,
    pub bootstrap: bool,
    pub max_features: MaxFeatures,
}

impl Default for ForestConfig {
    fn default() -> Self {
        Self {
            n_trees: 100,
            bootstrap: true,
            max_features: MaxFeatures::Sqrt,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestModel {
    trees: Vec<DecisionTreeModel>,
}

pub fn fit_forest(
    table: &TrainingTable,
    cfg: &ForestConfig,
    hp: &TreeHyperParams,
    seed: u64,
) -> Result<ForestModel, LearnError> {
    if table.is_empty() {
        return Err(LearnError::EmptyTable);
    }
    if table.n_features() == 0 {
        return Err(LearnError::NoFeatures);
    }
    if cfg.n_trees == 0 {
        return Err(LearnError::InvalidHyperParams("n_trees must be >= 1".into()));
    }
    // validates hp
    super::tree::fit_tree(&table.subset(&[0]), hp, seed)?;
    let cols = table.columns();
    let labels = table.labels();
    let n = table.len();
    let p = table.n_features();
    let per_split = match cfg.max_features {
        MaxFeatures::Sqrt => Some(((p as f64).sqrt().ceil() as usize).max(1)),
        MaxFeatures::All => None,
    };
    let trees = (0..cfg.n_trees)
        .into_par_iter()
        .map(|t| {
            let tree_seed = derive_seed(seed, t as u64);
            let mut rng = ChaCha8Rng::seed_from_u64(tree_seed);
            let rows: Vec<usize> = if cfg.bootstrap {
                (0..n).map(|_| rng.random_range(0..n)).collect()
            } else {
                (0..n).collect()
            };
            fit_tree_sampled(
                &cols,
                &labels,
                rows,
                table.feature_names(),
                hp,
                per_split,
                rng.random(),
            )
        })
        .collect();
    Ok(ForestModel { trees })
}

impl ForestModel {
    pub fn trees(&self) -> &[DecisionTreeModel] {
        &self.trees
    }

    pub fn feature_names(&self) -> &[String] {
        self.trees[0].feature_names()
    }

    pub fn predict_row(&self, x: &[f64]) -> Prediction {
        let score =
            self.trees.iter().map(|t| t.predict_row(x).score).sum::<f64>() / self.trees.len() as f64;
        Prediction {
            class: score >= 0.5,
            score,
        }
    }

    pub fn predict_table(&self, table: &TrainingTable) -> Result<Vec<Prediction>, LearnError> {
        let idx = table
            .index_map(self.feature_names())
            .map_err(|e| LearnError::MissingFeature(e.to_string()))?;
        Ok(table
            .examples()
            .iter()
            .map(|e| {
                let row: Vec<f64> = idx.iter().map(|&j| e.features[j]).collect();
                self.predict_row(&row)
            })
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learners::fit_tree;

    fn table() -> TrainingTable {
        let rows: Vec<_> = (0..60)
            .map(|i| {
                let a = (i * 37 % 17) as f64;
                let b = (i * 11 % 7) as f64;
                (vec![a, b, (i % 5) as f64], a + 2.0 * b > 18.0)
            })
            .collect();
        TrainingTable::from_rows(&["a", "b", "c"], &rows).unwrap()
    }

    #[test]
    fn single_unbagged_tree_equals_cart() {
        let t = table();
        let hp = TreeHyperParams::new(Some(4), 1, 2);
        let cfg = ForestConfig {
            n_trees: 1,
            bootstrap: false,
            max_features: MaxFeatures::All,
        };
        let f = fit_forest(&t, &cfg, &hp, 3).unwrap();
        let tree = fit_tree(&t, &hp, 3).unwrap();
        assert_eq!(f.trees()[0], tree);
        let fp = f.predict_table(&t).unwrap();
        let tp = tree.predict_table(&t).unwrap();
        for (a, b) in fp.iter().zip(&tp) {
            assert_eq!(a.score, b.score);
        }
    }

    #[test]
    fn scores_in_unit_interval_and_seeded() {
        let t = table();
        let cfg = ForestConfig {
            n_trees: 15,
            ..Default::default()
        };
        let hp = TreeHyperParams::default();
        let a = fit_forest(&t, &cfg, &hp, 9).unwrap().predict_table(&t).unwrap();
        let b = fit_forest(&t, &cfg, &hp, 9).unwrap().predict_table(&t).unwrap();
        assert!(a.iter().all(|p| (0.0..=1.0).contains(&p.score)));
        assert!(a
            .iter()
            .zip(&b)
            .all(|(x, y)| x.score.to_bits() == y.score.to_bits()));
    }
}
