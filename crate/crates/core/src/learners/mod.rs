//! Classifiers built from scratch: CART, random forest and L2 logistic
//! regression, plus hyperparameter tuning and recursive feature elimination.

pub mod forest;
pub mod logit;
pub mod selection;
pub mod tree;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use forest::{fit_forest, ForestConfig, ForestModel, MaxFeatures};
pub use logit::{fit_logit, fit_logit_trace, LinearModel, LogisticLoss, LogitConfig, LogitFit};
pub use selection::{default_grid, rfecv, tune, FeatureSubset};
pub use tree::{fit_tree, gini, DecisionTreeModel, ImportanceVector, Node, TreeHyperParams};

#[derive(Debug, Error, PartialEq)]
pub enum LearnError {
    #[error("cannot fit on an empty table")]
    EmptyTable,
    #[error("table has no feature columns")]
    NoFeatures,
    #[error("impurity of an empty node")]
    EmptyNode,
    #[error("missing feature `{0}`")]
    MissingFeature(String),
    #[error("invalid hyperparameters: {0}")]
    InvalidHyperParams(String),
    #[error("logistic regression did not converge after {iterations} iterations (gradient norm {grad_norm:.3e})")]
    NonConvergence { iterations: usize, grad_norm: f64 },
}

/// Hard class plus injury score in [0, 1].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub class: bool,
    pub score: f64,
}
