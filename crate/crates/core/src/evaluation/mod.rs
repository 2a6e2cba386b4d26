//! Metrics, stratified splitting and the train / validate protocol.

pub mod metrics;
pub mod pipeline;
pub mod split;

use thiserror::Error;

use crate::baselines::BaselineError;
use crate::learners::LearnError;
use crate::resampling::ResampleError;

pub use metrics::{auc, metrics, ClassMetrics, ConfusionMatrix, Metrics};
pub use pipeline::{
    compare, default_forecasters, evaluate_forecasters, fit_final_model, repeat_trials, run_pipeline,
    select_and_tune,
    Comparison, EvalReport, Forecaster, PipelineConfig, StepTwo, TrialDistribution,
};
pub use split::{stratified_kfold, stratified_split, stratified_split_indices};

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("AUC needs both classes")]
    OneClassOnly,
    #[error("{0} scores but {1} labels")]
    LengthMismatch(usize, usize),
    #[error("split fraction {0} outside (0, 1)")]
    InvalidFraction(f64),
    #[error("class {class} has {count} examples, too few to split")]
    ClassTooSmall { class: bool, count: usize },
    #[error("invalid fold count {0}")]
    InvalidFolds(usize),
    #[error(transparent)]
    Learn(#[from] LearnError),
    #[error(transparent)]
    Resample(#[from] ResampleError),
    #[error(transparent)]
    Baseline(#[from] BaselineError),
}
