//! Split, select, tune, then cross-validate on the held-out part.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::metrics::{auc, metrics, ClassMetrics, ConfusionMatrix};
use super::split::{complement, stratified_kfold, stratified_split_indices};
use super::EvalError;
use crate::baselines::{mono_name, Baseline, BaselineKind, Combine, MonoForecaster, MonoMethod};
use crate::derive_seed;
use crate::learners::{
    default_grid, fit_forest, fit_logit_trace, fit_tree, rfecv, tune, DecisionTreeModel, ForestConfig,
    LearnError, LogitConfig, Prediction, TreeHyperParams,
};
use crate::resampling::{adasyn, ResamplingConfig};
use crate::table::TrainingTable;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub seed: u64,
    pub oversample: bool,
    pub feature_selection: bool,
    /// Share of the table used for selection and tuning.
    pub train_fraction: f64,
    pub eval_folds: usize,
    pub tune_folds: usize,
    pub rfecv_folds: usize,
    pub grid: Vec<TreeHyperParams>,
    /// Tree settings used inside feature elimination.
    pub rfecv_hp: TreeHyperParams,
    pub resampling: ResamplingConfig,
    /// Redo selection and tuning on every evaluation fold instead of reusing step 2.
    pub reselect_per_fold: bool,
    pub forest: ForestConfig,
    pub logit: LogitConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            oversample: true,
            feature_selection: true,
            train_fraction: 0.3,
            eval_folds: 2,
            tune_folds: 3,
            rfecv_folds: 3,
            grid: default_grid(),
            rfecv_hp: TreeHyperParams::default(),
            resampling: ResamplingConfig::default(),
            reselect_per_fold: false,
            forest: ForestConfig::default(),
            logit: LogitConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Forecaster {
    Tree,
    Forest,
    Logit,
    Baseline(BaselineKind),
    Mono(MonoMethod, Combine),
}

impl Forecaster {
    pub fn name(&self) -> String {
        match self {
            Self::Tree => "DT".into(),
            Self::Forest => "RF".into(),
            Self::Logit => "LR".into(),
            Self::Baseline(k) => k.name().into(),
            Self::Mono(method, combine) => mono_name(*method, combine),
        }
    }
}

pub fn default_forecasters() -> Vec<Forecaster> {
    let mut v = vec![Forecaster::Tree, Forecaster::Forest, Forecaster::Logit];
    v.extend(BaselineKind::ALL.map(Forecaster::Baseline));
    for method in [MonoMethod::AcwrMurray, MonoMethod::MswrQuintile] {
        for combine in [Combine::Vote, Combine::All, Combine::One] {
            v.push(Forecaster::Mono(method, combine));
        }
    }
    v
}

/// Output of selection and tuning.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepTwo {
    pub features: Vec<String>,
    pub hyperparams: TreeHyperParams,
    pub rfecv_scores: Vec<(usize, f64)>,
    pub synthetic_rows: usize,
}

/// ADASYN when enabled and possible (at least 2 injuries). Returns the table unchanged otherwise.
pub(crate) fn maybe_oversample(table: &TrainingTable, cfg: &PipelineConfig, seed: u64) -> TrainingTable {
    if !cfg.oversample || table.positives() < 2 || table.negatives() == 0 {
        return table.clone();
    }
    let rc = ResamplingConfig {
        seed,
        ..cfg.resampling.clone()
    };
    match adasyn(table, &rc) {
        Ok((t, _)) => t,
        Err(_) => table.clone(),
    }
}

/// Oversampling, feature elimination and grid search on `train`.
pub fn select_and_tune(
    train: &TrainingTable,
    cfg: &PipelineConfig,
    seed: u64,
) -> Result<StepTwo, EvalError> {
    let balanced = maybe_oversample(train, cfg, derive_seed(seed, 1));
    let synthetic_rows = balanced.len() - train.len();
    let (features, rfecv_scores) = if cfg.feature_selection {
        let s = rfecv(&balanced, &cfg.rfecv_hp, cfg.rfecv_folds, derive_seed(seed, 2));
        (s.features, s.scores)
    } else {
        (train.feature_names().to_vec(), Vec::new())
    };
    let narrowed = balanced.select(&features).expect("selected from table");
    let hyperparams = tune(&narrowed, &cfg.grid, cfg.tune_folds, derive_seed(seed, 3));
    Ok(StepTwo {
        features,
        hyperparams,
        rfecv_scores,
        synthetic_rows,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub forecaster: String,
    pub injury: ClassMetrics,
    pub non_injury: ClassMetrics,
    pub auc: Option<f64>,
    pub confusion: ConfusionMatrix,
    pub seed: u64,
    pub train_size: usize,
    pub test_size: usize,
    pub features: Vec<String>,
    pub hyperparams: TreeHyperParams,
    /// Synthetic rows among evaluated examples; always 0.
    pub synthetic_evaluated: usize,
}

pub(crate) fn fit_predict(
    f: &Forecaster,
    fit_on: &TrainingTable,
    raw_train: &TrainingTable,
    test: &TrainingTable,
    step: &StepTwo,
    cfg: &PipelineConfig,
    seed: u64,
) -> Result<Vec<Prediction>, EvalError> {
    let narrow = |t: &TrainingTable| t.select(&step.features).expect("selected from table");
    Ok(match f {
        Forecaster::Tree => fit_tree(&narrow(fit_on), &step.hyperparams, seed)?.predict_table(test)?,
        Forecaster::Forest => {
            fit_forest(&narrow(fit_on), &cfg.forest, &step.hyperparams, seed)?.predict_table(test)?
        }
        Forecaster::Logit => fit_logit_trace(&narrow(fit_on), &cfg.logit)?
            .model
            .predict_table(test)?,
        Forecaster::Baseline(kind) => Baseline::fit(*kind, raw_train).predict(test, seed)?,
        Forecaster::Mono(method, combine) => {
            MonoForecaster::fit(raw_train, *method, combine.clone())?.predict(test)?
        }
    })
}

/// Runs the full protocol once and scores every forecaster on the same folds.
pub fn evaluate_forecasters(
    table: &TrainingTable,
    cfg: &PipelineConfig,
    forecasters: &[Forecaster],
) -> Result<Vec<EvalReport>, EvalError> {
    let seed = cfg.seed;
    let (train_idx, test_idx) =
        stratified_split_indices(&table.labels(), cfg.train_fraction, derive_seed(seed, 0))?;
    let train = table.subset(&train_idx);
    let test = table.subset(&test_idx);
    let step = select_and_tune(&train, cfg, seed)?;

    let folds = stratified_kfold(&test.labels(), cfg.eval_folds, derive_seed(seed, 4))?;
    let mut cms = vec![ConfusionMatrix::default(); forecasters.len()];
    let mut scores = vec![Vec::new(); forecasters.len()];
    let mut labels = Vec::new();
    let mut synthetic_evaluated = 0;
    for (k, fold) in folds.iter().enumerate() {
        let k = k as u64;
        let raw_train = test.subset(&complement(fold, test.len()));
        let eval = test.subset(fold);
        synthetic_evaluated += eval.examples().iter().filter(|e| e.synthetic).count();
        let local;
        let step = if cfg.reselect_per_fold {
            local = select_and_tune(&raw_train, cfg, derive_seed(seed, 40 + k))?;
            &local
        } else {
            &step
        };
        let fit_on = maybe_oversample(&raw_train, cfg, derive_seed(seed, 10 + k));
        let y = eval.labels();
        for (i, f) in forecasters.iter().enumerate() {
            let preds = fit_predict(f, &fit_on, &raw_train, &eval, step, cfg, derive_seed(seed, 20 + k))?;
            for (p, &l) in preds.iter().zip(&y) {
                cms[i].record(l, p.class);
                scores[i].push(p.score);
            }
        }
        labels.extend(y);
    }
    Ok(forecasters
        .iter()
        .enumerate()
        .map(|(i, f)| {
            let m = metrics(&cms[i]);
            EvalReport {
                forecaster: f.name(),
                injury: m.injury,
                non_injury: m.non_injury,
                auc: auc(&scores[i], &labels).ok(),
                confusion: cms[i],
                seed,
                train_size: train.len(),
                test_size: test.len(),
                features: step.features.clone(),
                hyperparams: step.hyperparams,
                synthetic_evaluated,
            }
        })
        .collect())
}

/// Tree fitted on the whole (oversampled) table with a chosen subset and settings.
pub fn fit_final_model(
    table: &TrainingTable,
    cfg: &PipelineConfig,
    features: &[String],
    hp: &TreeHyperParams,
) -> Result<DecisionTreeModel, EvalError> {
    let fit_on = maybe_oversample(table, cfg, derive_seed(cfg.seed, 30));
    let narrowed = fit_on
        .select(features)
        .map_err(|e| LearnError::MissingFeature(e.to_string()))?;
    Ok(fit_tree(&narrowed, hp, derive_seed(cfg.seed, 31))?)
}

/// The decision-tree protocol.
pub fn run_pipeline(table: &TrainingTable, cfg: &PipelineConfig) -> Result<EvalReport, EvalError> {
    Ok(evaluate_forecasters(table, cfg, &[Forecaster::Tree])?.remove(0))
}

pub const METRIC_KEYS: [&str; 7] = [
    "injury_precision",
    "injury_recall",
    "injury_f1",
    "non_injury_precision",
    "non_injury_recall",
    "non_injury_f1",
    "auc",
];

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrialDistribution {
    pub n: usize,
    pub values: BTreeMap<String, Vec<f64>>,
    pub mean: BTreeMap<String, f64>,
    pub sd: BTreeMap<String, f64>,
}

impl TrialDistribution {
    /// AUC values are skipped for trials where it was undefined.
    pub fn from_reports(reports: &[EvalReport]) -> Self {
        let mut values: BTreeMap<String, Vec<f64>> =
            METRIC_KEYS.iter().map(|k| (k.to_string(), Vec::new())).collect();
        for r in reports {
            let row = [
                Some(r.injury.precision),
                Some(r.injury.recall),
                Some(r.injury.f1),
                Some(r.non_injury.precision),
                Some(r.non_injury.recall),
                Some(r.non_injury.f1),
                r.auc,
            ];
            for (k, v) in METRIC_KEYS.iter().zip(row) {
                if let Some(v) = v {
                    values.get_mut(*k).unwrap().push(v);
                }
            }
        }
        let mut mean = BTreeMap::new();
        let mut sd = BTreeMap::new();
        for (k, v) in &values {
            if v.is_empty() {
                continue;
            }
            let n = v.len() as f64;
            let m = v.iter().sum::<f64>() / n;
            let s = if v.len() > 1 {
                (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
            } else {
                0.0
            };
            mean.insert(k.clone(), m);
            sd.insert(k.clone(), s);
        }
        Self {
            n: reports.len(),
            values,
            mean,
            sd,
        }
    }
}

fn trial_config(cfg: &PipelineConfig, base_seed: u64, i: usize) -> PipelineConfig {
    PipelineConfig {
        seed: derive_seed(base_seed, i as u64),
        ..cfg.clone()
    }
}

/// `n` pipeline runs with seeds derived from `base_seed`, independent of scheduling.
pub fn repeat_trials(
    table: &TrainingTable,
    cfg: &PipelineConfig,
    n: usize,
    base_seed: u64,
) -> Result<TrialDistribution, EvalError> {
    let reports: Vec<EvalReport> = (0..n)
        .into_par_iter()
        .map(|i| run_pipeline(table, &trial_config(cfg, base_seed, i)))
        .collect::<Result<_, _>>()?;
    Ok(TrialDistribution::from_reports(&reports))
}

/// Forecaster comparison over repeated trials.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub rows: Vec<(String, TrialDistribution)>,
}

pub fn compare(
    table: &TrainingTable,
    cfg: &PipelineConfig,
    forecasters: &[Forecaster],
    n: usize,
    base_seed: u64,
) -> Result<Comparison, EvalError> {
    let trials: Vec<Vec<EvalReport>> = (0..n)
        .into_par_iter()
        .map(|i| evaluate_forecasters(table, &trial_config(cfg, base_seed, i), forecasters))
        .collect::<Result<_, _>>()?;
    let rows = forecasters
        .iter()
        .enumerate()
        .map(|(j, f)| {
            let reports: Vec<EvalReport> = trials.iter().map(|t| t[j].clone()).collect();
            (f.name(), TrialDistribution::from_reports(&reports))
        })
        .collect();
    Ok(Comparison { rows })
}

impl Comparison {
    fn cells(&self) -> Vec<[String; 6]> {
        let fmt = |d: &TrialDistribution, k: &str| match (d.mean.get(k), d.sd.get(k)) {
            (Some(m), Some(s)) => format!("{m:.2}±{s:.2}"),
            _ => "-".into(),
        };
        let mut out = Vec::new();
        for (name, d) in &self.rows {
            for (class, prefix) in [("1", "injury"), ("0", "non_injury")] {
                out.push([
                    name.clone(),
                    class.into(),
                    fmt(d, &format!("{prefix}_precision")),
                    fmt(d, &format!("{prefix}_recall")),
                    fmt(d, &format!("{prefix}_f1")),
                    fmt(d, "auc"),
                ]);
            }
        }
        out
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("forecaster,class,precision,recall,f1,auc\n");
        for row in self.cells() {
            s.push_str(&row.join(","));
            s.push('\n');
        }
        s
    }

    pub fn to_text(&self) -> String {
        let header = ["forecaster", "class", "prec", "rec", "F1", "AUC"].map(String::from);
        let rows = self.cells();
        let mut width = header.clone().map(|h| h.chars().count());
        for r in &rows {
            for (w, c) in width.iter_mut().zip(r) {
                *w = (*w).max(c.chars().count());
            }
        }
        let mut s = String::new();
        for r in std::iter::once(&header).chain(&rows) {
            let line: Vec<String> = r
                .iter()
                .zip(&width)
                .map(|(c, w)| format!("{c:<w$}", w = *w))
                .collect();
            let _ = writeln!(s, "{}", line.join("  ").trim_end());
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn planted(seed: u64, n: usize) -> TrainingTable {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let names: Vec<String> = (0..6).map(|i| format!("f{i}")).collect();
        let refs: Vec<&str> = names.iter().map(String::as_str).collect();
        let rows: Vec<_> = (0..n)
            .map(|_| {
                let x: Vec<f64> = (0..6).map(|_| rng.random::<f64>()).collect();
                let y = x[1] > 0.85 && x[4] > 0.5;
                (x, y)
            })
            .collect();
        TrainingTable::from_rows(&refs, &rows).unwrap()
    }

    fn quick() -> PipelineConfig {
        PipelineConfig {
            grid: vec![TreeHyperParams::new(Some(3), 1, 2), TreeHyperParams::new(Some(4), 2, 2)],
            forest: ForestConfig {
                n_trees: 10,
                ..Default::default()
            },
            ..Default::default()
        }
    }

    #[test]
    fn deterministic_and_no_synthetic_in_test() {
        let t = planted(1, 300);
        let a = run_pipeline(&t, &quick()).unwrap();
        let b = run_pipeline(&t, &quick()).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.synthetic_evaluated, 0);
        assert_eq!(a.confusion.total() as usize, a.test_size);
        assert!(a.injury.recall > 0.5);
    }

    #[test]
    fn ablation_shape() {
        let t = planted(2, 300);
        let cfg = PipelineConfig {
            oversample: false,
            feature_selection: false,
            ..quick()
        };
        let r = run_pipeline(&t, &cfg).unwrap();
        assert_eq!(r.features.len(), 6);
    }

    #[test]
    fn single_trial_matches_report() {
        let t = planted(3, 200);
        let d = repeat_trials(&t, &quick(), 1, 9).unwrap();
        let r = run_pipeline(&t, &trial_config(&quick(), 9, 0)).unwrap();
        assert_eq!(d.n, 1);
        assert_eq!(d.mean["injury_f1"], r.injury.f1);
        assert_eq!(d.sd["injury_f1"], 0.0);
    }

    #[test]
    fn comparison_rows() {
        let t = planted(4, 200);
        let c = compare(
            &t,
            &quick(),
            &[Forecaster::Tree, Forecaster::Baseline(BaselineKind::B3)],
            2,
            0,
        )
        .unwrap();
        let text = c.to_text();
        assert!(text.contains("DT"));
        assert!(text.contains("B3"));
        assert_eq!(c.to_csv().lines().count(), 5);
    }
}
