//! Weekly walk-forward retraining over a season, cumulative scores, feature
//! tracking and the absence-cost model.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use chrono::{Datelike, Duration, NaiveDate};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{assign_labels, DataError, InjuryRecord, SeasonLog};
use crate::derive_seed;
use crate::evaluation::metrics::{metrics, ConfusionMatrix};
use crate::evaluation::pipeline::{fit_predict, maybe_oversample, select_and_tune, Forecaster, PipelineConfig, StepTwo};
use crate::evaluation::EvalError;
use crate::features::{build_training_table, FeatureError, FeatureSpec};
use crate::learners::TreeHyperParams;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("season spans {weeks} weeks; walk-forward from week {start_week} needs at least {}", start_week + 1)]
    InsufficientHistory { weeks: usize, start_week: usize },
    #[error("start_week must be >= 1")]
    InvalidStartWeek,
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Features(#[from] FeatureError),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

/// Where week 1 begins.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum WeekAnchor {
    /// Consecutive 7-day blocks from the first session date.
    FirstSession,
    /// ISO weeks: blocks start on the Monday on or before the first session.
    IsoMonday,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    pub pipeline: PipelineConfig,
    pub start_week: usize,
    pub horizon_days: u32,
    pub features: FeatureSpec,
    pub anchor: WeekAnchor,
    /// Refit alongside the decision tree every week.
    pub comparators: Vec<Forecaster>,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            pipeline: PipelineConfig::default(),
            start_week: 6,
            horizon_days: 3,
            features: FeatureSpec::default(),
            anchor: WeekAnchor::FirstSession,
            comparators: Vec::new(),
        }
    }
}

/// One injury as seen by the forecaster.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InjuryRef {
    pub player_id: String,
    pub onset_date: NaiveDate,
    pub days_absent: u32,
    /// Date of the session whose label carries the injury.
    pub session_date: NaiveDate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionPrediction {
    pub player_id: String,
    pub date: NaiveDate,
    pub label: bool,
    pub predicted: bool,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparatorWeek {
    pub forecaster: String,
    pub weekly: ConfusionMatrix,
    pub cumulative: ConfusionMatrix,
    pub cumulative_f1: f64,
}

/// Model trained on everything up to the end of `week`, scored on `week + 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeeklyOutcome {
    pub week: usize,
    pub train_end: NaiveDate,
    pub predict_start: NaiveDate,
    pub predict_end: NaiveDate,
    pub train_rows: usize,
    pub train_positives: usize,
    /// Latest session date in the training table.
    pub latest_train_date: Option<NaiveDate>,
    /// No injury examples yet; every forecaster predicted 0.
    pub degenerate: bool,
    pub features: Vec<String>,
    pub hyperparams: Option<TreeHyperParams>,
    pub predictions: Vec<SessionPrediction>,
    pub detected: Vec<InjuryRef>,
    pub missed: Vec<InjuryRef>,
    pub weekly: ConfusionMatrix,
    pub cumulative: ConfusionMatrix,
    pub cumulative_f1: f64,
    pub comparators: Vec<ComparatorWeek>,
}

/// First day of week 1.
pub fn week_origin(first: NaiveDate, anchor: WeekAnchor) -> NaiveDate {
    match anchor {
        WeekAnchor::FirstSession => first,
        WeekAnchor::IsoMonday => {
            first - Duration::days(i64::from(first.weekday().num_days_from_monday()))
        }
    }
}

/// 1-based week of `date`.
pub fn week_of(origin: NaiveDate, date: NaiveDate) -> usize {
    ((date - origin).num_days().div_euclid(7) + 1) as usize
}

fn week_bounds(origin: NaiveDate, week: usize) -> (NaiveDate, NaiveDate) {
    let start = origin + Duration::days(7 * (week as i64 - 1));
    (start, start + Duration::days(6))
}

/// The log as it stood at the end of `end`: later sessions and injuries are unknown.
pub fn truncate_log(log: &SeasonLog, end: NaiveDate) -> Result<SeasonLog, DataError> {
    SeasonLog::new(
        log.players().to_vec(),
        log.sessions().filter(|s| s.date <= end).cloned().collect(),
        log.injuries()
            .iter()
            .filter(|i| i.onset_date <= end)
            .cloned()
            .collect(),
    )
}

fn f1(cm: &ConfusionMatrix) -> f64 {
    metrics(cm).injury.f1
}

pub fn walk_forward(log: &SeasonLog, cfg: &SimConfig) -> Result<Vec<WeeklyOutcome>, SimError> {
    if cfg.start_week == 0 {
        return Err(SimError::InvalidStartWeek);
    }
    let (Some(first), Some(last)) = (log.first_date(), log.last_date()) else {
        return Err(SimError::InsufficientHistory {
            weeks: 0,
            start_week: cfg.start_week,
        });
    };
    let origin = week_origin(first, cfg.anchor);
    let n_weeks = week_of(origin, last);
    if n_weeks < cfg.start_week + 1 {
        return Err(SimError::InsufficientHistory {
            weeks: n_weeks,
            start_week: cfg.start_week,
        });
    }

    // Labels here use the whole season; they only score predictions.
    let full_labels = assign_labels(log, cfg.horizon_days);
    let (full, _) = build_training_table(&full_labels, log.players(), log.injuries(), &cfg.features)?;
    let carriers: HashMap<(String, NaiveDate), InjuryRef> = full_labels
        .sessions
        .iter()
        .filter_map(|l| {
            let inj = &log.injuries()[l.injury?];
            Some((
                (l.session.player_id.clone(), l.session.date),
                InjuryRef {
                    player_id: inj.player_id.clone(),
                    onset_date: inj.onset_date,
                    days_absent: inj.days_absent,
                    session_date: l.session.date,
                },
            ))
        })
        .collect();

    let mut outcomes = Vec::new();
    let mut cumulative = ConfusionMatrix::default();
    let mut comp_cum = vec![ConfusionMatrix::default(); cfg.comparators.len()];
    for week in cfg.start_week..n_weeks {
        let (_, train_end) = week_bounds(origin, week);
        let (predict_start, predict_end) = week_bounds(origin, week + 1);
        let known = truncate_log(log, train_end)?;
        let labels = assign_labels(&known, cfg.horizon_days);
        let (train, _) =
            build_training_table(&labels, known.players(), known.injuries(), &cfg.features)?;
        let target = full.filter(|e| e.date >= predict_start && e.date <= predict_end);
        let seed = derive_seed(cfg.pipeline.seed, week as u64);
        let degenerate = train.positives() == 0 || train.negatives() == 0;

        let mut forecasters = vec![Forecaster::Tree];
        forecasters.extend(cfg.comparators.iter().cloned());
        let (step, preds) = if degenerate || target.is_empty() {
            let zero = target
                .examples()
                .iter()
                .map(|_| crate::learners::Prediction { class: false, score: 0.0 })
                .collect::<Vec<_>>();
            (None, vec![zero; forecasters.len()])
        } else {
            let step = select_and_tune(&train, &cfg.pipeline, seed)?;
            let fit_on = maybe_oversample(&train, &cfg.pipeline, derive_seed(seed, 1));
            let preds = forecasters
                .iter()
                .map(|f| fit_predict(f, &fit_on, &train, &target, &step, &cfg.pipeline, derive_seed(seed, 20)))
                .collect::<Result<Vec<_>, _>>()?;
            (Some(step), preds)
        };

        let y = target.labels();
        let mut weekly = ConfusionMatrix::default();
        let mut detected = Vec::new();
        let mut missed = Vec::new();
        let mut predictions = Vec::with_capacity(y.len());
        for (e, p) in target.examples().iter().zip(&preds[0]) {
            weekly.record(e.label, p.class);
            if let Some(inj) = carriers.get(&(e.player_id.clone(), e.date)) {
                if p.class {
                    detected.push(inj.clone());
                } else {
                    missed.push(inj.clone());
                }
            }
            predictions.push(SessionPrediction {
                player_id: e.player_id.clone(),
                date: e.date,
                label: e.label,
                predicted: p.class,
                score: p.score,
            });
        }
        cumulative.add(&weekly);
        let comparators = cfg
            .comparators
            .iter()
            .zip(&preds[1..])
            .zip(&mut comp_cum)
            .map(|((f, p), cum)| {
                let w = ConfusionMatrix::from_predictions(
                    &y,
                    &p.iter().map(|p| p.class).collect::<Vec<_>>(),
                );
                cum.add(&w);
                ComparatorWeek {
                    forecaster: f.name(),
                    weekly: w,
                    cumulative: *cum,
                    cumulative_f1: f1(cum),
                }
            })
            .collect();
        let (features, hyperparams) = match step {
            Some(StepTwo {
                features,
                hyperparams,
                ..
            }) => (features, Some(hyperparams)),
            None => (Vec::new(), None),
        };
        outcomes.push(WeeklyOutcome {
            week,
            train_end,
            predict_start,
            predict_end,
            train_rows: train.len(),
            train_positives: train.positives(),
            latest_train_date: train.examples().iter().map(|e| e.date).max(),
            degenerate,
            features,
            hyperparams,
            predictions,
            detected,
            missed,
            weekly,
            cumulative,
            cumulative_f1: f1(&cumulative),
            comparators,
        });
    }
    Ok(outcomes)
}

/// Weeks whose training data reaches past their own end.
pub fn look_ahead_violations(outcomes: &[WeeklyOutcome]) -> Vec<usize> {
    outcomes
        .iter()
        .filter(|o| {
            o.latest_train_date.is_some_and(|d| d > o.train_end)
                || o.predictions.iter().any(|p| p.date <= o.train_end)
        })
        .map(|o| o.week)
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureTrace {
    pub weeks: Vec<(usize, Vec<String>)>,
    /// First week after which the subset never changes.
    pub stabilized_at: Option<usize>,
}

pub fn feature_trace(outcomes: &[WeeklyOutcome]) -> FeatureTrace {
    let weeks: Vec<(usize, Vec<String>)> = outcomes
        .iter()
        .map(|o| {
            let mut f = o.features.clone();
            f.sort();
            (o.week, f)
        })
        .collect();
    let stabilized_at = weeks.last().map(|(_, last)| {
        let k = weeks.iter().rposition(|(_, f)| f != last).map_or(0, |i| i + 1);
        weeks[k].0
    });
    FeatureTrace {
        weeks,
        stabilized_at,
    }
}

/// Currency held as integer cents.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub struct Money(i64);

impl Money {
    pub fn from_cents(cents: i64) -> Self {
        Self(cents)
    }

    pub fn from_units(units: i64) -> Self {
        Self(units * 100)
    }

    pub fn cents(self) -> i64 {
        self.0
    }
}

impl fmt::Display for Money {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sign = if self.0 < 0 { "-" } else { "" };
        let a = self.0.unsigned_abs();
        write!(f, "{sign}{}.{:02}", a / 100, a % 100)
    }
}

#[derive(Debug, Error, PartialEq)]
#[error("invalid amount `{0}`")]
pub struct MoneyParseError(String);

impl FromStr for Money {
    type Err = MoneyParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let err = || MoneyParseError(s.to_string());
        let t = s.trim();
        let (neg, t) = match t.strip_prefix('-') {
            Some(rest) => (true, rest),
            None => (false, t),
        };
        let (whole, frac) = t.split_once('.').unwrap_or((t, ""));
        if whole.is_empty() || frac.len() > 2 || !whole.bytes().chain(frac.bytes()).all(|b| b.is_ascii_digit()) {
            return Err(err());
        }
        let units: i64 = whole.parse().map_err(|_| err())?;
        let cents: i64 = format!("{frac:0<2}").parse().map_err(|_| err())?;
        let v = units.checked_mul(100).and_then(|u| u.checked_add(cents)).ok_or_else(err)?;
        Ok(Self(if neg { -v } else { v }))
    }
}

impl From<Money> for String {
    fn from(m: Money) -> String {
        m.to_string()
    }
}

impl TryFrom<String> for Money {
    type Error = MoneyParseError;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

pub fn cost(absence_days: u32, daily_salary: Money) -> Money {
    Money(i64::from(absence_days) * daily_salary.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostReport {
    pub total_injuries: usize,
    pub detected_injuries: usize,
    pub total_absence_days: u32,
    pub daily_salary: Money,
    pub total_cost: Money,
    pub preventable_days: u32,
    pub savings: Money,
    /// `savings / total_cost`, 0 when nothing was lost.
    pub percent_decrease: f64,
    pub assumption: String,
}

/// Detected injuries count as fully prevented.
pub fn savings(outcomes: &[WeeklyOutcome], injuries: &[InjuryRecord], daily_salary: Money) -> CostReport {
    let detected: std::collections::HashSet<(&str, NaiveDate)> = outcomes
        .iter()
        .flat_map(|o| &o.detected)
        .map(|i| (i.player_id.as_str(), i.onset_date))
        .collect();
    let total_absence_days: u32 = injuries.iter().map(|i| i.days_absent).sum();
    let hit: Vec<&InjuryRecord> = injuries
        .iter()
        .filter(|i| detected.contains(&(i.player_id.as_str(), i.onset_date)))
        .collect();
    let preventable_days: u32 = hit.iter().map(|i| i.days_absent).sum();
    let total_cost = cost(total_absence_days, daily_salary);
    let saved = cost(preventable_days, daily_salary);
    CostReport {
        total_injuries: injuries.len(),
        detected_injuries: hit.len(),
        total_absence_days,
        daily_salary,
        total_cost,
        preventable_days,
        savings: saved,
        percent_decrease: if total_cost.0 == 0 {
            0.0
        } else {
            saved.0 as f64 / total_cost.0 as f64
        },
        assumption: "a detected injury is assumed fully prevented".into(),
    }
}

/// One row per week: cumulative F1 of every forecaster plus the tree's detections.
pub fn weekly_csv(outcomes: &[WeeklyOutcome]) -> String {
    let mut out = String::from("week,predict_start,predict_end,degenerate,sessions,injuries,detected,missed,DT");
    if let Some(o) = outcomes.first() {
        for c in &o.comparators {
            out.push(',');
            out.push_str(&c.forecaster);
        }
    }
    out.push('\n');
    for o in outcomes {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{:.6}",
            o.week + 1,
            o.predict_start,
            o.predict_end,
            u8::from(o.degenerate),
            o.predictions.len(),
            o.detected.len() + o.missed.len(),
            o.detected.len(),
            o.missed.len(),
            o.cumulative_f1
        ));
        for c in &o.comparators {
            out.push_str(&format!(",{:.6}", c.cumulative_f1));
        }
        out.push('\n');
    }
    out
}
