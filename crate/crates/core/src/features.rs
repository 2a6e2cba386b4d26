//! Feature engineering: daily, EWMA, ACWR and monotony (MSWR) workload
//! features plus the exponentially smoothed previous-injury count.

use chrono::{Duration, NaiveDate};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{InjuryRecord, Labeling, PlayerProfile, TrainingSession, WORKLOAD_FEATURES};
use crate::table::{TrainingExample, TrainingTable};

pub const PERSONAL_FEATURES: [&str; 6] = ["age", "bmi", "role", "PI", "play_time", "games"];
pub const PI_EWMA: &str = "PI_EWMA";
pub const N_FEATURES: usize = 55;

#[derive(Debug, Error, PartialEq)]
pub enum FeatureError {
    #[error("EWMA of an empty series")]
    EmptySeries,
    #[error("span must be at least 1")]
    ZeroSpan,
    #[error("invalid feature spec: {0}")]
    InvalidSpec(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FeatureSpec {
    /// EWMA span in sessions.
    pub ewma_span: u32,
    pub acwr_acute_days: u32,
    pub acwr_chronic_days: u32,
    pub mswr_window_days: u32,
    pub acwr_cap: f64,
    pub mswr_cap: f64,
}

impl Default for FeatureSpec {
    fn default() -> Self {
        Self {
            ewma_span: 6,
            acwr_acute_days: 6,
            acwr_chronic_days: 27,
            mswr_window_days: 7,
            acwr_cap: 5.0,
            mswr_cap: 10.0,
        }
    }
}

impl FeatureSpec {
    pub fn validate(&self) -> Result<(), FeatureError> {
        let bad = |m: &str| Err(FeatureError::InvalidSpec(m.to_string()));
        if self.ewma_span == 0 {
            return bad("ewma_span must be >= 1");
        }
        if self.acwr_acute_days == 0 || self.mswr_window_days == 0 {
            return bad("windows must be >= 1 day");
        }
        if self.acwr_acute_days >= self.acwr_chronic_days {
            return bad("acute window must be shorter than chronic window");
        }
        if !(self.acwr_cap > 0.0 && self.mswr_cap > 0.0) {
            return bad("caps must be positive");
        }
        Ok(())
    }
}

pub fn ewma_name(feature: &str) -> String {
    format!("{feature}_EWMA")
}

pub fn acwr_name(feature: &str) -> String {
    format!("{feature}_ACWR")
}

pub fn mswr_name(feature: &str) -> String {
    format!("{feature}_MSWR")
}

/// The 55 column names in table order.
pub fn feature_names() -> Vec<String> {
    let mut names: Vec<String> = WORKLOAD_FEATURES.iter().map(|s| s.to_string()).collect();
    names.extend(PERSONAL_FEATURES.iter().map(|s| s.to_string()));
    names.extend(WORKLOAD_FEATURES.iter().map(|f| ewma_name(f)));
    names.extend(WORKLOAD_FEATURES.iter().map(|f| acwr_name(f)));
    names.extend(WORKLOAD_FEATURES.iter().map(|f| mswr_name(f)));
    names.push(PI_EWMA.to_string());
    names
}

pub fn decay(span: u32) -> f64 {
    2.0 / (f64::from(span) + 1.0)
}

/// Recursive EWMA seeded with the first value: `y[t] = a*x[t] + (1-a)*y[t-1]`.
pub fn ewma(series: &[f64], span: u32) -> Result<Vec<f64>, FeatureError> {
    if span == 0 {
        return Err(FeatureError::ZeroSpan);
    }
    let (&first, rest) = series.split_first().ok_or(FeatureError::EmptySeries)?;
    let alpha = decay(span);
    let mut out = Vec::with_capacity(series.len());
    out.push(first);
    let mut prev = first;
    for &x in rest {
        prev = alpha * x + (1.0 - alpha) * prev;
        out.push(prev);
    }
    Ok(out)
}

/// Values of `history` dated within `[as_of - window_days + 1, as_of]`.
fn window<'a>(
    history: &'a [(NaiveDate, f64)],
    window_days: u32,
    as_of: NaiveDate,
) -> impl Iterator<Item = f64> + 'a {
    let start = as_of - Duration::days(i64::from(window_days) - 1);
    history
        .iter()
        .filter(move |(d, _)| *d >= start && *d <= as_of)
        .map(|(_, v)| *v)
}

/// Arithmetic mean over the calendar window ending at `as_of`; `None` when empty.
pub fn rolling_mean(
    history: &[(NaiveDate, f64)],
    window_days: u32,
    as_of: NaiveDate,
) -> Option<f64> {
    let (sum, n) = window(history, window_days, as_of).fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

/// Acute:chronic ratio of two window means with the capping rules applied.
pub fn capped_ratio(acute: f64, chronic: f64, cap: f64) -> f64 {
    if chronic == 0.0 {
        if acute == 0.0 {
            0.0
        } else {
            cap
        }
    } else {
        (acute / chronic).min(cap)
    }
}

/// Acute:chronic workload ratio from rolling means; `None` when the chronic window is empty.
pub fn acwr(history: &[(NaiveDate, f64)], as_of: NaiveDate, spec: &FeatureSpec) -> Option<f64> {
    let chronic = rolling_mean(history, spec.acwr_chronic_days, as_of)?;
    let acute = rolling_mean(history, spec.acwr_acute_days, as_of).unwrap_or(0.0);
    Some(capped_ratio(acute, chronic, spec.acwr_cap))
}

/// Training monotony: mean / sample standard deviation over the last week.
pub fn mswr(history: &[(NaiveDate, f64)], as_of: NaiveDate, spec: &FeatureSpec) -> Option<f64> {
    let vals: Vec<f64> = window(history, spec.mswr_window_days, as_of).collect();
    if vals.is_empty() {
        return None;
    }
    if vals.len() < 2 {
        return Some(spec.mswr_cap);
    }
    let n = vals.len() as f64;
    let mean = vals.iter().sum::<f64>() / n;
    let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let sd = var.sqrt();
    if sd < 1e-9 {
        return Some(spec.mswr_cap);
    }
    Some((mean / sd).clamp(0.0, spec.mswr_cap))
}

/// EWMA of the cumulative previous-injury count over a player's training days.
pub fn pi_ewma(injury_counts: &[f64], span: u32) -> Result<Vec<f64>, FeatureError> {
    ewma(injury_counts, span)
}

/// Counters reported alongside a built table.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BuildSummary {
    pub rows: usize,
    pub positives: usize,
    pub dropped_empty_chronic: usize,
    pub orphan_injuries: usize,
    pub excluded_sessions: usize,
}

/// Feature rows for one player's chronological sessions. `prior_onsets` are the
/// player's injury onset dates; PI counts onsets strictly before each session.
/// Rows whose chronic window is empty come back as `None`.
pub fn player_rows(
    profile: &PlayerProfile,
    sessions: &[&TrainingSession],
    prior_onsets: &[NaiveDate],
    spec: &FeatureSpec,
) -> Vec<Option<Vec<f64>>> {
    if sessions.is_empty() {
        return Vec::new();
    }
    let span = spec.ewma_span;
    let pi: Vec<f64> = sessions
        .iter()
        .map(|s| prior_onsets.iter().filter(|d| **d < s.date).count() as f64)
        .collect();
    let pi_smooth = pi_ewma(&pi, span).expect("non-empty series");
    let mut ewmas = Vec::with_capacity(12);
    let mut histories = Vec::with_capacity(12);
    for k in 0..12 {
        let series: Vec<f64> = sessions.iter().map(|s| s.workload.0[k]).collect();
        ewmas.push(ewma(&series, span).expect("non-empty series"));
        histories.push(
            sessions
                .iter()
                .map(|s| (s.date, s.workload.0[k]))
                .collect::<Vec<_>>(),
        );
    }
    sessions
        .iter()
        .enumerate()
        .map(|(t, s)| {
            let mut row = Vec::with_capacity(N_FEATURES);
            row.extend_from_slice(&s.workload.0);
            row.extend_from_slice(&[
                f64::from(profile.age),
                profile.bmi(),
                f64::from(profile.role.code()),
                pi[t],
                s.play_time,
                f64::from(s.games),
            ]);
            row.extend(ewmas.iter().map(|e| e[t]));
            // only history up to and including the current session
            let past = |k: usize| &histories[k][..=t];
            for k in 0..12 {
                row.push(acwr(past(k), s.date, spec)?);
            }
            for k in 0..12 {
                row.push(mswr(past(k), s.date, spec)?);
            }
            row.push(pi_smooth[t]);
            Some(row)
        })
        .collect()
}

/// Builds the 55-column training table from labeled sessions.
pub fn build_training_table(
    labeling: &Labeling,
    profiles: &[PlayerProfile],
    injuries: &[InjuryRecord],
    spec: &FeatureSpec,
) -> Result<(TrainingTable, BuildSummary), FeatureError> {
    spec.validate()?;
    let mut summary = BuildSummary {
        orphan_injuries: labeling.orphans.len(),
        excluded_sessions: labeling.excluded,
        ..BuildSummary::default()
    };
    let mut examples = Vec::with_capacity(labeling.sessions.len());
    for profile in profiles {
        let labeled: Vec<_> = labeling
            .sessions
            .iter()
            .filter(|l| l.session.player_id == profile.player_id)
            .collect();
        let sessions: Vec<&TrainingSession> = labeled.iter().map(|l| &l.session).collect();
        let onsets: Vec<NaiveDate> = injuries
            .iter()
            .filter(|i| i.player_id == profile.player_id)
            .map(|i| i.onset_date)
            .collect();
        for (l, row) in labeled.iter().zip(player_rows(profile, &sessions, &onsets, spec)) {
            match row {
                Some(features) => examples.push(TrainingExample {
                    player_id: l.session.player_id.clone(),
                    date: l.session.date,
                    features,
                    label: l.label,
                    synthetic: false,
                    partner: None,
                }),
                None => summary.dropped_empty_chronic += 1,
            }
        }
    }
    summary.rows = examples.len();
    summary.positives = examples.iter().filter(|e| e.label).count();
    let table = TrainingTable::new(feature_names(), examples)
        .map_err(|e| FeatureError::InvalidSpec(e.to_string()))?;
    Ok((table, summary))
}
