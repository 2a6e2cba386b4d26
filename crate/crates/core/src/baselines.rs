//! Reference forecasters: the four trivial baselines and the single-dimension
//! ACWR / MSWR forecasters built on injury likelihood per workload group.

use chrono::{Duration, NaiveDate};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::WORKLOAD_FEATURES;
use crate::features::{acwr_name, capped_ratio, ewma, mswr_name, PI_EWMA};
use crate::learners::Prediction;
use crate::table::TrainingTable;

#[derive(Debug, Error, PartialEq)]
pub enum BaselineError {
    #[error("missing column `{0}`")]
    MissingColumn(String),
    #[error("no sessions in the chronic window")]
    Missing,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BaselineKind {
    /// Random class drawn at the training prevalence.
    B1,
    /// Always non-injury.
    B2,
    /// Always injury.
    B3,
    /// Injury iff `PI_EWMA > 0`.
    B4,
}

impl BaselineKind {
    pub const ALL: [BaselineKind; 4] = [Self::B1, Self::B2, Self::B3, Self::B4];

    pub fn name(self) -> &'static str {
        match self {
            Self::B1 => "B1",
            Self::B2 => "B2",
            Self::B3 => "B3",
            Self::B4 => "B4",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Baseline {
    pub kind: BaselineKind,
    pub prevalence: f64,
}

impl Baseline {
    pub fn fit(kind: BaselineKind, train: &TrainingTable) -> Self {
        Self {
            kind,
            prevalence: train.prevalence(),
        }
    }

    pub fn predict(&self, table: &TrainingTable, seed: u64) -> Result<Vec<Prediction>, BaselineError> {
        let hard = |c: bool| Prediction {
            class: c,
            score: if c { 1.0 } else { 0.0 },
        };
        Ok(match self.kind {
            BaselineKind::B1 => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                (0..table.len())
                    .map(|_| hard(rng.random::<f64>() < self.prevalence))
                    .collect()
            }
            BaselineKind::B2 => vec![hard(false); table.len()],
            BaselineKind::B3 => vec![hard(true); table.len()],
            BaselineKind::B4 => table
                .column(PI_EWMA)
                .map_err(|_| BaselineError::MissingColumn(PI_EWMA.into()))?
                .into_iter()
                .map(|v| hard(v > 0.0))
                .collect(),
        })
    }
}

/// Baseline fitted and applied on the same table.
pub fn baseline_predict(
    kind: BaselineKind,
    table: &TrainingTable,
    seed: u64,
) -> Result<Vec<Prediction>, BaselineError> {
    Baseline::fit(kind, table).predict(table, seed)
}

/// ACWR variant where acute and chronic loads are the last EWMA value
/// (span 7 / 28) over the sessions of the previous 7 / 28 days.
pub fn acwr_method_value(
    history: &[(NaiveDate, f64)],
    as_of: NaiveDate,
    cap: f64,
) -> Result<f64, BaselineError> {
    let last = |days: i64| -> Option<f64> {
        let start = as_of - Duration::days(days - 1);
        let vals: Vec<f64> = history
            .iter()
            .filter(|(d, _)| *d >= start && *d <= as_of)
            .map(|(_, v)| *v)
            .collect();
        ewma(&vals, days as u32).ok().and_then(|e| e.last().copied())
    };
    let chronic = last(28).ok_or(BaselineError::Missing)?;
    let acute = last(7).unwrap_or(0.0);
    Ok(capped_ratio(acute, chronic, cap))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AcwrGroup {
    VeryLow,
    Low,
    Moderate,
    High,
    VeryHigh,
}

impl AcwrGroup {
    pub const ALL: [AcwrGroup; 5] = [
        Self::VeryLow,
        Self::Low,
        Self::Moderate,
        Self::High,
        Self::VeryHigh,
    ];

    /// Contiguous half-open bounds `[lo, hi)`.
    pub fn bounds(self) -> (f64, f64) {
        match self {
            Self::VeryLow => (0.0, 0.5),
            Self::Low => (0.5, 1.0),
            Self::Moderate => (1.0, 1.5),
            Self::High => (1.5, 2.0),
            Self::VeryHigh => (2.0, f64::INFINITY),
        }
    }

    pub fn of(acwr: f64) -> AcwrGroup {
        Self::ALL
            .into_iter()
            .find(|g| acwr < g.bounds().1)
            .unwrap_or(Self::VeryHigh)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Grouping {
    Murray,
    Quintile,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupLikelihood {
    pub group: String,
    pub lo: f64,
    pub hi: f64,
    pub injured: usize,
    pub uninjured: usize,
    /// `injured / uninjured`; `None` when nobody in the group stayed healthy.
    pub il: Option<f64>,
}

/// Empirical quantile with midpoint interpolation between order statistics.
pub fn quantile_midpoint(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
    if lo == hi {
        sorted[lo]
    } else {
        (sorted[lo] + sorted[hi]) / 2.0
    }
}

/// Group bounds `[lo, hi)`; the outer bounds are open-ended.
pub fn group_bounds(values: &[f64], grouping: Grouping) -> Vec<(String, f64, f64)> {
    match grouping {
        Grouping::Murray => AcwrGroup::ALL
            .into_iter()
            .map(|g| {
                let (lo, hi) = g.bounds();
                (format!("{g:?}"), lo, hi)
            })
            .collect(),
        Grouping::Quintile => {
            let mut sorted = values.to_vec();
            sorted.sort_by(f64::total_cmp);
            let mut edges = vec![f64::NEG_INFINITY];
            if sorted.is_empty() {
                edges.extend([0.0; 4]);
            } else {
                edges.extend([0.2, 0.4, 0.6, 0.8].map(|q| quantile_midpoint(&sorted, q)));
            }
            edges.push(f64::INFINITY);
            (0..5)
                .map(|i| (format!("Q{}", i + 1), edges[i], edges[i + 1]))
                .collect()
        }
    }
}

fn tally(values: &[f64], labels: &[bool], bounds: &[(String, f64, f64)]) -> Vec<GroupLikelihood> {
    bounds
        .iter()
        .map(|(name, lo, hi)| {
            let mut g = GroupLikelihood {
                group: name.clone(),
                lo: *lo,
                hi: *hi,
                injured: 0,
                uninjured: 0,
                il: None,
            };
            for (&v, &y) in values.iter().zip(labels) {
                if v >= *lo && v < *hi {
                    if y {
                        g.injured += 1;
                    } else {
                        g.uninjured += 1;
                    }
                }
            }
            g.il = (g.uninjured > 0).then(|| g.injured as f64 / g.uninjured as f64);
            g
        })
        .collect()
}

pub fn group_likelihood(
    table: &TrainingTable,
    feature: &str,
    grouping: Grouping,
) -> Result<Vec<GroupLikelihood>, BaselineError> {
    let values = table
        .column(feature)
        .map_err(|_| BaselineError::MissingColumn(feature.into()))?;
    let bounds = group_bounds(&values, grouping);
    Ok(tally(&values, &table.labels(), &bounds))
}

/// Group with the highest IL; a group with injuries and no healthy sessions
/// counts as highest. Ties go to the lower group.
fn riskiest(groups: &[GroupLikelihood]) -> usize {
    let key = |g: &GroupLikelihood| match g.il {
        Some(v) => v,
        None if g.injured > 0 => f64::INFINITY,
        None => -1.0,
    };
    let mut best = 0;
    for (i, g) in groups.iter().enumerate() {
        if key(g) > key(&groups[best]) {
            best = i;
        }
    }
    best
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MonoMethod {
    /// Fires when ACWR < 1.
    AcwrMurray,
    /// Fires in the ACWR quintile with the highest training IL.
    AcwrQuintile,
    /// Fires in the MSWR quintile with the highest training IL.
    MswrQuintile,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Combine {
    Single(String),
    /// At least 7 of the 12 single forecasters fire.
    Vote,
    All,
    One,
}

pub fn mono_name(method: MonoMethod, combine: &Combine) -> String {
    let dim = match method {
        MonoMethod::AcwrMurray => "ACWR",
        MonoMethod::AcwrQuintile => "ACWRq",
        MonoMethod::MswrQuintile => "MSWR",
    };
    match combine {
        Combine::Single(f) => format!("C_{f}^{dim}"),
        Combine::Vote => format!("C_vote^{dim}"),
        Combine::All => format!("C_all^{dim}"),
        Combine::One => format!("C_one^{dim}"),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct FiringRule {
    column: String,
    lo: f64,
    hi: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonoForecaster {
    pub method: MonoMethod,
    pub combine: Combine,
    rules: Vec<FiringRule>,
}

impl MonoForecaster {
    /// Freezes the firing region of each workload feature on `train`.
    pub fn fit(
        train: &TrainingTable,
        method: MonoMethod,
        combine: Combine,
    ) -> Result<Self, BaselineError> {
        let features: Vec<&str> = match &combine {
            Combine::Single(f) => vec![f.as_str()],
            _ => WORKLOAD_FEATURES.to_vec(),
        };
        let labels = train.labels();
        let mut rules = Vec::with_capacity(features.len());
        for f in features {
            let column = match method {
                MonoMethod::AcwrMurray | MonoMethod::AcwrQuintile => acwr_name(f),
                MonoMethod::MswrQuintile => mswr_name(f),
            };
            let (lo, hi) = if method == MonoMethod::AcwrMurray {
                if train.index_of(&column).is_none() {
                    return Err(BaselineError::MissingColumn(column));
                }
                (f64::NEG_INFINITY, 1.0)
            } else {
                let values = train
                    .column(&column)
                    .map_err(|_| BaselineError::MissingColumn(column.clone()))?;
                let groups = tally(&values, &labels, &group_bounds(&values, Grouping::Quintile));
                let g = &groups[riskiest(&groups)];
                (g.lo, g.hi)
            };
            rules.push(FiringRule { column, lo, hi });
        }
        Ok(Self {
            method,
            combine,
            rules,
        })
    }

    pub fn name(&self) -> String {
        mono_name(self.method, &self.combine)
    }

    pub fn predict(&self, table: &TrainingTable) -> Result<Vec<Prediction>, BaselineError> {
        let cols: Vec<Vec<f64>> = self
            .rules
            .iter()
            .map(|r| {
                table
                    .column(&r.column)
                    .map_err(|_| BaselineError::MissingColumn(r.column.clone()))
            })
            .collect::<Result<_, _>>()?;
        let k = self.rules.len();
        Ok((0..table.len())
            .map(|i| {
                let fired = self
                    .rules
                    .iter()
                    .zip(&cols)
                    .filter(|(r, c)| c[i] >= r.lo && c[i] < r.hi)
                    .count();
                let class = match self.combine {
                    Combine::Single(_) | Combine::One => fired >= 1,
                    Combine::Vote => 2 * fired > k,
                    Combine::All => fired == k,
                };
                Prediction {
                    class,
                    score: fired as f64 / k as f64,
                }
            })
            .collect())
    }
}

/// Fits on `table` and predicts it.
pub fn mono_forecast(
    table: &TrainingTable,
    method: MonoMethod,
    combine: Combine,
) -> Result<Vec<Prediction>, BaselineError> {
    MonoForecaster::fit(table, method, combine)?.predict(table)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::feature_names;
    use crate::table::TrainingExample;

    fn d(n: i64) -> NaiveDate {
        NaiveDate::from_ymd_opt(2014, 1, 1).unwrap() + Duration::days(n)
    }

    fn random_table(seed: u64, n: usize) -> TrainingTable {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let names = feature_names();
        let examples = (0..n)
            .map(|i| TrainingExample {
                player_id: "p".into(),
                date: d(i as i64),
                features: (0..names.len()).map(|_| rng.random_range(0.0..2.5)).collect(),
                label: rng.random::<f64>() < 0.2,
                synthetic: false,
                partner: None,
            })
            .collect();
        TrainingTable::new(names, examples).unwrap()
    }

    #[test]
    fn degenerate_baselines() {
        let t = random_table(1, 50);
        assert!(baseline_predict(BaselineKind::B2, &t, 0)
            .unwrap()
            .iter()
            .all(|p| !p.class));
        assert!(baseline_predict(BaselineKind::B3, &t, 0)
            .unwrap()
            .iter()
            .all(|p| p.class));
        let no_pi = t.select(&["d_TOT".to_string()]).unwrap();
        assert_eq!(
            baseline_predict(BaselineKind::B4, &no_pi, 0).unwrap_err(),
            BaselineError::MissingColumn(PI_EWMA.into())
        );
    }

    #[test]
    fn murray_groups_are_total() {
        assert_eq!(AcwrGroup::of(0.0), AcwrGroup::VeryLow);
        assert_eq!(AcwrGroup::of(0.495), AcwrGroup::VeryLow);
        assert_eq!(AcwrGroup::of(0.5), AcwrGroup::Low);
        assert_eq!(AcwrGroup::of(0.995), AcwrGroup::Low);
        assert_eq!(AcwrGroup::of(1.0), AcwrGroup::Moderate);
        assert_eq!(AcwrGroup::of(2.0), AcwrGroup::VeryHigh);
        assert_eq!(AcwrGroup::of(50.0), AcwrGroup::VeryHigh);
    }

    #[test]
    fn single_group_likelihood() {
        let rows: Vec<_> = (0..10).map(|i| (vec![1.2], i == 0)).collect();
        let t = TrainingTable::from_rows(&["x"], &rows).unwrap();
        let g = group_likelihood(&t, "x", Grouping::Murray).unwrap();
        assert_eq!(g[2].injured, 1);
        assert_eq!(g[2].uninjured, 9);
        assert_eq!(g[2].il, Some(1.0 / 9.0));
        assert_eq!(g[0].il, None);
    }

    #[test]
    fn quintile_edges_midpoint() {
        let sorted: Vec<f64> = (1..=10).map(f64::from).collect();
        // position 0.2 * 9 = 1.8 -> between 2 and 3
        assert_eq!(quantile_midpoint(&sorted, 0.2), 2.5);
        assert_eq!(quantile_midpoint(&sorted, 1.0), 10.0);
    }

    #[test]
    fn combine_modes_nest() {
        for seed in 0..20 {
            let t = random_table(seed, 80);
            for method in [MonoMethod::AcwrMurray, MonoMethod::MswrQuintile] {
                let all = mono_forecast(&t, method, Combine::All).unwrap();
                let vote = mono_forecast(&t, method, Combine::Vote).unwrap();
                let one = mono_forecast(&t, method, Combine::One).unwrap();
                for i in 0..t.len() {
                    assert!(!all[i].class || vote[i].class);
                    assert!(!vote[i].class || one[i].class);
                }
            }
        }
    }

    #[test]
    fn one_is_or_of_singles() {
        let t = random_table(3, 60);
        let one = mono_forecast(&t, MonoMethod::AcwrMurray, Combine::One).unwrap();
        let singles: Vec<Vec<Prediction>> = WORKLOAD_FEATURES
            .iter()
            .map(|f| mono_forecast(&t, MonoMethod::AcwrMurray, Combine::Single(f.to_string())).unwrap())
            .collect();
        for i in 0..t.len() {
            assert_eq!(one[i].class, singles.iter().any(|s| s[i].class));
        }
    }

    #[test]
    fn acwr_method_cases() {
        let flat: Vec<_> = (0..30).map(|i| (d(i), 100.0)).collect();
        assert!((acwr_method_value(&flat, d(29), 5.0).unwrap() - 1.0).abs() < 1e-12);
        let zeros: Vec<_> = (0..30).map(|i| (d(i), if i == 29 { 50.0 } else { 0.0 })).collect();
        // chronic EWMA is 50 * 2/29, acute 50 * 2/8: ratio 3.625 under the cap
        let v = acwr_method_value(&zeros, d(29), 5.0).unwrap();
        assert!((v - 3.625).abs() < 1e-9);
        assert_eq!(acwr_method_value(&flat, d(100), 5.0), Err(BaselineError::Missing));
        // ramp: the rolling-mean definition gives a different value
        let ramp: Vec<_> = (0..28).map(|i| (d(i), 10.0 * i as f64)).collect();
        let ewm = acwr_method_value(&ramp, d(27), 5.0).unwrap();
        let spec = crate::features::FeatureSpec::default();
        let roll = crate::features::acwr(&ramp, d(27), &spec).unwrap();
        assert!((ewm - roll).abs() > 1e-3);
    }
}
