//! Seeded synthetic seasons with planted injury mechanisms.
//!
//! Workloads follow a two-component lognormal mixture per feature, moment
//! matched to a target mean and standard deviation. Injuries are drawn session
//! by session from rules over the same online features the table builder
//! computes, so every planted injury's labeled session satisfies its rule.

use chrono::{Duration, NaiveDate};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{
    workload_index, InjuryRecord, PlayerProfile, Role, SeasonLog, TrainingSession, Workload,
    WORKLOAD_FEATURES,
};
use crate::derive_seed;
use crate::features::{feature_names, player_rows, FeatureSpec};

#[derive(Debug, Error, PartialEq)]
pub enum GeneratorError {
    #[error("invalid generator config: {0}")]
    ConfigInvalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureDistribution {
    pub name: String,
    pub mean: f64,
    pub sd: f64,
    /// Weight of the low mode.
    pub low_weight: f64,
}

/// Per-feature calibration targets (club season averages).
pub const WORKLOAD_TARGETS: [(&str, f64, f64); 12] = [
    ("d_TOT", 3882.94, 1633.21),
    ("d_HSR", 133.22, 66.41),
    ("d_MET", 1151.99, 694.25),
    ("d_HML", 543.89, 339.64),
    ("d_HML/m", 8.70, 6.09),
    ("d_EXP", 410.67, 221.29),
    ("Acc_2", 64.26, 31.72),
    ("Acc_3", 16.16, 10.97),
    ("Dec_2", 62.44, 33.09),
    ("Dec_3", 19.14, 12.78),
    ("DSL", 117.98, 78.52),
    ("FI", 0.63, 0.31),
];

/// Runs of consecutive sessions where one feature is scaled up.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Overload {
    pub feature: String,
    /// Chance that a normal session starts an episode.
    pub rate: f64,
    pub factor: f64,
    pub length: usize,
}

/// `lo < value <= hi`; a missing end is unbounded.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Condition {
    pub feature: String,
    pub lo: Option<f64>,
    pub hi: Option<f64>,
}

impl Condition {
    pub fn holds(&self, v: f64) -> bool {
        self.lo.is_none_or(|lo| v > lo) && self.hi.is_none_or(|hi| v <= hi)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedRule {
    pub name: String,
    pub conditions: Vec<Condition>,
    pub probability: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GeneratorConfig {
    pub n_players: usize,
    pub weeks: usize,
    /// Training days per week, taken from Monday onward (at most 6).
    pub sessions_per_week: usize,
    pub attendance: f64,
    /// Correlation of the log-workloads within a session mode.
    pub correlation: f64,
    /// All features of a session share the light/intense mode draw.
    pub shared_mode: bool,
    pub game_probability: f64,
    pub start_date: NaiveDate,
    pub workload: Vec<FeatureDistribution>,
    pub overload: Option<Overload>,
    pub rules: Vec<PlantedRule>,
    pub base_rate: f64,
    /// Chance per session of a non-injury layoff (illness, travel, rest).
    pub layoff_rate: f64,
    /// Log-sd of the `d_TOT` multiplier on the first sessions back from any absence.
    pub return_jitter: f64,
    pub return_sessions: usize,
    /// Chance that an absence is short (1 to 5 days) rather than 6 to 20.
    pub short_absence: f64,
    pub seed: u64,
}

fn cond(feature: &str, lo: Option<f64>, hi: Option<f64>) -> Condition {
    Condition {
        feature: feature.into(),
        lo,
        hi,
    }
}

/// Previously injured players back in full training, under varied
/// (low-monotony) total load.
fn relapse_rule() -> PlantedRule {
    PlantedRule {
        name: "relapse".into(),
        conditions: vec![
            cond("PI_EWMA", Some(0.8), None),
            cond("d_TOT_MSWR", None, Some(1.15)),
        ],
        probability: 0.9,
    }
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self {
            n_players: 26,
            weeks: 23,
            sessions_per_week: 6,
            attendance: 0.92,
            correlation: 0.7,
            shared_mode: true,
            game_probability: 0.7,
            start_date: NaiveDate::from_ymd_opt(2013, 8, 5).expect("valid date"),
            workload: WORKLOAD_TARGETS
                .iter()
                .map(|&(name, mean, sd)| FeatureDistribution {
                    name: name.into(),
                    mean,
                    sd,
                    low_weight: 0.65,
                })
                .collect(),
            overload: Some(Overload {
                feature: "d_HSR".into(),
                rate: 0.016,
                factor: 2.5,
                length: 3,
            }),
            rules: vec![
                PlantedRule {
                    name: "overload".into(),
                    conditions: vec![cond("d_HSR_EWMA", Some(230.0), None)],
                    probability: 0.9,
                },
                relapse_rule(),
            ],
            base_rate: 0.0002,
            layoff_rate: 0.01,
            return_jitter: 0.7,
            return_sessions: 6,
            short_absence: 0.65,
            seed: 0,
        }
    }
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<(), GeneratorError> {
        let bad = |m: String| Err(GeneratorError::ConfigInvalid(m));
        let prob = |p: f64| (0.0..=1.0).contains(&p);
        if self.n_players == 0 || self.weeks == 0 {
            return bad("n_players and weeks must be positive".into());
        }
        if !(1..=6).contains(&self.sessions_per_week) {
            return bad("sessions_per_week must be in 1..=6".into());
        }
        for (name, p) in [
            ("attendance", self.attendance),
            ("game_probability", self.game_probability),
            ("base_rate", self.base_rate),
            ("short_absence", self.short_absence),
            ("layoff_rate", self.layoff_rate),
        ] {
            if !prob(p) {
                return bad(format!("{name} must be a probability"));
            }
        }
        if !(0.0..1.0).contains(&self.correlation) {
            return bad("correlation must lie in [0, 1)".into());
        }
        if !(self.return_jitter >= 0.0) {
            return bad("return_jitter must be non-negative".into());
        }
        if self.workload.len() != 12 {
            return bad("need one distribution per workload feature".into());
        }
        for d in &self.workload {
            if workload_index(&d.name).is_none() {
                return bad(format!("unknown workload feature `{}`", d.name));
            }
            if !(d.mean > 0.0 && d.sd > 0.0) || !(d.low_weight > 0.0 && d.low_weight < 1.0) {
                return bad(format!("bad distribution for `{}`", d.name));
            }
        }
        if let Some(o) = &self.overload {
            if workload_index(&o.feature).is_none() || !prob(o.rate) || !(o.factor >= 1.0) || o.length == 0 {
                return bad("bad overload settings".into());
            }
        }
        let names = feature_names();
        for r in &self.rules {
            if !prob(r.probability) {
                return bad(format!("rule `{}` probability out of range", r.name));
            }
            for c in &r.conditions {
                if !names.contains(&c.feature) {
                    return bad(format!("rule `{}` uses unknown feature `{}`", r.name, c.feature));
                }
            }
        }
        Ok(())
    }
}

/// Which mechanism produced an injury, with the row values it saw.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LedgerEntry {
    pub player_id: String,
    pub session_date: NaiveDate,
    pub onset_date: NaiveDate,
    pub days_absent: u32,
    /// Planted rule name, or `base` for background noise.
    pub cause: String,
    pub evidence: Vec<(String, f64)>,
}

/// Two lognormal components with the target overall mean and sd: half the
/// variance sits between the modes, half within them.
struct Mixture {
    weight: f64,
    /// `(mu, sigma)` of the log of each mode.
    low: (f64, f64),
    high: (f64, f64),
}

fn lognormal(mean: f64, sd: f64) -> (f64, f64) {
    let s2 = (1.0 + (sd / mean).powi(2)).ln();
    (mean.ln() - s2 / 2.0, s2.sqrt())
}

impl Mixture {
    fn new(mean: f64, sd: f64, weight: f64) -> Self {
        let mut gap = sd * ((1.0 - weight) / (2.0 * weight)).sqrt();
        // keep the low mode positive
        gap = gap.min(0.8 * mean);
        let between = weight * gap * gap / (1.0 - weight);
        let within = (sd * sd - between).max(1e-12 * mean * mean).sqrt();
        let lo = mean - gap;
        let hi = mean + gap * weight / (1.0 - weight);
        Self {
            weight,
            low: lognormal(lo, within),
            high: lognormal(hi, within),
        }
    }

    /// Value for mode draw `u ~ U[0,1)` and standard normal `z`.
    fn value(&self, u: f64, z: f64) -> f64 {
        let (mu, sigma) = if u < self.weight { self.low } else { self.high };
        (mu + sigma * z).exp()
    }
}

/// Base moments that, mixed with a share `q` of sessions scaled by `f`,
/// give back the target moments.
fn deflate(mean: f64, sd: f64, q: f64, f: f64) -> (f64, f64) {
    let m = mean / (1.0 + q * (f - 1.0));
    let second = (sd * sd + mean * mean) / (1.0 + q * (f * f - 1.0));
    (m, (second - m * m).max(0.01 * m * m).sqrt())
}

fn profile(id: String, rng: &mut ChaCha8Rng) -> PlayerProfile {
    let height = Normal::new(181.0_f64, 6.0).unwrap().sample(rng).clamp(165.0, 198.0);
    let bmi = Normal::new(23.3_f64, 1.2).unwrap().sample(rng).clamp(19.5, 27.5);
    let mass = bmi * (height / 100.0) * (height / 100.0);
    let role = Role::from_code(rng.random_range(0..5)).expect("valid role code");
    PlayerProfile::new(id, rng.random_range(18..=34), height, mass, role).expect("valid profile")
}

pub fn generate(cfg: &GeneratorConfig) -> Result<(SeasonLog, Vec<LedgerEntry>), GeneratorError> {
    cfg.validate()?;
    let spec = FeatureSpec::default();
    let names = feature_names();
    let overload = cfg
        .overload
        .as_ref()
        .map(|o| (workload_index(&o.feature).expect("validated"), o));
    let mixtures: Vec<Mixture> = WORKLOAD_FEATURES
        .iter()
        .map(|f| {
            let d = cfg.workload.iter().find(|d| d.name == *f).expect("validated");
            let (mean, sd) = match overload {
                Some((k, o)) if WORKLOAD_FEATURES[k] == *f => {
                    let q = (o.rate * o.length as f64).min(0.5);
                    deflate(d.mean, d.sd, q, o.factor)
                }
                _ => (d.mean, d.sd),
            };
            Mixture::new(mean, sd, d.low_weight)
        })
        .collect();
    let rules: Vec<Vec<(usize, &Condition)>> = cfg
        .rules
        .iter()
        .map(|r| {
            r.conditions
                .iter()
                .map(|c| (names.iter().position(|n| *n == c.feature).expect("validated"), c))
                .collect()
        })
        .collect();

    let width = cfg.n_players.to_string().len().max(2);
    let mut players = Vec::new();
    let mut sessions = Vec::new();
    let mut injuries = Vec::new();
    let mut ledger = Vec::new();
    for p in 0..cfg.n_players {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, p as u64));
        let id = format!("P{:0width$}", p + 1);
        let prof = profile(id.clone(), &mut rng);
        let mut own: Vec<TrainingSession> = Vec::new();
        let mut onsets: Vec<NaiveDate> = Vec::new();
        let mut back_on: Option<NaiveDate> = None;
        let mut episode_left = 0usize;
        let mut since_return = usize::MAX;
        let mut games = 0u32;
        let mut play_time = 0.0;
        for day in 0..cfg.weeks * 7 {
            let date = cfg.start_date + Duration::days(day as i64);
            let weekday = day % 7;
            if back_on.is_some_and(|b| date < b) {
                continue;
            }
            if weekday == 6 {
                if rng.random::<f64>() < cfg.game_probability {
                    games += 1;
                    play_time = f64::from(rng.random_range(1..=90u32));
                } else {
                    play_time = 0.0;
                }
                continue;
            }
            if weekday >= cfg.sessions_per_week || rng.random::<f64>() >= cfg.attendance {
                continue;
            }
            // one session type and one intensity shock shared by all features
            let u: f64 = rng.random();
            let z0: f64 = rng.sample(StandardNormal);
            let rho = cfg.correlation;
            let mut w = [0.0; 12];
            for (k, m) in mixtures.iter().enumerate() {
                let e: f64 = rng.sample(StandardNormal);
                let u = if cfg.shared_mode { u } else { rng.random() };
                w[k] = m.value(u, rho * z0 + (1.0 - rho * rho).sqrt() * e);
            }
            if let Some((k, o)) = overload {
                if episode_left == 0 && rng.random::<f64>() < o.rate {
                    episode_left = o.length;
                }
                if episode_left > 0 {
                    w[k] *= o.factor;
                    episode_left -= 1;
                }
            }
            let tot = workload_index("d_TOT").expect("known");
            if since_return < cfg.return_sessions {
                let z: f64 = rng.sample(StandardNormal);
                let s = cfg.return_jitter;
                w[tot] *= (s * z - s * s / 2.0).exp();
            }
            since_return = since_return.saturating_add(1);
            let hsr = workload_index("d_HSR").expect("known");
            w[hsr] = w[hsr].min(w[tot]);
            for (hi, lo) in [("Acc_2", "Acc_3"), ("Dec_2", "Dec_3")] {
                let (hi, lo) = (workload_index(hi).unwrap(), workload_index(lo).unwrap());
                w[lo] = w[lo].min(w[hi]);
            }
            own.push(TrainingSession {
                player_id: id.clone(),
                date,
                workload: Workload(w),
                play_time,
                games,
            });

            let refs: Vec<&TrainingSession> = own.iter().collect();
            let row = player_rows(&prof, &refs, &onsets, &spec)
                .pop()
                .flatten()
                .expect("current session is inside its own chronic window");
            let mut cause = None;
            for (r, conds) in cfg.rules.iter().zip(&rules) {
                if conds.iter().all(|(j, c)| c.holds(row[*j])) {
                    if rng.random::<f64>() < r.probability {
                        let evidence = conds.iter().map(|(j, c)| (c.feature.clone(), row[*j])).collect();
                        cause = Some((r.name.clone(), evidence));
                    }
                    break;
                }
            }
            if cause.is_none() && rng.random::<f64>() < cfg.base_rate {
                cause = Some(("base".to_string(), Vec::new()));
            }
            let absence = |rng: &mut ChaCha8Rng| -> u32 {
                if rng.random::<f64>() < cfg.short_absence {
                    rng.random_range(1..=5)
                } else {
                    rng.random_range(6..=20)
                }
            };
            if let Some((cause, evidence)) = cause {
                let onset = date + Duration::days(1);
                let days_absent = absence(&mut rng);
                onsets.push(onset);
                back_on = Some(onset + Duration::days(i64::from(days_absent) + 1));
                episode_left = 0;
                since_return = 0;
                injuries.push(InjuryRecord {
                    player_id: id.clone(),
                    onset_date: onset,
                    days_absent,
                });
                ledger.push(LedgerEntry {
                    player_id: id.clone(),
                    session_date: date,
                    onset_date: onset,
                    days_absent,
                    cause,
                    evidence,
                });
            } else if rng.random::<f64>() < cfg.layoff_rate {
                let days = absence(&mut rng);
                back_on = Some(date + Duration::days(i64::from(days) + 1));
                episode_left = 0;
                since_return = 0;
            }
        }
        players.push(prof);
        sessions.extend(own);
    }
    ledger.sort_by(|a, b| (a.onset_date, &a.player_id).cmp(&(b.onset_date, &b.player_id)));
    let log = SeasonLog::new(players, sessions, injuries)
        .map_err(|e| GeneratorError::ConfigInvalid(e.to_string()))?;
    Ok((log, ledger))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mixture_moments() {
        let m = Mixture::new(3882.94, 1633.21, 0.65);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let xs: Vec<f64> = (0..200_000)
            .map(|_| m.value(rng.random(), rng.sample(StandardNormal)))
            .collect();
        let mean = xs.iter().sum::<f64>() / xs.len() as f64;
        let sd = (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / xs.len() as f64).sqrt();
        assert!((mean / 3882.94 - 1.0).abs() < 0.01);
        assert!((sd / 1633.21 - 1.0).abs() < 0.02);
    }

    #[test]
    fn no_injury_probability_no_injuries() {
        let cfg = GeneratorConfig {
            rules: Vec::new(),
            base_rate: 0.0,
            n_players: 4,
            weeks: 6,
            ..Default::default()
        };
        let (log, ledger) = generate(&cfg).unwrap();
        assert!(log.injuries().is_empty());
        assert!(ledger.is_empty());
        assert!(log.session_count() > 50);
    }

    #[test]
    fn rejects_bad_probability() {
        let cfg = GeneratorConfig {
            base_rate: 1.5,
            ..Default::default()
        };
        assert!(generate(&cfg).is_err());
    }

    #[test]
    fn ledger_matches_log() {
        let (log, ledger) = generate(&GeneratorConfig {
            n_players: 8,
            seed: 3,
            ..Default::default()
        })
        .unwrap();
        assert_eq!(ledger.len(), log.injuries().len());
        for e in &ledger {
            assert_eq!(e.onset_date, e.session_date + Duration::days(1));
        }
    }
}
