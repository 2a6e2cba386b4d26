//! Season data model: player profiles, per-session workload records, injury
//! records, CSV ingestion with validation, and injury-label assignment.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use chrono::{Duration, NaiveDate};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// The twelve GPS workload features, in canonical column order.
pub const WORKLOAD_FEATURES: [&str; 12] = [
    "d_TOT", "d_HSR", "d_MET", "d_HML", "d_HML/m", "d_EXP", "Acc_2", "Acc_3", "Dec_2", "Dec_3",
    "DSL", "FI",
];

/// CSV column names for the workload features (same order as [`WORKLOAD_FEATURES`]).
pub const WORKLOAD_CSV_COLUMNS: [&str; 12] = [
    "d_tot", "d_hsr", "d_met", "d_hml", "d_hml_m", "d_exp", "acc2", "acc3", "dec2", "dec3", "dsl",
    "fi",
];

pub const SESSIONS_HEADER: &str =
    "player_id,date,d_tot,d_hsr,d_met,d_hml,d_hml_m,d_exp,acc2,acc3,dec2,dec3,dsl,fi,play_time,games";
pub const INJURIES_HEADER: &str = "player_id,onset_date,days_absent";
pub const PLAYERS_HEADER: &str = "player_id,age,height_cm,mass_kg,role";

const DATE_FORMAT: &str = "%Y-%m-%d";

#[derive(Debug, Error)]
pub enum DataError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{file}: malformed row at line {line}, column `{column}`: {message}")]
    MalformedRow {
        file: String,
        line: usize,
        column: String,
        message: String,
    },
    #[error("{file}: line {line}: unknown player `{player_id}`")]
    UnknownPlayer {
        file: String,
        line: usize,
        player_id: String,
    },
    #[error("duplicate session for player `{player_id}` on {date}")]
    DuplicateSession { player_id: String, date: NaiveDate },
    #[error("{file}: line {line}: invalid workload: {message}")]
    NegativeWorkload {
        file: String,
        line: usize,
        message: String,
    },
    #[error("invalid player profile `{player_id}`: {message}")]
    InvalidProfile { player_id: String, message: String },
    #[error("invalid injury record for `{player_id}`: {message}")]
    InvalidInjury { player_id: String, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Role {
    CentralBack,
    Fullback,
    Midfielder,
    Winger,
    Forward,
}

impl Role {
    pub const ALL: [Role; 5] = [
        Role::CentralBack,
        Role::Fullback,
        Role::Midfielder,
        Role::Winger,
        Role::Forward,
    ];

    /// Ordinal code used as the learners' `role` feature.
    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn from_code(code: i64) -> Option<Role> {
        usize::try_from(code).ok().and_then(|c| Role::ALL.get(c).copied())
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Role::CentralBack => "CentralBack",
            Role::Fullback => "Fullback",
            Role::Midfielder => "Midfielder",
            Role::Winger => "Winger",
            Role::Forward => "Forward",
        };
        f.write_str(s)
    }
}

impl FromStr for Role {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm: String = s
            .chars()
            .filter(|c| c.is_ascii_alphanumeric())
            .collect::<String>()
            .to_ascii_lowercase();
        match norm.as_str() {
            "centralback" | "cb" => Ok(Role::CentralBack),
            "fullback" | "fb" => Ok(Role::Fullback),
            "midfielder" | "mf" => Ok(Role::Midfielder),
            "winger" | "w" => Ok(Role::Winger),
            "forward" | "fw" => Ok(Role::Forward),
            _ => Err(format!("unknown role `{s}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlayerProfile {
    pub player_id: String,
    pub age: u32,
    pub height_cm: f64,
    pub body_mass: f64,
    pub role: Role,
}

impl PlayerProfile {
    pub fn new(
        player_id: impl Into<String>,
        age: u32,
        height_cm: f64,
        body_mass: f64,
        role: Role,
    ) -> Result<Self, DataError> {
        let player_id = player_id.into();
        let bad = |message: &str| DataError::InvalidProfile {
            player_id: player_id.clone(),
            message: message.to_string(),
        };
        if age == 0 {
            return Err(bad("age must be positive"));
        }
        if !(height_cm.is_finite() && height_cm > 0.0) {
            return Err(bad("height must be positive"));
        }
        if !(body_mass.is_finite() && body_mass > 0.0) {
            return Err(bad("body mass must be positive"));
        }
        Ok(Self {
            player_id,
            age,
            height_cm,
            body_mass,
            role,
        })
    }

    /// Body mass index in kg/m², always derived from mass and height.
    pub fn bmi(&self) -> f64 {
        let h = self.height_cm / 100.0;
        self.body_mass / (h * h)
    }
}

/// The twelve workload values of one session, in [`WORKLOAD_FEATURES`] order.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Workload(pub [f64; 12]);

impl Workload {
    pub fn get(&self, name: &str) -> Option<f64> {
        workload_index(name).map(|i| self.0[i])
    }

    /// Checks non-negativity and the threshold orderings between related features.
    pub fn validate(&self) -> Result<(), String> {
        for (name, v) in WORKLOAD_FEATURES.iter().zip(self.0.iter()) {
            if !v.is_finite() || *v < 0.0 {
                return Err(format!("{name} must be a non-negative number, got {v}"));
            }
        }
        let [d_tot, d_hsr, _, _, _, _, acc2, acc3, dec2, dec3, _, _] = self.0;
        if acc3 > acc2 {
            return Err(format!("Acc_3 ({acc3}) exceeds Acc_2 ({acc2})"));
        }
        if dec3 > dec2 {
            return Err(format!("Dec_3 ({dec3}) exceeds Dec_2 ({dec2})"));
        }
        if d_hsr > d_tot {
            return Err(format!("d_HSR ({d_hsr}) exceeds d_TOT ({d_tot})"));
        }
        Ok(())
    }
}

pub fn workload_index(name: &str) -> Option<usize> {
    WORKLOAD_FEATURES.iter().position(|f| *f == name)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingSession {
    pub player_id: String,
    pub date: NaiveDate,
    pub workload: Workload,
    /// Minutes played in the previous official game.
    pub play_time: f64,
    /// Official games played before this session.
    pub games: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InjuryRecord {
    pub player_id: String,
    pub onset_date: NaiveDate,
    pub days_absent: u32,
}

impl InjuryRecord {
    /// Inclusive absence window `[onset, onset + days_absent]`.
    pub fn absence_window(&self) -> (NaiveDate, NaiveDate) {
        (
            self.onset_date,
            self.onset_date + Duration::days(i64::from(self.days_absent)),
        )
    }

    pub fn covers(&self, date: NaiveDate) -> bool {
        let (lo, hi) = self.absence_window();
        lo <= date && date <= hi
    }
}

/// A validated season: profiles, chronologically sorted sessions per player and injuries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeasonLog {
    players: Vec<PlayerProfile>,
    sessions: BTreeMap<String, Vec<TrainingSession>>,
    injuries: Vec<InjuryRecord>,
}

impl SeasonLog {
    pub fn new(
        players: Vec<PlayerProfile>,
        sessions: Vec<TrainingSession>,
        injuries: Vec<InjuryRecord>,
    ) -> Result<Self, DataError> {
        let mut ids = HashSet::new();
        for p in &players {
            if !ids.insert(p.player_id.clone()) {
                return Err(DataError::InvalidProfile {
                    player_id: p.player_id.clone(),
                    message: "duplicate player id".into(),
                });
            }
        }
        let mut by_player: BTreeMap<String, Vec<TrainingSession>> = players
            .iter()
            .map(|p| (p.player_id.clone(), Vec::new()))
            .collect();
        for (i, s) in sessions.into_iter().enumerate() {
            s.workload.validate().map_err(|message| DataError::NegativeWorkload {
                file: "sessions".into(),
                line: i + 1,
                message,
            })?;
            match by_player.get_mut(&s.player_id) {
                Some(v) => v.push(s),
                None => {
                    return Err(DataError::UnknownPlayer {
                        file: "sessions".into(),
                        line: i + 1,
                        player_id: s.player_id,
                    })
                }
            }
        }
        for list in by_player.values_mut() {
            list.sort_by_key(|s| s.date);
            if let Some(w) = list.windows(2).find(|w| w[0].date == w[1].date) {
                return Err(DataError::DuplicateSession {
                    player_id: w[0].player_id.clone(),
                    date: w[0].date,
                });
            }
        }
        let mut injuries = injuries;
        for (i, inj) in injuries.iter().enumerate() {
            if !ids.contains(&inj.player_id) {
                return Err(DataError::UnknownPlayer {
                    file: "injuries".into(),
                    line: i + 1,
                    player_id: inj.player_id.clone(),
                });
            }
            if inj.days_absent == 0 {
                return Err(DataError::InvalidInjury {
                    player_id: inj.player_id.clone(),
                    message: "days_absent must be at least 1".into(),
                });
            }
        }
        injuries.sort_by(|a, b| (&a.player_id, a.onset_date).cmp(&(&b.player_id, b.onset_date)));
        if let Some(w) = injuries
            .windows(2)
            .find(|w| w[0].player_id == w[1].player_id && w[0].onset_date == w[1].onset_date)
        {
            return Err(DataError::InvalidInjury {
                player_id: w[0].player_id.clone(),
                message: format!("two injuries with onset {}", w[0].onset_date),
            });
        }
        injuries.sort_by(|a, b| (a.onset_date, &a.player_id).cmp(&(b.onset_date, &b.player_id)));
        Ok(Self {
            players,
            sessions: by_player,
            injuries,
        })
    }

    pub fn players(&self) -> &[PlayerProfile] {
        &self.players
    }

    pub fn player(&self, id: &str) -> Option<&PlayerProfile> {
        self.players.iter().find(|p| p.player_id == id)
    }

    /// Sessions of one player, sorted by date.
    pub fn sessions_of(&self, id: &str) -> &[TrainingSession] {
        self.sessions.get(id).map(Vec::as_slice).unwrap_or(&[])
    }

    /// All sessions grouped by player (player-id order), each group chronological.
    pub fn sessions(&self) -> impl Iterator<Item = &TrainingSession> {
        self.sessions.values().flatten()
    }

    pub fn session_count(&self) -> usize {
        self.sessions.values().map(Vec::len).sum()
    }

    /// Injuries sorted by onset date.
    pub fn injuries(&self) -> &[InjuryRecord] {
        &self.injuries
    }

    pub fn first_date(&self) -> Option<NaiveDate> {
        self.sessions().map(|s| s.date).min()
    }

    pub fn last_date(&self) -> Option<NaiveDate> {
        self.sessions().map(|s| s.date).max()
    }

    pub fn write_csv(&self, dir: &Path) -> Result<(), DataError> {
        let io = |path: PathBuf| move |source| DataError::Io { path, source };
        std::fs::create_dir_all(dir).map_err(io(dir.to_path_buf()))?;
        let p = dir.join("players.csv");
        let f = std::fs::File::create(&p).map_err(io(p.clone()))?;
        write_players(&self.players, f).map_err(io(p))?;
        let p = dir.join("sessions.csv");
        let f = std::fs::File::create(&p).map_err(io(p.clone()))?;
        write_sessions(self.sessions(), f).map_err(io(p))?;
        let p = dir.join("injuries.csv");
        let f = std::fs::File::create(&p).map_err(io(p.clone()))?;
        write_injuries(&self.injuries, f).map_err(io(p))?;
        Ok(())
    }
}

fn write_players<W: Write>(players: &[PlayerProfile], mut w: W) -> std::io::Result<()> {
    writeln!(w, "{PLAYERS_HEADER}")?;
    for p in players {
        writeln!(
            w,
            "{},{},{},{},{}",
            p.player_id, p.age, p.height_cm, p.body_mass, p.role
        )?;
    }
    Ok(())
}

fn write_sessions<'a, W: Write>(
    sessions: impl Iterator<Item = &'a TrainingSession>,
    mut w: W,
) -> std::io::Result<()> {
    writeln!(w, "{SESSIONS_HEADER}")?;
    for s in sessions {
        write!(w, "{},{}", s.player_id, s.date.format(DATE_FORMAT))?;
        for v in s.workload.0 {
            write!(w, ",{v}")?;
        }
        writeln!(w, ",{},{}", s.play_time, s.games)?;
    }
    Ok(())
}

fn write_injuries<W: Write>(injuries: &[InjuryRecord], mut w: W) -> std::io::Result<()> {
    writeln!(w, "{INJURIES_HEADER}")?;
    for i in injuries {
        writeln!(
            w,
            "{},{},{}",
            i.player_id,
            i.onset_date.format(DATE_FORMAT),
            i.days_absent
        )?;
    }
    Ok(())
}

struct CsvRows {
    file: String,
    header: Vec<String>,
    rows: Vec<(usize, Vec<String>)>,
}

impl CsvRows {
    fn read<R: Read>(file: &str, reader: R, expected: &str) -> Result<Self, DataError> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(false)
            .flexible(true)
            .trim(csv::Trim::All)
            .from_reader(reader);
        let malformed = |line: usize, column: &str, message: String| DataError::MalformedRow {
            file: file.to_string(),
            line,
            column: column.to_string(),
            message,
        };
        let expected: Vec<String> = expected.split(',').map(str::to_string).collect();
        let mut header = None;
        let mut rows = Vec::new();
        for rec in rdr.records() {
            let rec = rec.map_err(|e| {
                let line = e.position().map_or(0, |p| p.line() as usize);
                malformed(line, "", e.to_string())
            })?;
            let line = rec.position().map_or(0, |p| p.line() as usize);
            let fields: Vec<String> = rec.iter().map(str::to_string).collect();
            if fields.iter().all(String::is_empty) {
                continue;
            }
            if header.is_none() {
                if fields != expected {
                    return Err(malformed(
                        line,
                        "header",
                        format!("expected `{}`, got `{}`", expected.join(","), fields.join(",")),
                    ));
                }
                header = Some(fields);
                continue;
            }
            if fields.len() != expected.len() {
                return Err(malformed(
                    line,
                    "",
                    format!("expected {} fields, got {}", expected.len(), fields.len()),
                ));
            }
            rows.push((line, fields));
        }
        let header = header.ok_or_else(|| malformed(1, "header", "missing header".into()))?;
        Ok(Self {
            file: file.to_string(),
            header,
            rows,
        })
    }

    fn parse<T: FromStr>(&self, line: usize, fields: &[String], col: usize) -> Result<T, DataError>
    where
        T::Err: fmt::Display,
    {
        fields[col]
            .parse::<T>()
            .map_err(|e| DataError::MalformedRow {
                file: self.file.clone(),
                line,
                column: self.header[col].clone(),
                message: format!("`{}`: {e}", fields[col]),
            })
    }

    fn date(&self, line: usize, fields: &[String], col: usize) -> Result<NaiveDate, DataError> {
        NaiveDate::parse_from_str(&fields[col], DATE_FORMAT).map_err(|e| DataError::MalformedRow {
            file: self.file.clone(),
            line,
            column: self.header[col].clone(),
            message: format!("`{}`: {e}", fields[col]),
        })
    }
}

pub fn read_players<R: Read>(reader: R) -> Result<Vec<PlayerProfile>, DataError> {
    let csv = CsvRows::read("players.csv", reader, PLAYERS_HEADER)?;
    let mut out = Vec::with_capacity(csv.rows.len());
    for (line, f) in &csv.rows {
        let role = f[4].parse::<Role>().map_err(|message| DataError::MalformedRow {
            file: csv.file.clone(),
            line: *line,
            column: "role".into(),
            message,
        })?;
        out.push(PlayerProfile::new(
            f[0].clone(),
            csv.parse(*line, f, 1)?,
            csv.parse(*line, f, 2)?,
            csv.parse(*line, f, 3)?,
            role,
        )?);
    }
    Ok(out)
}

fn read_sessions<R: Read>(
    reader: R,
    known: &HashSet<&str>,
) -> Result<Vec<TrainingSession>, DataError> {
    let csv = CsvRows::read("sessions.csv", reader, SESSIONS_HEADER)?;
    let mut out = Vec::with_capacity(csv.rows.len());
    let mut seen = HashSet::new();
    for (line, f) in &csv.rows {
        if !known.contains(f[0].as_str()) {
            return Err(DataError::UnknownPlayer {
                file: csv.file.clone(),
                line: *line,
                player_id: f[0].clone(),
            });
        }
        let date = csv.date(*line, f, 1)?;
        let mut values = [0.0; 12];
        for (k, v) in values.iter_mut().enumerate() {
            *v = csv.parse(*line, f, 2 + k)?;
        }
        let workload = Workload(values);
        workload
            .validate()
            .map_err(|message| DataError::NegativeWorkload {
                file: csv.file.clone(),
                line: *line,
                message,
            })?;
        let play_time: f64 = csv.parse(*line, f, 14)?;
        if !(play_time.is_finite() && play_time >= 0.0) {
            return Err(DataError::MalformedRow {
                file: csv.file.clone(),
                line: *line,
                column: "play_time".into(),
                message: "must be non-negative".into(),
            });
        }
        if !seen.insert((f[0].clone(), date)) {
            return Err(DataError::DuplicateSession {
                player_id: f[0].clone(),
                date,
            });
        }
        out.push(TrainingSession {
            player_id: f[0].clone(),
            date,
            workload,
            play_time,
            games: csv.parse(*line, f, 15)?,
        });
    }
    Ok(out)
}

fn read_injuries<R: Read>(
    reader: R,
    known: &HashSet<&str>,
) -> Result<Vec<InjuryRecord>, DataError> {
    let csv = CsvRows::read("injuries.csv", reader, INJURIES_HEADER)?;
    let mut out: Vec<InjuryRecord> = Vec::with_capacity(csv.rows.len());
    for (line, f) in &csv.rows {
        if !known.contains(f[0].as_str()) {
            return Err(DataError::UnknownPlayer {
                file: csv.file.clone(),
                line: *line,
                player_id: f[0].clone(),
            });
        }
        let days_absent: u32 = csv.parse(*line, f, 2)?;
        if days_absent == 0 {
            return Err(DataError::MalformedRow {
                file: csv.file.clone(),
                line: *line,
                column: "days_absent".into(),
                message: "must be at least 1".into(),
            });
        }
        let onset_date = csv.date(*line, f, 1)?;
        if let Some(prev) = out.iter().rev().find(|i| i.player_id == f[0]) {
            if prev.onset_date >= onset_date {
                return Err(DataError::InvalidInjury {
                    player_id: f[0].clone(),
                    message: format!(
                        "line {line}: onset {onset_date} not after previous onset {}",
                        prev.onset_date
                    ),
                });
            }
        }
        out.push(InjuryRecord {
            player_id: f[0].clone(),
            onset_date,
            days_absent,
        });
    }
    Ok(out)
}

/// Parses a season from in-memory readers (players, sessions, injuries).
pub fn parse_season_from<P: Read, S: Read, I: Read>(
    players: P,
    sessions: S,
    injuries: I,
) -> Result<SeasonLog, DataError> {
    let players = read_players(players)?;
    let known: HashSet<&str> = players.iter().map(|p| p.player_id.as_str()).collect();
    let sessions = read_sessions(sessions, &known)?;
    let injuries = read_injuries(injuries, &known)?;
    SeasonLog::new(players, sessions, injuries)
}

pub fn parse_season(
    sessions_file: &Path,
    injuries_file: &Path,
    players_file: &Path,
) -> Result<SeasonLog, DataError> {
    let open = |p: &Path| {
        std::fs::File::open(p).map_err(|source| DataError::Io {
            path: p.to_path_buf(),
            source,
        })
    };
    let (s, i, p) = (open(sessions_file)?, open(injuries_file)?, open(players_file)?);
    parse_season_from(p, s, i)
}

/// A session with its binary injury label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledSession {
    pub session: TrainingSession,
    pub label: bool,
    /// Index into [`SeasonLog::injuries`] of the injury this session forecasts.
    pub injury: Option<usize>,
}

/// An injury with no eligible preceding session inside the horizon.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OrphanInjury {
    pub injury: usize,
    pub player_id: String,
    pub onset_date: NaiveDate,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Labeling {
    /// Labeled sessions grouped by player, chronological within player.
    pub sessions: Vec<LabeledSession>,
    pub orphans: Vec<OrphanInjury>,
    /// Sessions dropped because they fall inside an absence window.
    pub excluded: usize,
}

/// Attaches every injury to the player's most recent session before onset
/// (at most `horizon_days` earlier) and drops sessions inside absence windows.
pub fn assign_labels(log: &SeasonLog, horizon_days: u32) -> Labeling {
    let horizon = Duration::days(i64::from(horizon_days));
    let mut out = Labeling::default();
    for player in log.players() {
        let injuries: Vec<(usize, &InjuryRecord)> = log
            .injuries()
            .iter()
            .enumerate()
            .filter(|(_, i)| i.player_id == player.player_id)
            .collect();
        let kept: Vec<&TrainingSession> = log
            .sessions_of(&player.player_id)
            .iter()
            .filter(|s| {
                let inside = injuries.iter().any(|(_, i)| i.covers(s.date));
                if inside {
                    out.excluded += 1;
                }
                !inside
            })
            .collect();
        let mut attached: Vec<Option<usize>> = vec![None; kept.len()];
        for (idx, inj) in &injuries {
            let candidate = kept
                .iter()
                .rposition(|s| s.date < inj.onset_date)
                .filter(|&k| inj.onset_date - kept[k].date <= horizon)
                .filter(|&k| attached[k].is_none());
            match candidate {
                Some(k) => attached[k] = Some(*idx),
                None => out.orphans.push(OrphanInjury {
                    injury: *idx,
                    player_id: inj.player_id.clone(),
                    onset_date: inj.onset_date,
                }),
            }
        }
        for (s, injury) in kept.into_iter().zip(attached) {
            out.sessions.push(LabeledSession {
                session: s.clone(),
                label: injury.is_some(),
                injury,
            });
        }
    }
    out.orphans.sort_by_key(|o| o.injury);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn d(day: u32) -> NaiveDate {
        NaiveDate::from_ymd_opt(2014, 1, day).unwrap()
    }

    fn workload() -> Workload {
        Workload([
            4000.0, 150.0, 1200.0, 500.0, 8.0, 400.0, 60.0, 15.0, 60.0, 20.0, 110.0, 0.6,
        ])
    }

    fn session(p: &str, day: u32) -> TrainingSession {
        TrainingSession {
            player_id: p.into(),
            date: d(day),
            workload: workload(),
            play_time: 0.0,
            games: 0,
        }
    }

    fn one_player_log(days: &[u32], injuries: &[(u32, u32)]) -> SeasonLog {
        let p = PlayerProfile::new("p1", 26, 180.0, 78.0, Role::Winger).unwrap();
        SeasonLog::new(
            vec![p],
            days.iter().map(|&x| session("p1", x)).collect(),
            injuries
                .iter()
                .map(|&(onset, absent)| InjuryRecord {
                    player_id: "p1".into(),
                    onset_date: d(onset),
                    days_absent: absent,
                })
                .collect(),
        )
        .unwrap()
    }

    const PLAYERS: &str = "player_id,age,height_cm,mass_kg,role\n\
        a,25,180,78,Midfielder\nb,30,175,72,Winger\nc,22,185,82,CentralBack\n";

    fn session_rows(rows: &[(&str, &str)]) -> String {
        let mut s = format!("{SESSIONS_HEADER}\n");
        for (p, date) in rows {
            s.push_str(&format!(
                "{p},{date},4000,150,1200,500,8,400,60,15,60,20,110,0.6,90,3\n"
            ));
        }
        s
    }

    #[test]
    fn bmi_is_derived() {
        let p = PlayerProfile::new("x", 26, 179.0, 78.0, Role::Forward).unwrap();
        assert!((p.bmi() - 78.0 / (1.79 * 1.79)).abs() < 1e-6);
        assert!(PlayerProfile::new("x", 0, 179.0, 78.0, Role::Forward).is_err());
    }

    #[test]
    fn parses_well_formed_season() {
        let mut rows = Vec::new();
        for (i, p) in ["a", "b", "c"].iter().cycle().take(10).enumerate() {
            rows.push((*p, ["2014-01-02", "2014-01-03", "2014-01-04", "2014-01-06"][i / 3]));
        }
        let sessions = session_rows(&rows);
        let injuries = "player_id,onset_date,days_absent\na,2014-01-07,3\n";
        let log = parse_season_from(PLAYERS.as_bytes(), sessions.as_bytes(), injuries.as_bytes())
            .unwrap();
        assert_eq!(log.players().len(), 3);
        assert_eq!(log.session_count(), 10);
        assert_eq!(log.injuries().len(), 1);
        assert!(log
            .sessions_of("a")
            .windows(2)
            .all(|w| w[0].date < w[1].date));
    }

    #[test]
    fn rejects_acc3_above_acc2() {
        let sessions = format!(
            "{SESSIONS_HEADER}\na,2014-01-02,4000,150,1200,500,8,400,10,15,60,20,110,0.6,90,3\n"
        );
        let err = parse_season_from(
            PLAYERS.as_bytes(),
            sessions.as_bytes(),
            INJURIES_HEADER.as_bytes(),
        )
        .unwrap_err();
        match err {
            DataError::NegativeWorkload { line, message, .. } => {
                assert_eq!(line, 2);
                assert!(message.contains("Acc_3"), "{message}");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn reports_malformed_cells_with_position() {
        let sessions = format!(
            "{SESSIONS_HEADER}\na,2014-01-02,4000,150,1200,500,8,400,60,15,60,20,110,0.6,90,3\n\
             a,2014-01-03,4000,abc,1200,500,8,400,60,15,60,20,110,0.6,90,3\n"
        );
        let err = parse_season_from(
            PLAYERS.as_bytes(),
            sessions.as_bytes(),
            INJURIES_HEADER.as_bytes(),
        )
        .unwrap_err();
        match err {
            DataError::MalformedRow { line, column, .. } => {
                assert_eq!(line, 3);
                assert_eq!(column, "d_hsr");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn rejects_unknown_players_and_duplicates() {
        let s = session_rows(&[("zz", "2014-01-02")]);
        assert!(matches!(
            parse_season_from(PLAYERS.as_bytes(), s.as_bytes(), INJURIES_HEADER.as_bytes()),
            Err(DataError::UnknownPlayer { .. })
        ));
        let s = session_rows(&[("a", "2014-01-02"), ("a", "2014-01-02")]);
        assert!(matches!(
            parse_season_from(PLAYERS.as_bytes(), s.as_bytes(), INJURIES_HEADER.as_bytes()),
            Err(DataError::DuplicateSession { .. })
        ));
        let s = session_rows(&[("a", "2014-13-02")]);
        assert!(matches!(
            parse_season_from(PLAYERS.as_bytes(), s.as_bytes(), INJURIES_HEADER.as_bytes()),
            Err(DataError::MalformedRow { .. })
        ));
        let inj = "player_id,onset_date,days_absent\nq,2014-01-07,3\n";
        let s = session_rows(&[("a", "2014-01-02")]);
        assert!(matches!(
            parse_season_from(PLAYERS.as_bytes(), s.as_bytes(), inj.as_bytes()),
            Err(DataError::UnknownPlayer { .. })
        ));
    }

    #[test]
    fn single_injury_labels_last_session() {
        let log = one_player_log(&[1, 2, 3], &[(4, 2)]);
        let lab = assign_labels(&log, 3);
        let labels: Vec<bool> = lab.sessions.iter().map(|s| s.label).collect();
        assert_eq!(labels, vec![false, false, true]);
        assert_eq!(lab.sessions[2].injury, Some(0));
        assert!(lab.orphans.is_empty());
    }

    #[test]
    fn injury_beyond_horizon_is_orphaned() {
        let log = one_player_log(&[1, 2, 3], &[(13, 2)]);
        let lab = assign_labels(&log, 3);
        assert!(lab.sessions.iter().all(|s| !s.label));
        assert_eq!(lab.orphans.len(), 1);
    }

    #[test]
    fn absence_window_sessions_are_excluded() {
        // injury on day 4, absent 3 days: window [4, 7]
        let log = one_player_log(&[1, 3, 4, 5, 7, 8, 9], &[(4, 3)]);
        let lab = assign_labels(&log, 3);
        let days: Vec<u32> = lab
            .sessions
            .iter()
            .map(|s| s.session.date.format("%d").to_string().parse().unwrap())
            .collect();
        assert_eq!(days, vec![1, 3, 8, 9]);
        assert_eq!(lab.excluded, 3);
        assert!(lab.sessions[1].label);
    }
}
