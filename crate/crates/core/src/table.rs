//! Tabular training data shared by the learners, resampling and evaluation code.

use std::collections::HashMap;
use std::io::{Read, Write};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TableError {
    #[error("unknown feature `{0}`")]
    UnknownFeature(String),
    #[error("row {row}: expected {expected} features, got {got}")]
    Width {
        row: usize,
        expected: usize,
        got: usize,
    },
    #[error("row {row}: non-finite value in `{feature}`")]
    NonFinite { row: usize, feature: String },
    #[error("table csv line {line}: {message}")]
    Csv { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingExample {
    pub player_id: String,
    pub date: NaiveDate,
    /// Values aligned with [`TrainingTable::feature_names`].
    pub features: Vec<f64>,
    pub label: bool,
    /// True for rows produced by oversampling.
    #[serde(default)]
    pub synthetic: bool,
    /// For synthetic rows, the `(player_id, date)` of the second row they
    /// were interpolated towards; the first is `player_id`/`date` itself.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub partner: Option<(String, NaiveDate)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingTable {
    feature_names: Vec<String>,
    examples: Vec<TrainingExample>,
}

impl TrainingTable {
    pub fn new(
        feature_names: Vec<String>,
        examples: Vec<TrainingExample>,
    ) -> Result<Self, TableError> {
        for (row, ex) in examples.iter().enumerate() {
            if ex.features.len() != feature_names.len() {
                return Err(TableError::Width {
                    row,
                    expected: feature_names.len(),
                    got: ex.features.len(),
                });
            }
            if let Some(j) = ex.features.iter().position(|v| !v.is_finite()) {
                return Err(TableError::NonFinite {
                    row,
                    feature: feature_names[j].clone(),
                });
            }
        }
        Ok(Self {
            feature_names,
            examples,
        })
    }

    /// Builds an anonymous table from raw rows; handy for tests and toy problems.
    pub fn from_rows(
        feature_names: &[&str],
        rows: &[(Vec<f64>, bool)],
    ) -> Result<Self, TableError> {
        let base = NaiveDate::from_ymd_opt(2000, 1, 1).expect("valid date");
        let examples = rows
            .iter()
            .map(|(x, y)| TrainingExample {
                player_id: String::new(),
                date: base,
                features: x.clone(),
                label: *y,
                synthetic: false,
                partner: None,
            })
            .collect();
        Self::new(feature_names.iter().map(|s| s.to_string()).collect(), examples)
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn examples(&self) -> &[TrainingExample] {
        &self.examples
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.feature_names.iter().position(|n| n == name)
    }

    pub fn labels(&self) -> Vec<bool> {
        self.examples.iter().map(|e| e.label).collect()
    }

    pub fn positives(&self) -> usize {
        self.examples.iter().filter(|e| e.label).count()
    }

    pub fn negatives(&self) -> usize {
        self.len() - self.positives()
    }

    pub fn prevalence(&self) -> f64 {
        if self.is_empty() {
            0.0
        } else {
            self.positives() as f64 / self.len() as f64
        }
    }

    pub fn column(&self, name: &str) -> Result<Vec<f64>, TableError> {
        let j = self
            .index_of(name)
            .ok_or_else(|| TableError::UnknownFeature(name.to_string()))?;
        Ok(self.examples.iter().map(|e| e.features[j]).collect())
    }

    /// Projects the table onto the named columns, in the given order.
    pub fn select(&self, names: &[String]) -> Result<TrainingTable, TableError> {
        let idx = names
            .iter()
            .map(|n| {
                self.index_of(n)
                    .ok_or_else(|| TableError::UnknownFeature(n.clone()))
            })
            .collect::<Result<Vec<_>, _>>()?;
        let examples = self
            .examples
            .iter()
            .map(|e| TrainingExample {
                features: idx.iter().map(|&j| e.features[j]).collect(),
                ..e.clone()
            })
            .collect();
        Ok(TrainingTable {
            feature_names: names.to_vec(),
            examples,
        })
    }

    /// Keeps the rows at the given indices, in that order.
    pub fn subset(&self, rows: &[usize]) -> TrainingTable {
        TrainingTable {
            feature_names: self.feature_names.clone(),
            examples: rows.iter().map(|&i| self.examples[i].clone()).collect(),
        }
    }

    pub fn filter(&self, keep: impl Fn(&TrainingExample) -> bool) -> TrainingTable {
        TrainingTable {
            feature_names: self.feature_names.clone(),
            examples: self.examples.iter().filter(|e| keep(e)).cloned().collect(),
        }
    }

    pub fn push(&mut self, example: TrainingExample) -> Result<(), TableError> {
        if example.features.len() != self.feature_names.len() {
            return Err(TableError::Width {
                row: self.examples.len(),
                expected: self.feature_names.len(),
                got: example.features.len(),
            });
        }
        self.examples.push(example);
        Ok(())
    }

    pub fn concat(&self, other: &TrainingTable) -> Result<TrainingTable, TableError> {
        if other.feature_names != self.feature_names {
            return Err(TableError::UnknownFeature(
                "tables have different columns".into(),
            ));
        }
        let mut out = self.clone();
        out.examples.extend(other.examples.iter().cloned());
        Ok(out)
    }

    /// Column-major copy of the feature matrix.
    pub fn columns(&self) -> Vec<Vec<f64>> {
        (0..self.n_features())
            .map(|j| self.examples.iter().map(|e| e.features[j]).collect())
            .collect()
    }

    /// Map from the given names to this table's column indices.
    pub fn index_map(&self, names: &[String]) -> Result<Vec<usize>, TableError> {
        let lookup: HashMap<&str, usize> = self
            .feature_names
            .iter()
            .enumerate()
            .map(|(i, n)| (n.as_str(), i))
            .collect();
        names
            .iter()
            .map(|n| {
                lookup
                    .get(n.as_str())
                    .copied()
                    .ok_or_else(|| TableError::UnknownFeature(n.clone()))
            })
            .collect()
    }

    /// Writes `player_id,date,<features...>,label[,synthetic]`.
    pub fn write_csv<W: Write>(&self, w: W, with_synthetic_flag: bool) -> Result<(), TableError> {
        let mut wtr = csv::Writer::from_writer(w);
        let mut header = vec!["player_id".to_string(), "date".to_string()];
        header.extend(self.feature_names.iter().cloned());
        header.push("label".into());
        if with_synthetic_flag {
            header.push("synthetic".into());
        }
        wtr.write_record(&header).map_err(csv_io)?;
        for e in &self.examples {
            let mut rec = vec![e.player_id.clone(), e.date.format("%Y-%m-%d").to_string()];
            rec.extend(e.features.iter().map(|v| format!("{v}")));
            rec.push(u8::from(e.label).to_string());
            if with_synthetic_flag {
                rec.push(u8::from(e.synthetic).to_string());
            }
            wtr.write_record(&rec).map_err(csv_io)?;
        }
        wtr.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R) -> Result<TrainingTable, TableError> {
        let mut rdr = csv::Reader::from_reader(r);
        let header: Vec<String> = rdr
            .headers()
            .map_err(|e| TableError::Csv {
                line: 1,
                message: e.to_string(),
            })?
            .iter()
            .map(str::to_string)
            .collect();
        if header.len() < 3 || header[0] != "player_id" || header[1] != "date" {
            return Err(TableError::Csv {
                line: 1,
                message: "header must start with player_id,date".into(),
            });
        }
        let has_synth = header.last().map(String::as_str) == Some("synthetic");
        let label_col = if has_synth { header.len() - 2 } else { header.len() - 1 };
        if header[label_col] != "label" {
            return Err(TableError::Csv {
                line: 1,
                message: "missing label column".into(),
            });
        }
        let names: Vec<String> = header[2..label_col].to_vec();
        let mut examples = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let line = i + 2;
            let rec = rec.map_err(|e| TableError::Csv {
                line,
                message: e.to_string(),
            })?;
            let bad = |message: String| TableError::Csv { line, message };
            let date = NaiveDate::parse_from_str(&rec[1], "%Y-%m-%d")
                .map_err(|e| bad(format!("date: {e}")))?;
            let features = (2..label_col)
                .map(|j| {
                    rec[j]
                        .parse::<f64>()
                        .map_err(|e| bad(format!("{}: {e}", header[j])))
                })
                .collect::<Result<Vec<_>, _>>()?;
            let flag = |s: &str| match s {
                "0" => Ok(false),
                "1" => Ok(true),
                other => Err(bad(format!("expected 0/1, got `{other}`"))),
            };
            examples.push(TrainingExample {
                player_id: rec[0].to_string(),
                date,
                features,
                label: flag(&rec[label_col])?,
                synthetic: if has_synth { flag(&rec[label_col + 1])? } else { false },
                partner: None,
            });
        }
        TrainingTable::new(names, examples)
    }
}

fn csv_io(e: csv::Error) -> TableError {
    TableError::Io(std::io::Error::other(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_round_trip() {
        let t = TrainingTable::from_rows(
            &["a", "b/m"],
            &[(vec![1.5, 0.1], false), (vec![-2.0, 1e-7], true)],
        )
        .unwrap();
        let mut buf = Vec::new();
        t.write_csv(&mut buf, true).unwrap();
        let back = TrainingTable::read_csv(buf.as_slice()).unwrap();
        assert_eq!(back, t);
    }

    #[test]
    fn select_reorders_and_rejects_unknown() {
        let t = TrainingTable::from_rows(&["a", "b"], &[(vec![1.0, 2.0], true)]).unwrap();
        let s = t.select(&["b".to_string(), "a".to_string()]).unwrap();
        assert_eq!(s.examples()[0].features, vec![2.0, 1.0]);
        assert!(t.select(&["zz".to_string()]).is_err());
    }

    #[test]
    fn rejects_non_finite() {
        assert!(TrainingTable::from_rows(&["a"], &[(vec![f64::NAN], true)]).is_err());
    }
}
