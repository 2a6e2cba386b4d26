//! Decision-tree leaves as readable injury rules, with coverage statistics and
//! a small handbook renderer.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::learners::{DecisionTreeModel, Node};
use crate::table::{TableError, TrainingTable};

#[derive(Debug, Error)]
pub enum RuleError {
    #[error(transparent)]
    Table(#[from] TableError),
    #[error("handbook JSON: {0}")]
    Json(#[from] serde_json::Error),
}

/// `lo < value <= hi`; `None` is an open end (serialized as null).
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
pub struct InjuryRule {
    pub conditions: Vec<Condition>,
    pub leaf: usize,
    /// Share of all injury examples the rule covers.
    pub frequency: Option<f64>,
    /// Share of covered examples that are injuries; `None` when nothing is covered.
    pub accuracy: Option<f64>,
}

impl InjuryRule {
    /// `x` is aligned with `names`; a missing feature fails the rule.
    pub fn matches(&self, names: &[String], x: &[f64]) -> bool {
        self.conditions.iter().all(|c| {
            names
                .iter()
                .position(|n| *n == c.feature)
                .is_some_and(|j| c.holds(x[j]))
        })
    }
}

/// Region of one leaf: merged path conditions, in order of first use.
#[derive(Debug, Clone, PartialEq)]
pub struct LeafRegion {
    pub leaf: usize,
    pub class: bool,
    pub conditions: Vec<Condition>,
}

pub fn leaf_regions(model: &DecisionTreeModel) -> Vec<LeafRegion> {
    let names = model.feature_names();
    let nodes = model.nodes();
    let mut out = Vec::new();
    let mut stack = vec![(0usize, Vec::<Condition>::new())];
    while let Some((id, path)) = stack.pop() {
        match &nodes[id] {
            Node::Leaf { class, .. } => out.push(LeafRegion {
                leaf: id,
                class: *class,
                conditions: path,
            }),
            Node::Decision {
                feature,
                threshold,
                left,
                right,
                ..
            } => {
                let narrow = |go_left: bool| {
                    let mut p = path.clone();
                    let c = match p.iter_mut().find(|c| c.feature == names[*feature]) {
                        Some(c) => c,
                        None => {
                            p.push(Condition {
                                feature: names[*feature].clone(),
                                lo: None,
                                hi: None,
                            });
                            p.last_mut().expect("just pushed")
                        }
                    };
                    if go_left {
                        c.hi = Some(c.hi.map_or(*threshold, |h| h.min(*threshold)));
                    } else {
                        c.lo = Some(c.lo.map_or(*threshold, |l| l.max(*threshold)));
                    }
                    p
                };
                stack.push((*right, narrow(false)));
                stack.push((*left, narrow(true)));
            }
        }
    }
    out.sort_by_key(|r| r.leaf);
    out
}

/// One rule per injury-class leaf; empty when the tree never predicts injury.
pub fn extract_rules(model: &DecisionTreeModel) -> Vec<InjuryRule> {
    leaf_regions(model)
        .into_iter()
        .filter(|r| r.class)
        .map(|r| InjuryRule {
            conditions: r.conditions,
            leaf: r.leaf,
            frequency: None,
            accuracy: None,
        })
        .collect()
}

pub fn rule_stats(rules: &[InjuryRule], table: &TrainingTable) -> Result<Vec<InjuryRule>, RuleError> {
    let total = table.positives();
    rules
        .iter()
        .map(|r| {
            let cols: Vec<usize> = table.index_map(
                &r.conditions.iter().map(|c| c.feature.clone()).collect::<Vec<_>>(),
            )?;
            let mut covered = 0usize;
            let mut hits = 0usize;
            for e in table.examples() {
                if r.conditions.iter().zip(&cols).all(|(c, &j)| c.holds(e.features[j])) {
                    covered += 1;
                    hits += usize::from(e.label);
                }
            }
            Ok(InjuryRule {
                frequency: Some(if total == 0 { 0.0 } else { hits as f64 / total as f64 }),
                accuracy: (covered > 0).then(|| hits as f64 / covered as f64),
                ..r.clone()
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HandbookFormat {
    Text,
    Json,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Handbook {
    rules: Vec<InjuryRule>,
}

fn sorted(rules: &[InjuryRule]) -> Vec<InjuryRule> {
    let mut v = rules.to_vec();
    v.sort_by(|a, b| {
        b.frequency
            .unwrap_or(0.0)
            .total_cmp(&a.frequency.unwrap_or(0.0))
            .then(a.leaf.cmp(&b.leaf))
    });
    v
}

fn describe(c: &Condition) -> String {
    match (c.lo, c.hi) {
        (Some(lo), Some(hi)) => format!("{lo:.2} < {} <= {hi:.2}", c.feature),
        (Some(lo), None) => format!("{} > {lo:.2}", c.feature),
        (None, Some(hi)) => format!("{} <= {hi:.2}", c.feature),
        (None, None) => format!("{} (any value)", c.feature),
    }
}

fn pct(v: Option<f64>) -> String {
    v.map_or("n/a".to_string(), |v| format!("{:.0}%", 100.0 * v))
}

/// Rules by descending frequency.
pub fn render_handbook(rules: &[InjuryRule], format: HandbookFormat) -> String {
    let rules = sorted(rules);
    match format {
        HandbookFormat::Json => {
            let mut s = serde_json::to_string_pretty(&Handbook { rules }).expect("rules serialize");
            s.push('\n');
            s
        }
        HandbookFormat::Text => {
            if rules.is_empty() {
                return "no injury rules\n".to_string();
            }
            let mut out = String::new();
            for (i, r) in rules.iter().enumerate() {
                out.push_str(&format!(
                    "Rule {} (leaf {}): frequency {}, accuracy {}\n",
                    i + 1,
                    r.leaf,
                    pct(r.frequency),
                    pct(r.accuracy)
                ));
                for c in &r.conditions {
                    out.push_str("  ");
                    out.push_str(&describe(c));
                    out.push('\n');
                }
                out.push_str("  => INJURY\n");
            }
            out
        }
    }
}

pub fn parse_handbook(json: &str) -> Result<Vec<InjuryRule>, RuleError> {
    Ok(serde_json::from_str::<Handbook>(json)?.rules)
}
