//! ADASYN: adaptive synthetic oversampling of the injury class.
//!
//! Each minority example `x_i` receives a share of the `G` synthetic rows
//! proportional to the fraction of majority examples among its `k` nearest
//! neighbours. A synthetic row is `x_i + λ (x_z - x_i)` where `x_z` is one of the
//! minority neighbours of `x_i` and `λ ~ U[0, 1]`. Distances are Euclidean on
//! z-scored columns so that metre-scale features do not swamp ratios.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::Role;
use crate::table::{TrainingExample, TrainingTable};

#[derive(Debug, Error, PartialEq)]
pub enum ResampleError {
    #[error("ADASYN needs at least 2 minority examples, got {0}")]
    TooFewMinority(usize),
    #[error("ADASYN needs at least one majority example")]
    NoMajority,
    #[error("invalid resampling config: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ResamplingConfig {
    pub k_neighbors: usize,
    /// Fraction of the class gap to fill, in (0, 1].
    pub balance_ratio: f64,
    pub seed: u64,
}

impl Default for ResamplingConfig {
    fn default() -> Self {
        Self {
            k_neighbors: 5,
            balance_ratio: 1.0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AdasynReport {
    pub generated: usize,
    /// Synthetic rows allotted to each minority example, in table order.
    pub allocation: Vec<usize>,
    /// Majority fraction among each minority example's neighbours.
    pub ratios: Vec<f64>,
    /// All minority vectors were identical; synthesis only duplicated them.
    pub degenerate_geometry: bool,
    /// No minority point had majority neighbours; allocation was uniform.
    pub uniform_fallback: bool,
}

fn standardizer(table: &TrainingTable) -> (Vec<f64>, Vec<f64>) {
    let n = table.len() as f64;
    let p = table.n_features();
    let mut mean = vec![0.0; p];
    for e in table.examples() {
        for (m, v) in mean.iter_mut().zip(&e.features) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let mut sd = vec![0.0; p];
    for e in table.examples() {
        for j in 0..p {
            sd[j] += (e.features[j] - mean[j]).powi(2);
        }
    }
    for s in &mut sd {
        *s = (*s / n).sqrt();
        if *s < 1e-12 {
            *s = 1.0;
        }
    }
    (mean, sd)
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Indices of the `k` nearest rows of `candidates` to `query` (ties by index).
fn nearest(z: &[Vec<f64>], query: usize, candidates: &[usize], k: usize) -> Vec<usize> {
    let mut d: Vec<(f64, usize)> = candidates
        .iter()
        .filter(|&&c| c != query)
        .map(|&c| (sq_dist(&z[query], &z[c]), c))
        .collect();
    d.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    d.into_iter().take(k).map(|(_, c)| c).collect()
}

/// Splits `total` across weights by largest remainder so the parts sum exactly.
fn apportion(weights: &[f64], total: usize) -> Vec<usize> {
    let sum: f64 = weights.iter().sum();
    let shares: Vec<f64> = weights.iter().map(|w| w / sum * total as f64).collect();
    let mut out: Vec<usize> = shares.iter().map(|s| s.floor() as usize).collect();
    let assigned: usize = out.iter().sum();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = shares[a] - shares[a].floor();
        let rb = shares[b] - shares[b].floor();
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    for &i in order.iter().take(total.saturating_sub(assigned)) {
        out[i] += 1;
    }
    out
}

/// Oversamples label-1 rows. The returned table is the input followed by the
/// synthetic rows (flagged `synthetic`).
pub fn adasyn(
    table: &TrainingTable,
    cfg: &ResamplingConfig,
) -> Result<(TrainingTable, AdasynReport), ResampleError> {
    if cfg.k_neighbors == 0 {
        return Err(ResampleError::InvalidConfig("k_neighbors must be >= 1".into()));
    }
    if !(cfg.balance_ratio > 0.0 && cfg.balance_ratio <= 1.0) {
        return Err(ResampleError::InvalidConfig(
            "balance_ratio must lie in (0, 1]".into(),
        ));
    }
    let minority: Vec<usize> = (0..table.len())
        .filter(|&i| table.examples()[i].label)
        .collect();
    let n_min = minority.len();
    let n_maj = table.len() - n_min;
    if n_min < 2 {
        return Err(ResampleError::TooFewMinority(n_min));
    }
    if n_maj == 0 {
        return Err(ResampleError::NoMajority);
    }
    let gap = n_maj.saturating_sub(n_min);
    let g = (cfg.balance_ratio * gap as f64).round() as usize;
    let mut report = AdasynReport::default();
    if g == 0 {
        report.allocation = vec![0; n_min];
        return Ok((table.clone(), report));
    }

    let (mean, sd) = standardizer(table);
    let z: Vec<Vec<f64>> = table
        .examples()
        .iter()
        .map(|e| {
            e.features
                .iter()
                .enumerate()
                .map(|(j, v)| (v - mean[j]) / sd[j])
                .collect()
        })
        .collect();
    let all: Vec<usize> = (0..table.len()).collect();
    let k = cfg.k_neighbors.min(table.len() - 1);
    report.ratios = minority
        .iter()
        .map(|&i| {
            let nn = nearest(&z, i, &all, k);
            nn.iter().filter(|&&j| !table.examples()[j].label).count() as f64 / k as f64
        })
        .collect();
    let weights = if report.ratios.iter().all(|r| *r == 0.0) {
        report.uniform_fallback = true;
        vec![1.0; n_min]
    } else {
        report.ratios.clone()
    };
    report.allocation = apportion(&weights, g);

    let first = &table.examples()[minority[0]].features;
    report.degenerate_geometry = minority
        .iter()
        .all(|&i| table.examples()[i].features == *first);

    let role_col = table.index_of("role");
    let k_partner = cfg.k_neighbors.min(n_min - 1);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut out = table.clone();
    for (slot, &i) in minority.iter().enumerate() {
        let count = report.allocation[slot];
        if count == 0 {
            continue;
        }
        let partners = nearest(&z, i, &minority, k_partner);
        let base = &table.examples()[i];
        for _ in 0..count {
            let partner = &table.examples()[partners[rng.random_range(0..partners.len())]];
            let lambda: f64 = rng.random();
            let mut features: Vec<f64> = base
                .features
                .iter()
                .zip(&partner.features)
                .map(|(a, b)| a + lambda * (b - a))
                .collect();
            if let Some(j) = role_col {
                let code = features[j].round() as i64;
                features[j] = Role::from_code(code)
                    .map(|r| f64::from(r.code()))
                    .unwrap_or(base.features[j]);
            }
            out.push(TrainingExample {
                player_id: base.player_id.clone(),
                date: base.date,
                features,
                label: true,
                synthetic: true,
                partner: Some((partner.player_id.clone(), partner.date)),
            })
            .expect("width preserved");
        }
    }
    report.generated = g;
    Ok((out, report))
}
