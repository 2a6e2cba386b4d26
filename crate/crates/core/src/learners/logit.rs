//! L2-regularized logistic regression on z-scored features.

use serde::{Deserialize, Serialize};

use super::{LearnError, Prediction};
use crate::table::TrainingTable;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogitConfig {
    pub l2: f64,
    pub max_iter: usize,
    /// Stop once the gradient norm drops below this.
    pub tol: f64,
}

impl Default for LogitConfig {
    fn default() -> Self {
        Self {
            l2: 1e-2,
            max_iter: 5000,
            tol: 1e-6,
        }
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// log(1 + exp(z)) without overflow.
fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

/// Mean log-loss plus `l2/2 * |w|^2`; parameters are `[w..., b]`, the bias is not penalized.
pub struct LogisticLoss<'a> {
    pub x: &'a [Vec<f64>],
    pub y: &'a [bool],
    pub l2: f64,
}

impl LogisticLoss<'_> {
    fn margin(theta: &[f64], row: &[f64]) -> f64 {
        let p = row.len();
        theta[..p].iter().zip(row).map(|(w, v)| w * v).sum::<f64>() + theta[p]
    }

    pub fn value(&self, theta: &[f64]) -> f64 {
        let n = self.x.len() as f64;
        let p = theta.len() - 1;
        let data: f64 = self
            .x
            .iter()
            .zip(self.y)
            .map(|(row, &y)| {
                let z = Self::margin(theta, row);
                if y {
                    softplus(-z)
                } else {
                    softplus(z)
                }
            })
            .sum();
        data / n + 0.5 * self.l2 * theta[..p].iter().map(|w| w * w).sum::<f64>()
    }

    pub fn gradient(&self, theta: &[f64]) -> Vec<f64> {
        let n = self.x.len() as f64;
        let p = theta.len() - 1;
        let mut g = vec![0.0; p + 1];
        for (row, &y) in self.x.iter().zip(self.y) {
            let r = sigmoid(Self::margin(theta, row)) - if y { 1.0 } else { 0.0 };
            for (gj, v) in g[..p].iter_mut().zip(row) {
                *gj += r * v;
            }
            g[p] += r;
        }
        for gj in &mut g {
            *gj /= n;
        }
        for j in 0..p {
            g[j] += self.l2 * theta[j];
        }
        g
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    feature_names: Vec<String>,
    mean: Vec<f64>,
    scale: Vec<f64>,
    weights: Vec<f64>,
    bias: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogitFit {
    pub model: LinearModel,
    pub iterations: usize,
    pub grad_norm: f64,
}

pub fn fit_logit(table: &TrainingTable, cfg: &LogitConfig) -> Result<LinearModel, LearnError> {
    let fit = fit_logit_trace(table, cfg)?;
    if fit.grad_norm >= cfg.tol {
        return Err(LearnError::NonConvergence {
            iterations: fit.iterations,
            grad_norm: fit.grad_norm,
        });
    }
    Ok(fit.model)
}

/// Fits without failing on the iteration cap; the caller inspects `grad_norm`.
pub fn fit_logit_trace(table: &TrainingTable, cfg: &LogitConfig) -> Result<LogitFit, LearnError> {
    if table.is_empty() {
        return Err(LearnError::EmptyTable);
    }
    if table.n_features() == 0 {
        return Err(LearnError::NoFeatures);
    }
    if !(cfg.l2 >= 0.0) || !(cfg.tol > 0.0) {
        return Err(LearnError::InvalidHyperParams(
            "l2 must be >= 0 and tol > 0".into(),
        ));
    }
    let p = table.n_features();
    let n = table.len() as f64;
    let cols = table.columns();
    let mean: Vec<f64> = cols.iter().map(|c| c.iter().sum::<f64>() / n).collect();
    let scale: Vec<f64> = cols
        .iter()
        .zip(&mean)
        .map(|(c, m)| {
            let sd = (c.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n).sqrt();
            if sd < 1e-12 {
                1.0
            } else {
                sd
            }
        })
        .collect();
    let x: Vec<Vec<f64>> = table
        .examples()
        .iter()
        .map(|e| {
            (0..p)
                .map(|j| (e.features[j] - mean[j]) / scale[j])
                .collect()
        })
        .collect();
    let y = table.labels();
    let loss = LogisticLoss {
        x: &x,
        y: &y,
        l2: cfg.l2,
    };

    // Nesterov accelerated gradient with backtracking on the step size
    let mut theta = vec![0.0; p + 1];
    let mut prev = theta.clone();
    let mut step = 1.0;
    let mut grad_norm = norm(&loss.gradient(&theta));
    let mut iterations = 0;
    while iterations < cfg.max_iter && grad_norm >= cfg.tol {
        iterations += 1;
        let mom = (iterations as f64 - 1.0) / (iterations as f64 + 2.0);
        let look: Vec<f64> = theta
            .iter()
            .zip(&prev)
            .map(|(t, q)| t + mom * (t - q))
            .collect();
        let g = loss.gradient(&look);
        let f_look = loss.value(&look);
        let gg = g.iter().map(|v| v * v).sum::<f64>();
        let mut next;
        loop {
            next = look.iter().zip(&g).map(|(t, gj)| t - step * gj).collect::<Vec<_>>();
            if loss.value(&next) <= f_look - 0.5 * step * gg || step < 1e-12 {
                break;
            }
            step *= 0.5;
        }
        // restart momentum when the objective goes up
        if loss.value(&next) > loss.value(&theta) {
            prev = theta.clone();
        } else {
            prev = std::mem::replace(&mut theta, next);
        }
        grad_norm = norm(&loss.gradient(&theta));
        step *= 1.5;
    }
    Ok(LogitFit {
        model: LinearModel {
            feature_names: table.feature_names().to_vec(),
            mean,
            scale,
            weights: theta[..p].to_vec(),
            bias: theta[p],
        },
        iterations,
        grad_norm,
    })
}

impl LinearModel {
    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    /// Coefficients on the standardized features.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn bias(&self) -> f64 {
        self.bias
    }

    pub fn predict_row(&self, x: &[f64]) -> Prediction {
        let z = self.bias
            + x.iter()
                .enumerate()
                .map(|(j, v)| self.weights[j] * (v - self.mean[j]) / self.scale[j])
                .sum::<f64>();
        let score = sigmoid(z);
        Prediction {
            class: score >= 0.5,
            score,
        }
    }

    pub fn predict_table(&self, table: &TrainingTable) -> Result<Vec<Prediction>, LearnError> {
        let idx = table
            .index_map(&self.feature_names)
            .map_err(|e| LearnError::MissingFeature(e.to_string()))?;
        Ok(table
            .examples()
            .iter()
            .map(|e| {
                let row: Vec<f64> = idx.iter().map(|&j| e.features[j]).collect();
                self.predict_row(&row)
            })
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_weights_score_half() {
        let x = vec![vec![1.0], vec![-1.0]];
        let y = vec![true, false];
        let loss = LogisticLoss { x: &x, y: &y, l2: 0.0 };
        assert!((loss.value(&[0.0, 0.0]) - 2f64.ln()).abs() < 1e-12);
        assert_eq!(sigmoid(0.0), 0.5);
    }

    #[test]
    fn separable_data_is_monotone() {
        let rows: Vec<_> = (0..20).map(|i| (vec![i as f64], i >= 10)).collect();
        let t = TrainingTable::from_rows(&["x"], &rows).unwrap();
        let m = fit_logit(&t, &LogitConfig::default()).unwrap();
        let scores: Vec<f64> = (0..20).map(|i| m.predict_row(&[i as f64]).score).collect();
        assert!(scores.windows(2).all(|w| w[1] > w[0]));
        assert!(!m.predict_row(&[0.0]).class);
        assert!(m.predict_row(&[19.0]).class);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let x: Vec<Vec<f64>> = (0..15)
            .map(|i| vec![(i as f64 * 0.7).sin(), (i as f64 * 1.3).cos()])
            .collect();
        let y: Vec<bool> = (0..15).map(|i| i % 3 == 0).collect();
        let loss = LogisticLoss { x: &x, y: &y, l2: 0.1 };
        let theta = [0.3, -0.8, 0.2];
        let g = loss.gradient(&theta);
        let h = 1e-6;
        for j in 0..3 {
            let mut a = theta;
            let mut b = theta;
            a[j] += h;
            b[j] -= h;
            let fd = (loss.value(&a) - loss.value(&b)) / (2.0 * h);
            assert!((fd - g[j]).abs() / g[j].abs().max(1e-8) < 1e-4);
        }
    }

    #[test]
    fn non_convergence_reported() {
        let rows: Vec<_> = (0..20).map(|i| (vec![i as f64], i >= 10)).collect();
        let t = TrainingTable::from_rows(&["x"], &rows).unwrap();
        let cfg = LogitConfig {
            l2: 0.0,
            max_iter: 3,
            tol: 1e-12,
        };
        match fit_logit(&t, &cfg) {
            Err(LearnError::NonConvergence { iterations, .. }) => assert_eq!(iterations, 3),
            other => panic!("{other:?}"),
        }
    }
}
