//! Online multinomial logistic regression trained one labeled instance at a time.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilityEstimate {
    pub probs: Vec<f64>,
    /// Maximum estimated probability.
    pub p_hat: f64,
    /// Index of the most probable class; lowest index wins ties.
    pub predicted: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LearnerParams {
    pub learning_rate: f64,
    pub l2_penalty: f64,
}

impl Default for LearnerParams {
    fn default() -> Self {
        Self {
            learning_rate: 0.05,
            l2_penalty: 1e-4,
        }
    }
}

impl LearnerParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::config("learner.learning_rate", "must be finite and non-negative"));
        }
        if !(self.l2_penalty >= 0.0 && self.l2_penalty.is_finite()) {
            return Err(Error::config("learner.l2_penalty", "must be finite and non-negative"));
        }
        Ok(())
    }
}

/// Linear softmax classifier with L2-regularized SGD updates.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearModel {
    n_classes: usize,
    n_features: usize,
    /// Row-major `n_classes x n_features`.
    weights: Vec<f64>,
    bias: Vec<f64>,
    params: LearnerParams,
    update_count: u64,
}

impl LinearModel {
    pub fn new(n_classes: usize, n_features: usize, params: LearnerParams) -> Self {
        Self {
            n_classes,
            n_features,
            weights: vec![0.0; n_classes * n_features],
            bias: vec![0.0; n_classes],
            params,
            update_count: 0,
        }
    }

    pub fn from_parts(weights: Vec<Vec<f64>>, bias: Vec<f64>, params: LearnerParams) -> Result<Self> {
        let n_classes = bias.len();
        let n_features = weights.first().map_or(0, Vec::len);
        if weights.len() != n_classes {
            return Err(Error::DimensionMismatch {
                expected: n_classes,
                actual: weights.len(),
            });
        }
        if let Some(row) = weights.iter().find(|r| r.len() != n_features) {
            return Err(Error::DimensionMismatch {
                expected: n_features,
                actual: row.len(),
            });
        }
        Ok(Self {
            n_classes,
            n_features,
            weights: weights.concat(),
            bias,
            params,
            update_count: 0,
        })
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn weight(&self, class: usize, feature: usize) -> f64 {
        self.weights[class * self.n_features + feature]
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    pub fn params(&self) -> LearnerParams {
        self.params
    }

    pub fn update_count(&self) -> u64 {
        self.update_count
    }

    fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.n_features {
            return Err(Error::DimensionMismatch {
                expected: self.n_features,
                actual: x.len(),
            });
        }
        Ok(())
    }

    fn logits(&self, x: &[f64]) -> Vec<f64> {
        self.weights
            .chunks_exact(self.n_features)
            .zip(&self.bias)
            .map(|(row, b)| row.iter().zip(x).map(|(w, xi)| w * xi).sum::<f64>() + b)
            .collect()
    }

    pub fn predict_proba(&self, x: &[f64]) -> Result<ProbabilityEstimate> {
        self.check_dim(x)?;
        let probs = softmax(&self.logits(x));
        let (predicted, p_hat) = probs
            .iter()
            .copied()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |best, (i, p)| if p > best.1 { (i, p) } else { best });
        Ok(ProbabilityEstimate {
            probs,
            p_hat,
            predicted,
        })
    }

    /// Gradient of the L2-regularized cross-entropy at `(x, label)`:
    /// `(probs - onehot) ⊗ x + l2 * W` for the weights, `probs - onehot` for the bias.
    pub fn gradient(&self, x: &[f64], label: usize) -> Result<(Vec<f64>, Vec<f64>)> {
        self.check_dim(x)?;
        if label >= self.n_classes {
            return Err(Error::domain("label", format!("{label} >= {}", self.n_classes)));
        }
        let mut residual = softmax(&self.logits(x));
        residual[label] -= 1.0;
        let l2 = self.params.l2_penalty;
        let grad_w = (0..self.n_classes)
            .flat_map(|k| {
                let r = residual[k];
                let row = &self.weights[k * self.n_features..(k + 1) * self.n_features];
                x.iter().zip(row).map(move |(xi, w)| r * xi + l2 * w)
            })
            .collect();
        Ok((grad_w, residual))
    }

    /// One SGD step on `(x, label)`.
    pub fn update(&mut self, x: &[f64], label: usize) -> Result<()> {
        let (grad_w, grad_b) = self.gradient(x, label)?;
        let lr = self.params.learning_rate;
        for (w, g) in self.weights.iter_mut().zip(&grad_w) {
            *w -= lr * g;
        }
        for (b, g) in self.bias.iter_mut().zip(&grad_b) {
            *b -= lr * g;
        }
        self.update_count += 1;
        Ok(())
    }

    /// One row per class: bias followed by weights.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("class,bias");
        for j in 0..self.n_features {
            let _ = write!(out, ",w{j}");
        }
        out.push('\n');
        for k in 0..self.n_classes {
            let _ = write!(out, "{k},{}", self.bias[k]);
            for j in 0..self.n_features {
                let _ = write!(out, ",{}", self.weight(k, j));
            }
            out.push('\n');
        }
        out
    }
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Minimum maximum-probability for an autonomous decision with `n` classes:
/// `1/n + 0.5 * 10^-(floor(log10 n) + 1)`.
pub fn confidence_threshold(n: usize) -> Result<f64> {
    if n <= 1 {
        return Err(Error::domain("class count", format!("{n} must exceed 1")));
    }
    // floor(log10 n) + 1 is the decimal digit count of n.
    let digits = n.to_string().len() as i32;
    Ok(1.0 / n as f64 + 0.5 * 10f64.powi(-digits))
}
