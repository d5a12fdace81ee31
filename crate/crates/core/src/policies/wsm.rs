//! One-agent policy: weighted sum of a resilience and a greenness objective.

use serde::{Deserialize, Serialize};

use super::inverse;
use crate::error::{Error, Result};
use crate::evaluator::{ActionEstimate, ActionKind};

/// Objective weights `(w_r, w_g)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Weights {
    pub resilience: f64,
    pub greenness: f64,
}

impl Default for Weights {
    fn default() -> Self {
        Self {
            resilience: 0.5,
            greenness: 0.5,
        }
    }
}

impl Weights {
    pub fn validate(&self, field: &str) -> Result<()> {
        let ok = self.resilience >= 0.0 && self.greenness >= 0.0 && (self.resilience + self.greenness - 1.0).abs() < 1e-9;
        if ok {
            Ok(())
        } else {
            Err(Error::config(field, "weights must be non-negative and sum to 1"))
        }
    }
}

/// Divides every value by the Euclidean norm of the column.
pub fn l2_normalize(values: &[f64]) -> Result<Vec<f64>> {
    if values.is_empty() {
        return Err(Error::Empty("normalization column"));
    }
    let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm == 0.0 || !norm.is_finite() {
        return Err(Error::DegenerateColumn);
    }
    Ok(values.iter().map(|v| v / norm).collect())
}

/// Score of every action, in the order given.
pub fn wsm_scores(p_hat: f64, estimates: &[(ActionKind, ActionEstimate)], weights: Weights) -> Result<Vec<f64>> {
    let speed = l2_normalize(&estimates.iter().map(|(_, e)| inverse(e.run_time)).collect::<Vec<_>>())?;
    let budget = l2_normalize(&estimates.iter().map(|(_, e)| e.remaining_interactions as f64).collect::<Vec<_>>())?;
    let clean = l2_normalize(&estimates.iter().map(|(_, e)| inverse(e.co2)).collect::<Vec<_>>())?;
    Ok((0..estimates.len())
        .map(|i| weights.resilience * p_hat * speed[i] + weights.greenness * (1.0 - p_hat) * (budget[i] + clean[i]))
        .collect())
}

/// Arg-max of [`wsm_scores`]; ties go to the autonomous action.
pub fn wsm_select(p_hat: f64, estimates: &[(ActionKind, ActionEstimate)], weights: Weights) -> Result<ActionKind> {
    let scores = wsm_scores(p_hat, estimates, weights)?;
    let mut best: Option<(ActionKind, f64)> = None;
    for ((kind, _), score) in estimates.iter().zip(scores) {
        best = match best {
            Some((bk, bs)) if bs > score || (bs == score && bk <= *kind) => Some((bk, bs)),
            _ => Some((*kind, score)),
        };
    }
    best.map(|(k, _)| k).ok_or(Error::Empty("action set"))
}

/// Random consistency index for matrices of order 1..=10.
const RANDOM_INDEX: [f64; 10] = [0.0, 0.0, 0.58, 0.90, 1.12, 1.24, 1.32, 1.41, 1.45, 1.49];

#[derive(Debug, Clone, PartialEq)]
pub struct AhpResult {
    pub weights: Vec<f64>,
    pub lambda_max: f64,
    pub consistency_ratio: f64,
}

impl AhpResult {
    /// The customary acceptance rule, CR ≤ 0.1.
    pub fn is_consistent(&self) -> bool {
        self.consistency_ratio <= 0.1
    }
}

/// Priority weights of a pairwise comparison matrix and its consistency ratio.
pub fn ahp_weights(comparison: &[Vec<f64>]) -> Result<AhpResult> {
    let n = comparison.len();
    if n == 0 {
        return Err(Error::Empty("comparison matrix"));
    }
    if n > RANDOM_INDEX.len() {
        return Err(Error::UnsupportedSize(n));
    }
    for (i, row) in comparison.iter().enumerate() {
        if row.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                actual: row.len(),
            });
        }
        for (j, &a) in row.iter().enumerate() {
            let b = comparison[j][i];
            if !(a > 0.0 && a.is_finite()) || (a * b - 1.0).abs() > 1e-9 {
                return Err(Error::NonReciprocal { row: i, col: j });
            }
        }
    }

    let col_sums: Vec<f64> = (0..n).map(|j| comparison.iter().map(|r| r[j]).sum()).collect();
    let weights: Vec<f64> = comparison
        .iter()
        .map(|row| row.iter().zip(&col_sums).map(|(a, s)| a / s).sum::<f64>() / n as f64)
        .collect();

    let lambda_max = comparison
        .iter()
        .zip(&weights)
        .map(|(row, w)| row.iter().zip(&weights).map(|(a, x)| a * x).sum::<f64>() / w)
        .sum::<f64>()
        / n as f64;

    let consistency_ratio = if n <= 2 {
        0.0
    } else {
        let ci = (lambda_max - n as f64) / (n as f64 - 1.0);
        (ci / RANDOM_INDEX[n - 1]).max(0.0)
    };
    Ok(AhpResult {
        weights,
        lambda_max,
        consistency_ratio,
    })
}
