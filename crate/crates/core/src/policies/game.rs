//! Two-agent policy: a 2×2 bimatrix game between a resilience player (rows)
//! and a greenness player (columns).
//!
//! Mixed equilibria follow the textbook Battle of Sexes convention: `p` is the
//! probability that the row player picks the first action, `q` the probability
//! that the column player does. `q` is whatever makes the row player
//! indifferent, `p` whatever makes the column player indifferent.

use serde::{Deserialize, Serialize};

use super::{internal_select, inverse, l2_normalize};
use crate::error::{Error, Result};
use crate::evaluator::{ActionEstimate, ActionKind};

/// Payoff magnifier when both players pick the same action.
pub const MATCH_INDEX: f64 = 2.0;
/// Payoff magnifier when they disagree.
pub const MISMATCH_INDEX: f64 = 1.0;

/// `cells[row][col] = (row payoff, column payoff)`, indexed by [`ActionKind::index`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PayoffMatrix {
    pub cells: [[(f64, f64); 2]; 2],
}

impl PayoffMatrix {
    pub fn new(cells: [[(f64, f64); 2]; 2]) -> Self {
        Self { cells }
    }

    /// Builds a matrix from separate row-player and column-player tables.
    pub fn from_tables(row: [[f64; 2]; 2], col: [[f64; 2]; 2]) -> Self {
        let mut cells = [[(0.0, 0.0); 2]; 2];
        for i in 0..2 {
            for j in 0..2 {
                cells[i][j] = (row[i][j], col[i][j]);
            }
        }
        Self { cells }
    }

    pub fn row_payoff(&self, i: usize, j: usize) -> f64 {
        self.cells[i][j].0
    }

    pub fn col_payoff(&self, i: usize, j: usize) -> f64 {
        self.cells[i][j].1
    }

    pub fn combined(&self, i: usize, j: usize) -> f64 {
        self.cells[i][j].0 + self.cells[i][j].1
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Equilibrium {
    Pure { row: ActionKind, col: ActionKind },
    Mixed { p: f64, q: f64 },
}

fn ordered(estimates: &[(ActionKind, ActionEstimate)]) -> Result<[ActionEstimate; 2]> {
    let mut out: [Option<ActionEstimate>; 2] = [None, None];
    for (k, e) in estimates {
        out[k.index()] = Some(*e);
    }
    match (estimates.len(), out) {
        (2, [Some(a), Some(h)]) => Ok([a, h]),
        _ => Err(Error::DimensionMismatch {
            expected: 2,
            actual: estimates.len(),
        }),
    }
}

/// Payoffs from the current confidence and per-action estimates.
pub fn build_payoff_matrix(p_hat: f64, estimates: &[(ActionKind, ActionEstimate)]) -> Result<PayoffMatrix> {
    let e = ordered(estimates)?;
    let speed = l2_normalize(&[inverse(e[0].run_time), inverse(e[1].run_time)])?;
    let budget = l2_normalize(&[
        inverse(e[0].remaining_interactions as f64),
        inverse(e[1].remaining_interactions as f64),
    ])?;
    let clean = l2_normalize(&[inverse(e[0].co2), inverse(e[1].co2)])?;

    let mut cells = [[(0.0, 0.0); 2]; 2];
    for (i, row) in cells.iter_mut().enumerate() {
        for (j, cell) in row.iter_mut().enumerate() {
            let beta = if i == j { MATCH_INDEX } else { MISMATCH_INDEX };
            *cell = (
                beta * p_hat * speed[i],
                beta * (1.0 - p_hat) * budget[j] * clean[j],
            );
        }
    }
    Ok(PayoffMatrix { cells })
}

/// Every cell from which neither player gains by deviating alone.
pub fn find_psne(m: &PayoffMatrix) -> Vec<(ActionKind, ActionKind)> {
    let mut out = Vec::new();
    for i in 0..2 {
        for j in 0..2 {
            let row_best = (0..2).all(|k| m.row_payoff(i, j) >= m.row_payoff(k, j));
            let col_best = (0..2).all(|k| m.col_payoff(i, j) >= m.col_payoff(i, k));
            if row_best && col_best {
                out.push((ActionKind::ALL[i], ActionKind::ALL[j]));
            }
        }
    }
    out
}

fn probability(num: f64, den: f64) -> Result<f64> {
    const TOL: f64 = 1e-12;
    if den == 0.0 {
        return Err(Error::NoInteriorSolution);
    }
    let x = num / den;
    if !x.is_finite() || !(-TOL..=1.0 + TOL).contains(&x) {
        return Err(Error::NoInteriorSolution);
    }
    Ok(x.clamp(0.0, 1.0))
}

/// Mixed equilibrium by equating each player's expected payoffs.
pub fn solve_msne(m: &PayoffMatrix) -> Result<Equilibrium> {
    let r = |i, j| m.row_payoff(i, j);
    let c = |i, j| m.col_payoff(i, j);
    let q = probability(r(1, 1) - r(0, 1), r(0, 0) - r(0, 1) - r(1, 0) + r(1, 1))?;
    let p = probability(c(1, 1) - c(1, 0), c(0, 0) - c(1, 0) - c(0, 1) + c(1, 1))?;
    Ok(Equilibrium::Mixed { p, q })
}

/// Action chosen by the two-agent policy.
///
/// Diagonal pure equilibria win, the one with the largest combined payoff
/// first. Without one, the cell with the highest joint mixed probability is
/// played (ties by combined payoff, then towards autonomy) and its row action
/// returned. If no mixed equilibrium exists either, the internal rule decides.
pub fn game_select(m: &PayoffMatrix, p_hat: f64, k: f64) -> ActionKind {
    let diagonal = find_psne(m).into_iter().filter(|(r, c)| r == c).map(|(r, _)| r);
    let mut best: Option<(ActionKind, f64)> = None;
    for a in diagonal {
        let sum = m.combined(a.index(), a.index());
        if best.is_none_or(|(_, s)| sum > s) {
            best = Some((a, sum));
        }
    }
    if let Some((a, _)) = best {
        return a;
    }

    let Ok(Equilibrium::Mixed { p, q }) = solve_msne(m) else {
        return internal_select(p_hat, k);
    };
    let row_prob = [p, 1.0 - p];
    let col_prob = [q, 1.0 - q];
    let mut best = (0usize, 0usize);
    for i in 0..2 {
        for j in 0..2 {
            if (i, j) == (0, 0) {
                continue;
            }
            let cand = row_prob[i] * col_prob[j];
            let cur = row_prob[best.0] * col_prob[best.1];
            if cand > cur || (cand == cur && m.combined(i, j) > m.combined(best.0, best.1)) {
                best = (i, j);
            }
        }
    }
    ActionKind::ALL[best.0]
}
