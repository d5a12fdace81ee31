//! Decision-making policies used while the system is recovering.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evaluator::ActionKind;

pub mod game;
pub mod rl;
pub mod wsm;

pub use game::{build_payoff_matrix, find_psne, game_select, solve_msne, Equilibrium, PayoffMatrix};
pub use rl::{q_update, rl_reward, rl_state, ActionVector, AvEntry, QTable, RlAgent, RlParams, StateKey};
pub use wsm::{ahp_weights, l2_normalize, wsm_scores, wsm_select, AhpResult, Weights};

/// Floor applied to denominators before taking reciprocals of estimates.
pub const INVERSE_FLOOR: f64 = 1e-9;

pub(crate) fn inverse(x: f64) -> f64 {
    1.0 / x.max(INVERSE_FLOOR)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PolicyKind {
    #[serde(rename = "internal")]
    Internal,
    #[serde(rename = "one-agent")]
    OneAgent,
    #[serde(rename = "two-agent")]
    TwoAgent,
    #[serde(rename = "rl-agent")]
    RlAgent,
}

impl PolicyKind {
    pub const ALL: [PolicyKind; 4] = [
        PolicyKind::Internal,
        PolicyKind::OneAgent,
        PolicyKind::TwoAgent,
        PolicyKind::RlAgent,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PolicyKind::Internal => "internal",
            PolicyKind::OneAgent => "one-agent",
            PolicyKind::TwoAgent => "two-agent",
            PolicyKind::RlAgent => "rl-agent",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| Error::UnknownPolicy(s.to_string()))
    }
}

impl fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for PolicyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::parse(s)
    }
}

/// The model's own rule: act alone when confident enough.
pub fn internal_select(p_hat: f64, k: f64) -> ActionKind {
    if p_hat >= k {
        ActionKind::Autonomous
    } else {
        ActionKind::Human
    }
}
