//! Per-action resilience and greenness estimates.
//!
//! Run time and CO2 are tracked with exponential smoothing; the human
//! interaction budget is tracked as a remaining count.

use std::fmt;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ActionKind {
    /// Classify the instance without help.
    Autonomous,
    /// Ask the human to classify it (and learn from the answer).
    Human,
}

impl ActionKind {
    pub const ALL: [ActionKind; 2] = [ActionKind::Autonomous, ActionKind::Human];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            ActionKind::Autonomous => "autonomous",
            ActionKind::Human => "human",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|a| a.name() == s)
    }
}

impl fmt::Display for ActionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Observed cost of one actuation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ActionAttributes {
    /// Seconds.
    pub run_time: f64,
    /// kgCO2eq.
    pub co2: f64,
    pub human_interactions: u32,
}

/// Forecast for the coming iteration: `(t̂', ĉ', h')`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ActionEstimate {
    pub run_time: f64,
    pub co2: f64,
    pub remaining_interactions: i64,
}

impl ActionEstimate {
    pub fn budget_exceeded(&self) -> bool {
        self.remaining_interactions < 0
    }
}

/// Mean and standard deviation of a normal draw.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Gaussian {
    pub mean: f64,
    pub sd: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ActionProfile {
    /// Run time in seconds.
    pub run_time: Gaussian,
    /// Energy in kWh.
    pub energy: Gaussian,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EnergyModel {
    /// gCO2 per kWh.
    pub carbon_intensity: f64,
    pub autonomous: ActionProfile,
    pub human: ActionProfile,
}

/// Italy, 2023.
pub const DEFAULT_CARBON_INTENSITY: f64 = 330.718;

/// Lower bound applied to sampled run times and energies.
pub const SAMPLE_FLOOR: f64 = 1e-12;

impl Default for EnergyModel {
    fn default() -> Self {
        Self {
            carbon_intensity: DEFAULT_CARBON_INTENSITY,
            autonomous: ActionProfile {
                run_time: Gaussian { mean: 1.0, sd: 0.0 },
                energy: Gaussian { mean: 1e-6, sd: 1e-7 },
            },
            human: ActionProfile {
                run_time: Gaussian { mean: 5.0, sd: 0.0 },
                energy: Gaussian { mean: 3e-6, sd: 3e-7 },
            },
        }
    }
}

impl EnergyModel {
    pub fn validate(&self) -> Result<()> {
        if !(self.carbon_intensity > 0.0 && self.carbon_intensity.is_finite()) {
            return Err(Error::config("evaluator.energy.carbon_intensity", "must be positive"));
        }
        for (name, p) in [("autonomous", &self.autonomous), ("human", &self.human)] {
            for (what, g) in [("run_time", p.run_time), ("energy", p.energy)] {
                if !(g.mean > 0.0 && g.sd >= 0.0 && g.mean.is_finite() && g.sd.is_finite()) {
                    return Err(Error::config(
                        format!("evaluator.energy.{name}.{what}"),
                        "mean must be positive and sd non-negative",
                    ));
                }
            }
        }
        Ok(())
    }

    pub fn profile(&self, kind: ActionKind) -> &ActionProfile {
        match kind {
            ActionKind::Autonomous => &self.autonomous,
            ActionKind::Human => &self.human,
        }
    }

    /// kWh to kgCO2eq.
    pub fn co2_kg(&self, energy_kwh: f64) -> f64 {
        energy_kwh * self.carbon_intensity / 1000.0
    }
}

fn draw<R: Rng + ?Sized>(g: Gaussian, rng: &mut R) -> f64 {
    if g.sd == 0.0 {
        return g.mean.max(SAMPLE_FLOOR);
    }
    Normal::new(g.mean, g.sd)
        .expect("sd validated non-negative")
        .sample(rng)
        .max(SAMPLE_FLOOR)
}

/// Simulated measurement of one action.
pub fn sample_attributes<R: Rng + ?Sized>(kind: ActionKind, energy: &EnergyModel, rng: &mut R) -> ActionAttributes {
    let profile = energy.profile(kind);
    let run_time = draw(profile.run_time, rng);
    let kwh = draw(profile.energy, rng);
    ActionAttributes {
        run_time,
        co2: energy.co2_kg(kwh),
        human_interactions: match kind {
            ActionKind::Autonomous => 0,
            ActionKind::Human => 1,
        },
    }
}

/// `prev + alpha * (observed - prev)`.
pub fn smooth(prev_estimate: f64, observed: f64, alpha: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::domain("smoothing constant", format!("{alpha} is outside (0, 1]")));
    }
    Ok(prev_estimate + alpha * (observed - prev_estimate))
}

/// `h_max - h_done - h`; negative when the budget is overdrawn.
pub fn remaining_interactions(h_max: u32, h_done: u32, h: u32) -> i64 {
    h_max as i64 - h_done as i64 - h as i64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvaluatorParams {
    pub smoothing_alpha: f64,
    pub h_max: u32,
    pub energy: EnergyModel,
}

impl Default for EvaluatorParams {
    fn default() -> Self {
        Self {
            smoothing_alpha: 0.5,
            h_max: 1000,
            energy: EnergyModel::default(),
        }
    }
}

impl EvaluatorParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.smoothing_alpha > 0.0 && self.smoothing_alpha <= 1.0) {
            return Err(Error::config("evaluator.smoothing_alpha", "must lie in (0, 1]"));
        }
        self.energy.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Smoothed {
    run_time: f64,
    co2: f64,
}

/// Running estimates for both feasible actions.
#[derive(Debug, Clone, PartialEq)]
pub struct ActionEvaluator {
    alpha: f64,
    h_max: u32,
    h_done: u32,
    slots: [Option<Smoothed>; 2],
}

impl ActionEvaluator {
    pub fn new(alpha: f64, h_max: u32) -> Result<Self> {
        if !(alpha > 0.0 && alpha <= 1.0) {
            return Err(Error::domain("smoothing constant", format!("{alpha} is outside (0, 1]")));
        }
        Ok(Self {
            alpha,
            h_max,
            h_done: 0,
            slots: [None, None],
        })
    }

    pub fn human_interactions_done(&self) -> u32 {
        self.h_done
    }

    /// Folds in one observation for `kind`; the first observation seeds the estimate.
    pub fn observe(&mut self, kind: ActionKind, attrs: &ActionAttributes) {
        let alpha = self.alpha;
        let slot = &mut self.slots[kind.index()];
        *slot = Some(match *slot {
            None => Smoothed {
                run_time: attrs.run_time,
                co2: attrs.co2,
            },
            Some(prev) => Smoothed {
                run_time: prev.run_time + alpha * (attrs.run_time - prev.run_time),
                co2: prev.co2 + alpha * (attrs.co2 - prev.co2),
            },
        });
    }

    /// Books the interactions of an actuated action against the budget.
    pub fn actuated(&mut self, attrs: &ActionAttributes) {
        self.h_done += attrs.human_interactions;
    }

    pub fn estimate(&self, kind: ActionKind) -> Option<ActionEstimate> {
        let s = self.slots[kind.index()]?;
        let h = match kind {
            ActionKind::Autonomous => 0,
            ActionKind::Human => 1,
        };
        Some(ActionEstimate {
            run_time: s.run_time,
            co2: s.co2,
            remaining_interactions: remaining_interactions(self.h_max, self.h_done, h),
        })
    }

    /// Estimates for both actions, `None` until each has been observed once.
    pub fn estimates(&self) -> Option<[ActionEstimate; 2]> {
        Some([self.estimate(ActionKind::Autonomous)?, self.estimate(ActionKind::Human)?])
    }
}

/// One evaluation round: fold the latest observations into the per-action
/// estimates and return the forecast set.
pub fn evaluate_actions(evaluator: &mut ActionEvaluator, latest: &[(ActionKind, ActionAttributes)]) -> Vec<(ActionKind, ActionEstimate)> {
    for (kind, attrs) in latest {
        evaluator.observe(*kind, attrs);
    }
    ActionKind::ALL
        .into_iter()
        .filter_map(|k| evaluator.estimate(k).map(|e| (k, e)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn smoothing_examples() {
        assert_eq!(smooth(2.0, 4.0, 0.5).unwrap(), 3.0);
        assert_eq!(smooth(7.25, 7.25, 0.3).unwrap(), 7.25);
        assert!(smooth(1.0, 2.0, 0.0).is_err());
        assert!(smooth(1.0, 2.0, 1.5).is_err());
    }

    #[test]
    fn smoothing_error_halves() {
        let target = 10.0f64;
        let mut est = 2.0;
        let mut err = (target - est).abs();
        for _ in 0..20 {
            est = smooth(est, target, 0.5).unwrap();
            let e = (target - est).abs();
            assert!((e - err / 2.0).abs() < 1e-12);
            err = e;
        }
    }

    #[test]
    fn remaining_examples() {
        assert_eq!(remaining_interactions(100, 0, 0), 100);
        assert_eq!(remaining_interactions(100, 10, 1), 89);
        assert_eq!(remaining_interactions(5, 5, 1), -1);
    }

    #[test]
    fn co2_conversion_at_mean() {
        let mut energy = EnergyModel::default();
        energy.human.energy = Gaussian { mean: 1e-5, sd: 0.0 };
        let attrs = sample_attributes(ActionKind::Human, &energy, &mut ChaCha8Rng::seed_from_u64(0));
        assert!((attrs.co2 - 1e-5 * 330.718 / 1000.0).abs() < 1e-18);
        assert!((attrs.co2 - 3.307e-6).abs() < 1e-9);
        assert_eq!(attrs.human_interactions, 1);
    }

    #[test]
    fn zero_sd_returns_means() {
        let mut energy = EnergyModel::default();
        energy.autonomous.energy.sd = 0.0;
        let attrs = sample_attributes(ActionKind::Autonomous, &energy, &mut ChaCha8Rng::seed_from_u64(9));
        assert_eq!(attrs.run_time, 1.0);
        assert_eq!(attrs.co2, energy.co2_kg(1e-6));
        assert_eq!(attrs.human_interactions, 0);
    }

    #[test]
    fn sampling_is_deterministic() {
        let e = EnergyModel::default();
        let run = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..10)
                .map(|k| sample_attributes(ActionKind::ALL[k % 2], &e, &mut rng))
                .collect::<Vec<_>>()
        };
        assert_eq!(run(4), run(4));
    }

    #[test]
    fn evaluator_seeds_then_smooths() {
        let mut ev = ActionEvaluator::new(0.5, 1000).unwrap();
        let a = |t| ActionAttributes {
            run_time: t,
            co2: 0.0,
            human_interactions: 0,
        };
        let est = evaluate_actions(&mut ev, &[(ActionKind::Autonomous, a(2.0))]);
        assert_eq!(est.len(), 1);
        assert_eq!(est[0].1.run_time, 2.0);
        let est = evaluate_actions(&mut ev, &[(ActionKind::Autonomous, a(4.0))]);
        assert_eq!(est[0].1.run_time, 3.0);
    }

    #[test]
    fn ten_step_sequence_matches_closed_form() {
        // Closed form with seed x0: e_n = (1-a)^n x0 + sum_{k=1..n} a (1-a)^(n-k) x_k
        let xs = [3.0, 1.5, 7.0, 2.25, 4.0, 9.5, 0.5, 6.0, 2.0, 5.5];
        let alpha = 0.5;
        let mut ev = ActionEvaluator::new(alpha, 10).unwrap();
        for &x in &xs {
            ev.observe(
                ActionKind::Human,
                &ActionAttributes {
                    run_time: x,
                    co2: x * 1e-6,
                    human_interactions: 1,
                },
            );
        }
        let n = xs.len() - 1;
        let closed: f64 = (1.0f64 - alpha).powi(n as i32) * xs[0]
            + (1..=n).map(|k| alpha * (1.0f64 - alpha).powi((n - k) as i32) * xs[k]).sum::<f64>();
        let est = ev.estimate(ActionKind::Human).unwrap();
        assert!((est.run_time - closed).abs() < 1e-12);
        assert!((est.co2 - closed * 1e-6).abs() < 1e-18);
    }

    #[test]
    fn budget_moves_only_on_human_actions() {
        let mut ev = ActionEvaluator::new(0.5, 3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let e = EnergyModel::default();
        for k in ActionKind::ALL {
            ev.observe(k, &sample_attributes(k, &e, &mut rng));
        }
        let before = ev.estimate(ActionKind::Human).unwrap().remaining_interactions;
        ev.actuated(&sample_attributes(ActionKind::Autonomous, &e, &mut rng));
        assert_eq!(ev.estimate(ActionKind::Human).unwrap().remaining_interactions, before);
        for _ in 0..3 {
            ev.actuated(&sample_attributes(ActionKind::Human, &e, &mut rng));
        }
        let after = ev.estimate(ActionKind::Human).unwrap();
        assert_eq!(after.remaining_interactions, before - 3);
        assert!(after.budget_exceeded());
    }

    proptest! {
        #[test]
        fn smoothing_is_convex(prev in -1e3f64..1e3, obs in -1e3f64..1e3, alpha in 1e-6f64..=1.0) {
            let s = smooth(prev, obs, alpha).unwrap();
            prop_assert!(s >= prev.min(obs) - 1e-9 && s <= prev.max(obs) + 1e-9);
        }
    }
}
