//! Recovery speed, steadiness, green efficiency and autonomy of a disruptive state.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::resilience::OperationalState;

/// Index ranges of one state-machine cycle. All ranges are half-open.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CycleSegments {
    pub cycle: u32,
    pub steady: Option<Range<usize>>,
    pub degradation: Option<Range<usize>>,
    pub recovering: Option<Range<usize>>,
    pub recovered: Option<Range<usize>>,
    /// From the first degradation label through the last recovered label, or
    /// through the closing point when the cycle never recovered.
    pub disruptive: Option<Range<usize>>,
    pub did_recover: bool,
}

impl CycleSegments {
    pub fn named(&self) -> [(&'static str, Option<&Range<usize>>); 5] {
        [
            ("steady", self.steady.as_ref()),
            ("performance-degradation", self.degradation.as_ref()),
            ("recovering", self.recovering.as_ref()),
            ("recovered", self.recovered.as_ref()),
            ("disruptive", self.disruptive.as_ref()),
        ]
    }

    fn len_of(r: &Option<Range<usize>>) -> usize {
        r.as_ref().map_or(0, |r| r.len())
    }

    pub fn recovering_len(&self) -> usize {
        Self::len_of(&self.recovering)
    }

    pub fn disruptive_len(&self) -> usize {
        Self::len_of(&self.disruptive)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StateSegments {
    pub cycles: Vec<CycleSegments>,
}

fn span(labels: &[(OperationalState, u32)], window: Range<usize>, cycle: u32, state: OperationalState) -> Option<Range<usize>> {
    let mut hits = window.filter(|&i| labels[i] == (state, cycle));
    let first = hits.next()?;
    let last = hits.next_back().unwrap_or(first);
    Some(first..last + 1)
}

impl StateSegments {
    /// Splits per-iteration `(state, cycle)` labels into segments.
    ///
    /// A cycle that degrades but never recovers is closed at the first entry of
    /// `close_points` after its degradation (typically the fix event), or at the
    /// end of the trace.
    pub fn from_labels(labels: &[(OperationalState, u32)], close_points: &[usize]) -> Self {
        let Some(last_cycle) = labels.iter().map(|l| l.1).max() else {
            return Self::default();
        };
        let all = 0..labels.len();
        let cycles = (0..=last_cycle)
            .map(|cycle| {
                let steady = span(labels, all.clone(), cycle, OperationalState::Steady);
                let degradation = span(labels, all.clone(), cycle, OperationalState::PerformanceDegradation);
                let recovered = span(labels, all.clone(), cycle, OperationalState::Recovered);
                let did_recover = recovered.is_some();
                let disruptive = degradation.as_ref().map(|d| {
                    let end = match &recovered {
                        Some(r) => r.end,
                        None => close_points
                            .iter()
                            .copied()
                            .filter(|&p| p > d.start)
                            .min()
                            .unwrap_or(labels.len())
                            .min(labels.len()),
                    };
                    d.start..end
                });
                let recovering = disruptive
                    .clone()
                    .and_then(|w| span(labels, w, cycle, OperationalState::Recovering));
                CycleSegments {
                    cycle,
                    steady,
                    degradation,
                    recovering,
                    recovered,
                    disruptive,
                    did_recover,
                }
            })
            .collect();
        Self { cycles }
    }

    pub fn cycle(&self, cycle: u32) -> Option<&CycleSegments> {
        self.cycles.iter().find(|c| c.cycle == cycle)
    }

    /// Cycles that contain a disruptive state.
    pub fn disruptive_cycles(&self) -> impl Iterator<Item = &CycleSegments> {
        self.cycles.iter().filter(|c| c.disruptive.is_some())
    }
}

/// `|Recovering| / |Disruptive|`.
pub fn duration_ratio(segments: &CycleSegments) -> Result<f64> {
    let d = segments.disruptive_len();
    if d == 0 {
        return Err(Error::Empty("disruptive state"));
    }
    Ok(segments.recovering_len() as f64 / d as f64)
}

/// Points below the threshold over points at or above it (denominator floored at 1).
pub fn fluctuation_ratio(acr: &[f64], threshold: f64) -> f64 {
    let below = acr.iter().filter(|&&v| v < threshold).count();
    let above = acr.len() - below;
    below as f64 / above.max(1) as f64
}

pub fn co2_mean(co2: &[f64]) -> Result<f64> {
    if co2.is_empty() {
        return Err(Error::Empty("disruptive state"));
    }
    Ok(co2.iter().sum::<f64>() / co2.len() as f64)
}

pub fn human_dependency(interactions: &[u32]) -> Result<f64> {
    if interactions.is_empty() {
        return Err(Error::Empty("disruptive state"));
    }
    Ok(interactions.iter().map(|&h| h as f64).sum::<f64>() / interactions.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub policy: String,
    pub seed: u64,
    pub cycle: u32,
    pub duration_ratio: f64,
    pub fluctuation_ratio: f64,
    pub co2_mean: f64,
    pub human_dependency: f64,
}

impl MetricsReport {
    /// The four metrics over one cycle's disruptive state. `acr`, `co2` and
    /// `interactions` are whole-trace columns.
    pub fn compute(
        policy: &str,
        seed: u64,
        segments: &CycleSegments,
        acr: &[f64],
        co2: &[f64],
        interactions: &[u32],
        threshold: f64,
    ) -> Result<Self> {
        let w = segments.disruptive.clone().ok_or(Error::Empty("disruptive state"))?;
        Ok(Self {
            policy: policy.to_string(),
            seed,
            cycle: segments.cycle,
            duration_ratio: duration_ratio(segments)?,
            fluctuation_ratio: fluctuation_ratio(&acr[w.clone()], threshold),
            co2_mean: co2_mean(&co2[w.clone()])?,
            human_dependency: human_dependency(&interactions[w])?,
        })
    }

    pub fn values(&self) -> [f64; 4] {
        [self.duration_ratio, self.fluctuation_ratio, self.co2_mean, self.human_dependency]
    }
}

/// Metric names in report column order.
pub const METRIC_NAMES: [&str; 4] = ["duration_ratio", "fluctuation_ratio", "co2_mean", "human_dependency"];

/// Per-policy mean of each metric; lower is better for all four.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyComparison {
    pub policy: String,
    pub reports: usize,
    pub duration_ratio: f64,
    pub fluctuation_ratio: f64,
    pub co2_mean: f64,
    pub human_dependency: f64,
}

impl PolicyComparison {
    pub fn values(&self) -> [f64; 4] {
        [self.duration_ratio, self.fluctuation_ratio, self.co2_mean, self.human_dependency]
    }
}

/// Groups reports by policy, keeping the order in which policies first appear.
pub fn group_by_policy(reports: &[MetricsReport]) -> Vec<(String, Vec<MetricsReport>)> {
    let mut groups: Vec<(String, Vec<MetricsReport>)> = Vec::new();
    for r in reports {
        match groups.iter_mut().find(|(p, _)| *p == r.policy) {
            Some((_, v)) => v.push(r.clone()),
            None => groups.push((r.policy.clone(), vec![r.clone()])),
        }
    }
    groups
}

pub fn compare_policies(groups: &[(String, Vec<MetricsReport>)]) -> Vec<PolicyComparison> {
    groups
        .iter()
        .filter_map(|(policy, reports)| {
            if reports.is_empty() {
                log::warn!("policy `{policy}` has no reports; left out of the comparison");
                return None;
            }
            let n = reports.len() as f64;
            let mut sums = [0.0; 4];
            for r in reports {
                for (s, v) in sums.iter_mut().zip(r.values()) {
                    *s += v;
                }
            }
            Some(PolicyComparison {
                policy: policy.clone(),
                reports: reports.len(),
                duration_ratio: sums[0] / n,
                fluctuation_ratio: sums[1] / n,
                co2_mean: sums[2] / n,
                human_dependency: sums[3] / n,
            })
        })
        .collect()
}
