//! Autonomous classification ratio (ACR) and the operational-state machine.
//!
//! The ACR is the share of standalone decisions over the last `m` iterations.
//! Its time series drives a state machine that moves through
//! `Unstarted -> Steady -> PerformanceDegradation -> Recovering -> Recovered`
//! and then back to `Steady` with the cycle counter incremented.
//!
//! Rules applied per observed value `v` at iteration `i`:
//!
//! * `Unstarted`: `v == 1` enters `Steady` and sets `t0 = i`.
//! * `Steady`: `v == 0` enters `PerformanceDegradation` (checked first); the
//!   ACR threshold is fixed once, as `min(v[t0..te])`, falling back to
//!   `min(v[t0..i])` when no dip below the satisfactory level was recorded.
//!   Otherwise `v >= satisfactory` clears `te` and `v < satisfactory` sets `te = i`.
//! * `PerformanceDegradation`: always advances to `Recovering` (`ta = i`).
//! * `Recovering`: a value below the threshold restarts the candidate run;
//!   `Recovered` is entered once the run of values at or above the threshold
//!   is as long as the measured steady period `te - t0`.
//! * `Recovered`: returns to `Steady` and starts the next cycle.

use std::collections::VecDeque;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Sliding window of the last `m` decisions (1 = standalone, 0 = human).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AcrWindow {
    m: usize,
    queue: VecDeque<bool>,
    ones: usize,
}

impl AcrWindow {
    /// Window pre-filled with `m` zeros.
    pub fn new(m: usize) -> Self {
        assert!(m > 0, "window size must be positive");
        Self {
            m,
            queue: std::iter::repeat_n(false, m).collect(),
            ones: 0,
        }
    }

    pub fn size(&self) -> usize {
        self.m
    }

    /// Slides the window by one decision and returns the new ACR.
    pub fn record(&mut self, standalone: bool) -> f64 {
        if self.queue.pop_front() == Some(true) {
            self.ones -= 1;
        }
        self.queue.push_back(standalone);
        if standalone {
            self.ones += 1;
        }
        self.acr()
    }

    pub fn acr(&self) -> f64 {
        self.ones as f64 / self.m as f64
    }

    pub fn flags(&self) -> impl Iterator<Item = bool> + '_ {
        self.queue.iter().copied()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OperationalState {
    #[default]
    Unstarted,
    Steady,
    PerformanceDegradation,
    Recovering,
    Recovered,
}

impl OperationalState {
    pub fn code(self) -> i8 {
        match self {
            OperationalState::Unstarted => -1,
            OperationalState::Steady => 0,
            OperationalState::PerformanceDegradation => 1,
            OperationalState::Recovering => 2,
            OperationalState::Recovered => 3,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            OperationalState::Unstarted => "unstarted",
            OperationalState::Steady => "steady",
            OperationalState::PerformanceDegradation => "performance-degradation",
            OperationalState::Recovering => "recovering",
            OperationalState::Recovered => "recovered",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        use OperationalState::*;
        [Unstarted, Steady, PerformanceDegradation, Recovering, Recovered]
            .into_iter()
            .find(|st| st.name() == s)
    }
}

impl fmt::Display for OperationalState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AcrPoint {
    pub iteration: usize,
    pub acr: f64,
    pub state: OperationalState,
    pub cycle: u32,
}

/// Append-only ACR time series annotated with the evaluated state.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct AcrTrace {
    points: Vec<AcrPoint>,
}

impl AcrTrace {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, point: AcrPoint) -> Result<()> {
        if let Some(last) = self.points.last() {
            if point.iteration != last.iteration + 1 {
                return Err(Error::domain(
                    "trace iteration",
                    format!("{} does not follow {}", point.iteration, last.iteration),
                ));
            }
        }
        self.points.push(point);
        Ok(())
    }

    pub fn points(&self) -> &[AcrPoint] {
        &self.points
    }

    pub fn values(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.acr).collect()
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StateTracker {
    current: OperationalState,
    cycle: u32,
    satisfactory: f64,
    t0: usize,
    te: Option<usize>,
    ta: Option<usize>,
    tr: Option<usize>,
    recovered_flag: usize,
    required_run: usize,
    acr_threshold: Option<f64>,
    values: Vec<f64>,
}

impl Default for StateTracker {
    fn default() -> Self {
        Self::new(0.5)
    }
}

impl StateTracker {
    pub fn new(satisfactory: f64) -> Self {
        Self {
            current: OperationalState::Unstarted,
            cycle: 0,
            satisfactory,
            t0: 0,
            te: None,
            ta: None,
            tr: None,
            recovered_flag: 0,
            required_run: 0,
            acr_threshold: None,
            values: Vec::new(),
        }
    }

    pub fn current(&self) -> OperationalState {
        self.current
    }

    pub fn cycle(&self) -> u32 {
        self.cycle
    }

    pub fn satisfactory(&self) -> f64 {
        self.satisfactory
    }

    pub fn t0(&self) -> usize {
        self.t0
    }

    pub fn te(&self) -> Option<usize> {
        self.te
    }

    pub fn ta(&self) -> Option<usize> {
        self.ta
    }

    pub fn tr(&self) -> Option<usize> {
        self.tr
    }

    /// Length of the run at or above the threshold needed to count as recovered.
    pub fn required_run(&self) -> usize {
        self.required_run
    }

    /// The ACR threshold fixed at the first degradation.
    pub fn acr_threshold(&self) -> Result<f64> {
        self.acr_threshold.ok_or(Error::ThresholdUnavailable)
    }

    /// Number of values consumed so far.
    pub fn observed(&self) -> usize {
        self.values.len()
    }

    /// Catches up on every value of `series` not yet consumed and returns the
    /// resulting state.
    pub fn evaluate(&mut self, series: &[f64]) -> OperationalState {
        for &v in &series[self.values.len().min(series.len())..] {
            self.observe(v);
        }
        self.current
    }

    /// Consumes one ACR value.
    pub fn observe(&mut self, v: f64) -> OperationalState {
        use OperationalState::*;
        let i = self.values.len();
        self.values.push(v);
        match self.current {
            Unstarted => {
                if v == 1.0 {
                    self.current = Steady;
                    self.t0 = i;
                }
            }
            Steady => {
                if v == 0.0 {
                    self.current = PerformanceDegradation;
                    let end = match self.te {
                        Some(te) if te > self.t0 => te,
                        _ => i,
                    };
                    if self.acr_threshold.is_none() {
                        let min = self.values[self.t0..end].iter().copied().fold(f64::INFINITY, f64::min);
                        self.acr_threshold = Some(min);
                    }
                    self.required_run = (end - self.t0).max(1);
                } else if v >= self.satisfactory {
                    self.te = None;
                } else {
                    self.te = Some(i);
                }
            }
            PerformanceDegradation => {
                self.current = Recovering;
                self.ta = Some(i);
                self.tr = None;
                self.recovered_flag = i + 1;
            }
            Recovering => {
                let threshold = self.acr_threshold.unwrap_or(0.0);
                if v < threshold {
                    self.tr = None;
                    self.recovered_flag = i + 1;
                } else {
                    self.tr = Some(i);
                    if i + 1 - self.recovered_flag >= self.required_run {
                        self.current = Recovered;
                    }
                }
            }
            Recovered => {
                self.current = Steady;
                self.cycle += 1;
                self.t0 = i;
                self.te = None;
            }
        }
        self.current
    }
}

/// Runs a fresh tracker over a whole series, returning the state after each value.
pub fn evaluate_series(series: &[f64], satisfactory: f64) -> (Vec<(OperationalState, u32)>, StateTracker) {
    let mut tracker = StateTracker::new(satisfactory);
    let states = series
        .iter()
        .map(|&v| {
            let s = tracker.observe(v);
            (s, tracker.cycle())
        })
        .collect();
    (states, tracker)
}
