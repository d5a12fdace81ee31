use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evaluator::EvaluatorParams;
use crate::learner::LearnerParams;
use crate::policies::{PolicyKind, RlParams, Weights};
use crate::simulator::{ClassOrder, Disruptor, ObjectPalette};

pub const CONFIG_VERSION: u32 = 1;

/// Iterations allowed per disruption cycle before a run is cut off.
pub const BUDGET_PER_CYCLE: usize = 600;

/// Who decides when disruptions start and end.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScheduleMode {
    /// Inject at `disrupt_start`, fix per the fix rule, repeat for `cycles`.
    #[default]
    Auto,
    /// Only explicit inject/fix commands change the feed; the run ends at the budget.
    Manual,
}

/// Everything that defines a run. Serialized as JSON; every field has a default.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub version: u32,
    pub seed: u64,
    /// ACR window size.
    pub m: usize,
    pub steady_len: usize,
    /// Support policy used while recovering.
    pub policy: PolicyKind,
    pub disruptor: Disruptor,
    pub n_classes: usize,
    pub schedule: ScheduleMode,
    /// First disrupted iteration; defaults to `steady_len`.
    pub disrupt_start: Option<usize>,
    /// Explicit fix iteration for the first disruption. Later cycles reuse the
    /// same window length. When unset the fix comes `steady_len` iterations
    /// after recovery, or at `disrupt_start + 2 * steady_len` without one.
    pub fix_at: Option<usize>,
    /// Consecutive standalone decisions after which support stops; defaults to `m`.
    pub stop_support_after: Option<usize>,
    pub cycles: usize,
    /// Hard iteration cap; defaults to 600 per cycle.
    pub iteration_budget: Option<usize>,
    pub satisfactory: f64,
    pub class_order: ClassOrder,
    pub palette: ObjectPalette,
    pub learner: LearnerParams,
    pub evaluator: EvaluatorParams,
    /// One-agent objective weights.
    pub weights: Weights,
    pub rl: RlParams,
    /// Pacing of service-driven runs; batch runs ignore it.
    pub iterations_per_second: f64,
    pub output_dir: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            version: CONFIG_VERSION,
            seed: 42,
            m: 5,
            steady_len: 30,
            policy: PolicyKind::Internal,
            disruptor: Disruptor::default(),
            n_classes: 3,
            schedule: ScheduleMode::Auto,
            disrupt_start: None,
            fix_at: None,
            stop_support_after: None,
            cycles: 1,
            iteration_budget: None,
            satisfactory: 0.5,
            class_order: ClassOrder::RoundRobin,
            palette: ObjectPalette::default(),
            learner: LearnerParams::default(),
            evaluator: EvaluatorParams::default(),
            weights: Weights::default(),
            rl: RlParams::default(),
            iterations_per_second: 20.0,
            output_dir: None,
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config is always serializable")
    }

    pub fn disrupt_start(&self) -> usize {
        self.disrupt_start.unwrap_or(self.steady_len)
    }

    pub fn stop_support_after(&self) -> usize {
        self.stop_support_after.unwrap_or(self.m)
    }

    pub fn iteration_budget(&self) -> usize {
        self.iteration_budget.unwrap_or(BUDGET_PER_CYCLE * self.cycles.max(1))
    }

    /// Checks every field; the error names the first offending one.
    pub fn validate(&self) -> Result<()> {
        if self.version != CONFIG_VERSION {
            return Err(Error::config("version", format!("unsupported version {}, expected {CONFIG_VERSION}", self.version)));
        }
        if self.m == 0 {
            return Err(Error::config("m", "window size must be at least 1"));
        }
        if self.steady_len < self.m {
            return Err(Error::config("steady_len", "must be at least m"));
        }
        if !(2..=3).contains(&self.n_classes) {
            return Err(Error::config("n_classes", "must be 2 or 3"));
        }
        if self.cycles == 0 {
            return Err(Error::config("cycles", "must be at least 1"));
        }
        if self.disrupt_start() < self.steady_len {
            return Err(Error::config("disrupt_start", "must not precede the end of the steady period"));
        }
        if let Some(fix) = self.fix_at {
            if fix <= self.disrupt_start() {
                return Err(Error::config("fix_at", "must come after disrupt_start"));
            }
        }
        if self.stop_support_after() == 0 {
            return Err(Error::config("stop_support_after", "must be at least 1"));
        }
        if self.iteration_budget() == 0 {
            return Err(Error::config("iteration_budget", "must be at least 1"));
        }
        if !(self.satisfactory > 0.0 && self.satisfactory <= 1.0) {
            return Err(Error::config("satisfactory", "must lie in (0, 1]"));
        }
        if !(self.iterations_per_second > 0.0 && self.iterations_per_second.is_finite()) {
            return Err(Error::config("iterations_per_second", "must be positive"));
        }
        self.disruptor.validate()?;
        self.palette.validate()?;
        self.learner.validate()?;
        self.evaluator.validate()?;
        self.weights.validate("weights")?;
        self.rl.validate()
    }
}
