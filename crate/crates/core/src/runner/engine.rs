use std::collections::VecDeque;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, ScheduleMode};
use super::record::IterationRecord;
use crate::error::{Error, Result};
use crate::evaluator::{sample_attributes, ActionEvaluator, ActionKind};
use crate::learner::{confidence_threshold, LinearModel};
use crate::measurements::{MetricsReport, StateSegments};
use crate::policies::{build_payoff_matrix, game_select, internal_select, wsm_select, AvEntry, PolicyKind, QTable, RlAgent};
use crate::resilience::{AcrWindow, OperationalState, StateTracker};
use crate::simulator::{ColorClass, Disruptor, Feeder};

const ENERGY_STREAM: u64 = 2;
const POLICY_STREAM: u64 = 3;

/// A change requested between iterations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "snake_case")]
pub enum Command {
    SwitchPolicy { policy: PolicyKind },
    InjectDisruption { disruptor: Option<Disruptor> },
    FixDisruption,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FinishReason {
    /// The protocol's end condition was met.
    Completed,
    /// The iteration budget ran out first.
    BudgetExhausted,
}

#[derive(Debug, Clone, Copy)]
struct ActiveDisruption {
    start: usize,
    recovered_at: Option<usize>,
}

/// Output of a single iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct StepOutput {
    pub record: IterationRecord,
    /// Set when the state or cycle differs from the previous iteration.
    pub state_change: Option<(OperationalState, u32)>,
}

/// Everything a finished (or interrupted) run produced.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentResult {
    pub config: ExperimentConfig,
    pub records: Vec<IterationRecord>,
    pub segments: StateSegments,
    pub metrics: Vec<MetricsReport>,
    /// Per state-machine cycle that saw a degradation: did it recover?
    pub recovered: Vec<bool>,
    pub injections: Vec<usize>,
    pub fixes: Vec<usize>,
    pub finish: Option<FinishReason>,
    pub acr_threshold: Option<f64>,
    pub q_table: QTable,
}

impl ExperimentResult {
    /// Iterations spent in each state, in state order.
    pub fn state_lengths(&self) -> [(OperationalState, usize); 5] {
        use OperationalState::*;
        [Unstarted, Steady, PerformanceDegradation, Recovering, Recovered]
            .map(|s| (s, self.records.iter().filter(|r| r.state == s).count()))
    }

    /// Number of iterations at which the state machine entered degradation.
    pub fn degradations(&self) -> usize {
        self.records
            .iter()
            .filter(|r| r.state == OperationalState::PerformanceDegradation)
            .count()
    }
}

/// Stepwise experiment loop. Shared by batch runs and live service runs so
/// both produce identical records.
#[derive(Debug, Clone)]
pub struct Engine {
    config: ExperimentConfig,
    feeder: Feeder,
    model: LinearModel,
    k: f64,
    window: AcrWindow,
    tracker: StateTracker,
    evaluator: ActionEvaluator,
    agent: RlAgent,
    energy_rng: ChaCha8Rng,
    policy_rng: ChaCha8Rng,
    policy: PolicyKind,
    consecutive_standalone: usize,
    recent: VecDeque<AvEntry>,
    records: Vec<IterationRecord>,
    iteration: usize,
    budget: usize,
    disruption: Option<ActiveDisruption>,
    next_inject_at: Option<usize>,
    disruptions_started: usize,
    post_fix_steady: Option<usize>,
    injections: Vec<usize>,
    fixes: Vec<usize>,
    finish: Option<FinishReason>,
}

fn seeded_stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

impl Engine {
    pub fn new(config: ExperimentConfig) -> Result<Self> {
        config.validate()?;
        let feeder = Feeder::new(config.seed, config.n_classes, config.palette, config.class_order);
        let model = LinearModel::new(config.n_classes, crate::simulator::FEATURE_LEN, config.learner);
        let evaluator = ActionEvaluator::new(config.evaluator.smoothing_alpha, config.evaluator.h_max)?;
        let agent = RlAgent::new(config.rl, config.steady_len)?;
        let next_inject_at = match config.schedule {
            ScheduleMode::Auto => Some(config.disrupt_start()),
            ScheduleMode::Manual => None,
        };
        Ok(Self {
            k: confidence_threshold(config.n_classes)?,
            window: AcrWindow::new(config.m),
            tracker: StateTracker::new(config.satisfactory),
            energy_rng: seeded_stream(config.seed, ENERGY_STREAM),
            policy_rng: seeded_stream(config.seed, POLICY_STREAM),
            policy: config.policy,
            consecutive_standalone: 0,
            recent: VecDeque::with_capacity(config.m),
            records: Vec::new(),
            iteration: 0,
            budget: config.iteration_budget(),
            disruption: None,
            next_inject_at,
            disruptions_started: 0,
            post_fix_steady: None,
            injections: Vec::new(),
            fixes: Vec::new(),
            finish: None,
            feeder,
            model,
            evaluator,
            agent,
            config,
        })
    }

    pub fn config(&self) -> &ExperimentConfig {
        &self.config
    }

    /// Index of the iteration the next [`Engine::step`] will run.
    pub fn next_iteration(&self) -> usize {
        self.iteration
    }

    pub fn is_finished(&self) -> bool {
        self.finish.is_some()
    }

    pub fn finish_reason(&self) -> Option<FinishReason> {
        self.finish
    }

    pub fn records(&self) -> &[IterationRecord] {
        &self.records
    }

    pub fn policy(&self) -> PolicyKind {
        self.policy
    }

    pub fn state(&self) -> OperationalState {
        self.tracker.current()
    }

    pub fn is_disrupted(&self) -> bool {
        self.feeder.is_disrupted()
    }

    pub fn model(&self) -> &LinearModel {
        &self.model
    }

    pub fn confidence_threshold(&self) -> f64 {
        self.k
    }

    /// Applies a command from the next iteration on and returns that iteration.
    pub fn apply(&mut self, command: Command) -> Result<usize> {
        if self.is_finished() {
            return Err(Error::InvalidCommand("run has finished".into()));
        }
        match command {
            Command::SwitchPolicy { policy } => self.policy = policy,
            Command::InjectDisruption { disruptor } => {
                if self.feeder.is_disrupted() {
                    return Err(Error::InvalidCommand("a disruption is already active".into()));
                }
                let d = disruptor.unwrap_or(self.config.disruptor);
                d.validate()?;
                self.inject(d);
            }
            Command::FixDisruption => {
                if !self.feeder.is_disrupted() {
                    return Err(Error::InvalidCommand("no active disruption to fix".into()));
                }
                self.fix();
            }
        }
        Ok(self.iteration)
    }

    fn inject(&mut self, d: Disruptor) {
        self.feeder.inject(d);
        self.disruption = Some(ActiveDisruption {
            start: self.iteration,
            recovered_at: None,
        });
        self.disruptions_started += 1;
        self.next_inject_at = None;
        self.post_fix_steady = None;
        self.injections.push(self.iteration);
    }

    fn fix(&mut self) {
        self.feeder.fix();
        self.disruption = None;
        self.post_fix_steady = Some(0);
        self.fixes.push(self.iteration);
    }

    fn due_fix(&self, d: &ActiveDisruption) -> usize {
        let sl = self.config.steady_len;
        match (self.config.fix_at, d.recovered_at) {
            (Some(fix), _) => d.start + (fix - self.config.disrupt_start()),
            (None, Some(r)) => r + sl,
            (None, None) => d.start + 2 * sl,
        }
    }

    fn scheduled_events(&mut self) {
        if self.config.schedule != ScheduleMode::Auto {
            return;
        }
        let i = self.iteration;
        if self.disruption.is_none() && self.next_inject_at == Some(i) {
            self.inject(self.config.disruptor);
        } else if let Some(d) = self.disruption {
            if self.due_fix(&d) == i {
                self.fix();
            }
        }
    }

    fn acting_policy(&self) -> PolicyKind {
        let support = self.tracker.current() == OperationalState::Recovering
            && self.consecutive_standalone < self.config.stop_support_after();
        if support {
            self.policy
        } else {
            PolicyKind::Internal
        }
    }

    fn decide(&mut self, policy: PolicyKind, p_hat: f64) -> ActionKind {
        let fallback = internal_select(p_hat, self.k);
        let estimates: Vec<_> = ActionKind::ALL
            .into_iter()
            .filter_map(|a| self.evaluator.estimate(a).map(|e| (a, e)))
            .collect();
        match policy {
            PolicyKind::Internal => fallback,
            PolicyKind::OneAgent => wsm_select(p_hat, &estimates, self.config.weights).unwrap_or(fallback),
            PolicyKind::TwoAgent => build_payoff_matrix(p_hat, &estimates)
                .map(|m| game_select(&m, p_hat, self.k))
                .unwrap_or(fallback),
            PolicyKind::RlAgent => self.agent.select(&mut self.policy_rng),
        }
    }

    /// Runs one iteration.
    pub fn step(&mut self) -> Result<StepOutput> {
        if let Some(reason) = self.finish {
            return Err(Error::InvalidCommand(format!("run already finished ({reason:?})")));
        }
        self.scheduled_events();
        let i = self.iteration;
        let before = (self.tracker.current(), self.tracker.cycle());

        let instance = self.feeder.next_instance()?;
        let estimate = self.model.predict_proba(&instance.features)?;
        let p_hat = estimate.p_hat;
        let standalone = internal_select(p_hat, self.k) == ActionKind::Autonomous;
        let policy = self.acting_policy();
        let action = self.decide(policy, p_hat);

        let energy = self.config.evaluator.energy;
        let sampled = ActionKind::ALL.map(|a| sample_attributes(a, &energy, &mut self.energy_rng));
        for a in ActionKind::ALL {
            self.evaluator.observe(a, &sampled[a.index()]);
        }
        let attrs = sampled[action.index()];
        self.evaluator.actuated(&attrs);

        let mut observed_p_hat = p_hat;
        if action == ActionKind::Human {
            self.model.update(&instance.features, instance.true_class.index())?;
            observed_p_hat = self.model.predict_proba(&instance.features)?.p_hat;
        }

        let acr = self.window.record(standalone);
        self.consecutive_standalone = if standalone { self.consecutive_standalone + 1 } else { 0 };
        let state = self.tracker.observe(acr);

        let entry = AvEntry {
            action,
            co2: attrs.co2,
            run_time: attrs.run_time,
            p_hat: observed_p_hat,
        };
        if self.recent.len() == self.config.m {
            self.recent.pop_front();
        }
        self.recent.push_back(entry);
        if policy == PolicyKind::RlAgent {
            self.agent.observe(entry);
        }
        if before.0 == OperationalState::PerformanceDegradation && state == OperationalState::Recovering {
            let pd: Vec<AvEntry> = self.recent.iter().copied().collect();
            self.agent.begin(&pd);
        }

        let record = IterationRecord {
            iteration: i,
            mode: instance.mode,
            policy_active: policy,
            action,
            t: attrs.run_time,
            c: attrs.co2,
            h: attrs.human_interactions,
            p_hat,
            predicted_class: ColorClass::from_index(estimate.predicted).expect("class index in range"),
            true_class: instance.true_class,
            acr,
            state,
            cycle: self.tracker.cycle(),
            acr_threshold: self.tracker.acr_threshold().ok(),
        };
        self.records.push(record.clone());
        self.iteration += 1;
        self.protocol_after(state);

        let after = (state, self.tracker.cycle());
        Ok(StepOutput {
            record,
            state_change: (after != before).then_some(after),
        })
    }

    fn protocol_after(&mut self, state: OperationalState) {
        let i = self.iteration - 1;
        if let Some(d) = self.disruption.as_mut() {
            if state == OperationalState::Recovered && d.recovered_at.is_none() {
                d.recovered_at = Some(i);
            }
        }
        if let Some(run) = self.post_fix_steady.as_mut() {
            *run = if state == OperationalState::Steady { *run + 1 } else { 0 };
            if *run >= self.config.steady_len && self.config.schedule == ScheduleMode::Auto {
                self.post_fix_steady = None;
                if self.disruptions_started < self.config.cycles {
                    self.next_inject_at = Some(self.iteration);
                } else {
                    self.finish = Some(FinishReason::Completed);
                }
            }
        }
        if self.finish.is_none() && self.iteration >= self.budget {
            self.finish = Some(FinishReason::BudgetExhausted);
        }
    }

    /// Runs until the protocol or the budget ends the run.
    pub fn run_to_end(&mut self) -> Result<()> {
        while !self.is_finished() {
            self.step()?;
        }
        Ok(())
    }

    /// Segments of the trace so far.
    pub fn segments(&self) -> StateSegments {
        let labels: Vec<_> = self.records.iter().map(|r| (r.state, r.cycle)).collect();
        StateSegments::from_labels(&labels, &self.fixes)
    }

    /// Metrics for every cycle that has entered a disruptive state so far.
    pub fn metrics(&self) -> Vec<MetricsReport> {
        let segments = self.segments();
        let Ok(threshold) = self.tracker.acr_threshold() else {
            return Vec::new();
        };
        let acr: Vec<f64> = self.records.iter().map(|r| r.acr).collect();
        let co2: Vec<f64> = self.records.iter().map(|r| r.c).collect();
        let h: Vec<u32> = self.records.iter().map(|r| r.h).collect();
        segments
            .disruptive_cycles()
            .filter_map(|c| {
                MetricsReport::compute(self.policy.name(), self.config.seed, c, &acr, &co2, &h, threshold).ok()
            })
            .collect()
    }

    pub fn result(&self) -> ExperimentResult {
        let segments = self.segments();
        ExperimentResult {
            config: self.config.clone(),
            records: self.records.clone(),
            recovered: segments.disruptive_cycles().map(|c| c.did_recover).collect(),
            metrics: self.metrics(),
            segments,
            injections: self.injections.clone(),
            fixes: self.fixes.clone(),
            finish: self.finish,
            acr_threshold: self.tracker.acr_threshold().ok(),
            q_table: self.agent.table().clone(),
        }
    }
}
