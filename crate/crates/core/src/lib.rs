//! Simulation framework and decision-making engine for online collaborative
//! AI systems: a streamed classification task that learns from a human, a
//! resilience model that detects degradation through the autonomous
//! classification ratio, four recovery policies, and the metrics that compare
//! them.

pub mod error;
pub mod evaluator;
pub mod learner;
pub mod measurements;
pub mod policies;
pub mod resilience;
pub mod runner;
pub mod simulator;

pub use error::{Error, Result};
pub use evaluator::{ActionAttributes, ActionEstimate, ActionKind, EnergyModel};
pub use learner::{confidence_threshold, LinearModel, ProbabilityEstimate};
pub use measurements::{MetricsReport, PolicyComparison, StateSegments};
pub use policies::PolicyKind;
pub use resilience::{AcrWindow, OperationalState, StateTracker};
pub use runner::{dump_csv, run_experiment, run_replications, Command, Engine, ExperimentConfig, ExperimentResult, IterationRecord};
pub use simulator::{ColorClass, Disruptor, FeatureInstance, FeedMode, Feeder};
