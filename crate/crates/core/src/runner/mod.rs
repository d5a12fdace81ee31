//! Experiment protocol: steady training, disruption, supported recovery, fix,
//! and the batch and persistence helpers around it.

mod config;
mod engine;
mod record;

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use config::{ExperimentConfig, ScheduleMode, BUDGET_PER_CYCLE, CONFIG_VERSION};
pub use engine::{Command, Engine, ExperimentResult, FinishReason, StepOutput};
pub use record::{
    format_float, iterations_csv, metrics_csv, read_iterations, read_iterations_from, read_metrics, read_metrics_from,
    segments_csv, write_iterations, write_metrics, write_segments, IterationRecord, ITERATION_HEADER, METRICS_HEADER,
    SEGMENTS_HEADER,
};

use crate::error::{Error, Result};
use crate::measurements::{compare_policies, group_by_policy, MetricsReport, PolicyComparison};
use crate::policies::PolicyKind;
use crate::resilience::OperationalState;

/// Runs one experiment to completion.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentResult> {
    let mut engine = Engine::new(config.clone())?;
    engine.run_to_end()?;
    Ok(engine.result())
}

/// Repeated disrupt/fix cycles, one per `config.cycles`. With a single cycle
/// this is exactly [`run_experiment`].
pub fn run_multi_disruption(config: &ExperimentConfig) -> Result<ExperimentResult> {
    run_experiment(config)
}

/// Mean number of iterations per state for one policy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateLengths {
    pub policy: String,
    pub runs: usize,
    pub lengths: Vec<(OperationalState, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplicationBatch {
    pub results: Vec<ExperimentResult>,
    pub reports: Vec<MetricsReport>,
    pub comparison: Vec<PolicyComparison>,
    pub state_lengths: Vec<StateLengths>,
}

/// `count` runs per policy, replication `i` seeded with `config.seed + i`.
/// Runs execute in parallel; results come back in (policy, seed) order.
pub fn run_replications(config: &ExperimentConfig, count: usize, policies: &[PolicyKind]) -> Result<ReplicationBatch> {
    if count == 0 {
        return Err(Error::config("count", "must be at least 1"));
    }
    config.validate()?;
    let policies: Vec<PolicyKind> = if policies.is_empty() { vec![config.policy] } else { policies.to_vec() };
    let jobs: Vec<ExperimentConfig> = policies
        .iter()
        .flat_map(|&policy| {
            (0..count).map(move |i| ExperimentConfig {
                policy,
                seed: config.seed.wrapping_add(i as u64),
                ..config.clone()
            })
        })
        .collect();
    let results = jobs.par_iter().map(run_experiment).collect::<Result<Vec<_>>>()?;

    let reports: Vec<MetricsReport> = results.iter().flat_map(|r| r.metrics.iter().cloned()).collect();
    let mut groups = group_by_policy(&reports);
    for p in &policies {
        if !groups.iter().any(|(name, _)| name == p.name()) {
            groups.push((p.name().to_string(), Vec::new()));
        }
    }
    let comparison = compare_policies(&groups);
    let state_lengths = policies
        .iter()
        .map(|p| {
            let runs: Vec<&ExperimentResult> = results.iter().filter(|r| r.config.policy == *p).collect();
            let n = runs.len().max(1) as f64;
            let mut sums = [0usize; 5];
            for r in &runs {
                for (s, (_, len)) in sums.iter_mut().zip(r.state_lengths()) {
                    *s += len;
                }
            }
            let states = runs.first().map(|r| r.state_lengths().map(|(s, _)| s)).unwrap_or_default();
            StateLengths {
                policy: p.name().to_string(),
                runs: runs.len(),
                lengths: states.into_iter().zip(sums).map(|(s, total)| (s, total as f64 / n)).collect(),
            }
        })
        .collect();
    Ok(ReplicationBatch {
        results,
        reports,
        comparison,
        state_lengths,
    })
}

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

/// Writes `iterations.csv`, `metrics.csv` and `segments.csv` into `dir`.
pub fn dump_csv(result: &ExperimentResult, dir: &Path) -> Result<Vec<PathBuf>> {
    ensure_dir(dir)?;
    Ok(vec![
        record::write_file(&dir.join("iterations.csv"), &iterations_csv(&result.records))?,
        record::write_file(&dir.join("metrics.csv"), &metrics_csv(&result.metrics))?,
        record::write_file(&dir.join("segments.csv"), &segments_csv(&result.segments))?,
    ])
}

/// CSV of a policy comparison table.
pub fn comparison_csv(table: &[PolicyComparison]) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let header = ["policy", "reports"].into_iter().chain(crate::measurements::METRIC_NAMES);
    w.write_record(header).expect("in-memory write");
    for row in table {
        let mut fields = vec![row.policy.clone(), row.reports.to_string()];
        fields.extend(row.values().map(format_float));
        w.write_record(fields).expect("in-memory write");
    }
    w.into_inner().expect("in-memory flush")
}

/// Writes `metrics.csv`, `comparison.csv` and `state_lengths.csv` for a batch.
pub fn dump_batch(batch: &ReplicationBatch, dir: &Path) -> Result<Vec<PathBuf>> {
    ensure_dir(dir)?;
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["policy", "runs", "state", "mean_length"]).expect("in-memory write");
    for sl in &batch.state_lengths {
        for (state, len) in &sl.lengths {
            w.write_record([sl.policy.clone(), sl.runs.to_string(), state.name().to_string(), format_float(*len)])
                .expect("in-memory write");
        }
    }
    let lengths = w.into_inner().expect("in-memory flush");
    Ok(vec![
        record::write_file(&dir.join("metrics.csv"), &metrics_csv(&batch.reports))?,
        record::write_file(&dir.join("comparison.csv"), &comparison_csv(&batch.comparison))?,
        record::write_file(&dir.join("state_lengths.csv"), &lengths)?,
    ])
}
