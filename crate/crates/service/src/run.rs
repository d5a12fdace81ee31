//! One live run: the engine, its event log and the task that paces it.

use std::sync::{Arc, Mutex, MutexGuard};
use std::time::Duration;

use olcais::measurements::MetricsReport;
use olcais::runner::{iterations_csv, metrics_csv, segments_csv, Command, Engine, IterationRecord};
use olcais::simulator::Disruptor;
use olcais::{ExperimentConfig, OperationalState, PolicyKind};
use serde::{Deserialize, Serialize};
use tokio::sync::watch;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RunStatus {
    Configured,
    Running,
    Paused,
    Finished,
    Failed,
}

impl RunStatus {
    pub fn is_terminal(self) -> bool {
        matches!(self, RunStatus::Finished | RunStatus::Failed)
    }
}

/// Body of a control request.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "snake_case")]
pub enum Control {
    SwitchPolicy { policy: PolicyKind },
    InjectDisruption {
        #[serde(default)]
        disruptor: Option<Disruptor>,
    },
    FixDisruption,
    Pause,
    Resume,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum EventBody {
    Iteration { record: IterationRecord },
    StateChange { state: OperationalState, cycle: u32 },
    Metrics { report: MetricsReport },
    Control { control: Control },
    Status {
        status: RunStatus,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        message: Option<String>,
    },
}

impl EventBody {
    pub fn kind(&self) -> &'static str {
        match self {
            EventBody::Iteration { .. } => "iteration",
            EventBody::StateChange { .. } => "state_change",
            EventBody::Metrics { .. } => "metrics",
            EventBody::Control { .. } => "control",
            EventBody::Status { .. } => "status",
        }
    }
}

/// One entry of a run's event log. `seq` counts from 0 without gaps;
/// `iteration` never decreases along the log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunEvent {
    pub seq: u64,
    pub iteration: usize,
    #[serde(flatten)]
    pub body: EventBody,
}

impl RunEvent {
    /// Whether nothing can follow this event.
    pub fn is_last(&self) -> bool {
        matches!(self.body, EventBody::Status { status, .. } if status.is_terminal())
    }
}

/// Snapshot returned by `GET /runs/{id}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunHandle {
    pub run_id: String,
    pub status: RunStatus,
    pub config: ExperimentConfig,
    /// Iteration the next step will run; commands sent now take effect there.
    pub next_iteration: usize,
    pub last_iteration: Option<usize>,
    pub policy: PolicyKind,
    pub state: OperationalState,
    pub disrupted: bool,
    pub events: u64,
}

#[derive(Debug)]
pub enum ControlError {
    /// The command does not fit the run's current status.
    Conflict(String),
}

struct Inner {
    engine: Engine,
    status: RunStatus,
    events: Vec<RunEvent>,
    /// Last report published per cycle.
    published: Vec<MetricsReport>,
}

impl Inner {
    fn push(&mut self, iteration: usize, body: EventBody) {
        let seq = self.events.len() as u64;
        self.events.push(RunEvent { seq, iteration, body });
    }

    fn set_status(&mut self, status: RunStatus, message: Option<String>) {
        self.status = status;
        let at = self.engine.next_iteration();
        self.push(at, EventBody::Status { status, message });
    }

    fn publish_metrics(&mut self, at: usize) {
        for report in self.engine.metrics() {
            let fresh = match self.published.iter_mut().find(|r| r.cycle == report.cycle) {
                Some(old) if *old == report => false,
                Some(old) => {
                    *old = report.clone();
                    true
                }
                None => {
                    self.published.push(report.clone());
                    true
                }
            };
            if fresh {
                self.push(at, EventBody::Metrics { report });
            }
        }
    }
}

pub struct Run {
    id: String,
    config: ExperimentConfig,
    inner: Mutex<Inner>,
    progress: watch::Sender<usize>,
}

impl Run {
    pub fn new(id: String, config: ExperimentConfig, start: bool) -> olcais::Result<Arc<Self>> {
        let engine = Engine::new(config.clone())?;
        let mut inner = Inner {
            engine,
            status: RunStatus::Configured,
            events: Vec::new(),
            published: Vec::new(),
        };
        inner.set_status(RunStatus::Configured, None);
        if start {
            inner.set_status(RunStatus::Running, None);
        }
        let (progress, _) = watch::channel(inner.events.len());
        Ok(Arc::new(Self {
            id,
            config,
            inner: Mutex::new(inner),
            progress,
        }))
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    fn lock(&self) -> MutexGuard<'_, Inner> {
        self.inner.lock().unwrap_or_else(|poisoned| poisoned.into_inner())
    }

    fn notify(&self, inner: &Inner) {
        self.progress.send_replace(inner.events.len());
    }

    pub fn status(&self) -> RunStatus {
        self.lock().status
    }

    pub fn handle(&self) -> RunHandle {
        let inner = self.lock();
        let e = &inner.engine;
        RunHandle {
            run_id: self.id.clone(),
            status: inner.status,
            config: self.config.clone(),
            next_iteration: e.next_iteration(),
            last_iteration: e.records().last().map(|r| r.iteration),
            policy: e.policy(),
            state: e.state(),
            disrupted: e.is_disrupted(),
            events: inner.events.len() as u64,
        }
    }

    pub fn metrics(&self) -> Vec<MetricsReport> {
        self.lock().engine.metrics()
    }

    /// CSV export of the trace so far, byte-identical to the batch writer.
    pub fn export(&self, file: ExportFile) -> Vec<u8> {
        let result = self.lock().engine.result();
        match file {
            ExportFile::Iterations => iterations_csv(&result.records),
            ExportFile::Metrics => metrics_csv(&result.metrics),
            ExportFile::Segments => segments_csv(&result.segments),
        }
    }

    /// Applies a control command at the next iteration boundary and returns
    /// that iteration.
    pub fn control(&self, control: Control) -> Result<usize, ControlError> {
        let mut inner = self.lock();
        let status = inner.status;
        if status.is_terminal() {
            return Err(ControlError::Conflict(format!("run is {status:?}").to_lowercase()));
        }
        let at = inner.engine.next_iteration();
        let engine_command = match control {
            Control::SwitchPolicy { policy } => Some(Command::SwitchPolicy { policy }),
            Control::InjectDisruption { disruptor } => Some(Command::InjectDisruption { disruptor }),
            Control::FixDisruption => Some(Command::FixDisruption),
            Control::Pause if status == RunStatus::Running => None,
            Control::Resume if matches!(status, RunStatus::Paused | RunStatus::Configured) => None,
            Control::Pause | Control::Resume => {
                return Err(ControlError::Conflict(format!("cannot {control:?} a {status:?} run").to_lowercase()));
            }
        };
        if let Some(cmd) = engine_command {
            inner.engine.apply(cmd).map_err(|e| ControlError::Conflict(e.to_string()))?;
        }
        inner.push(at, EventBody::Control { control });
        match control {
            Control::Pause => inner.set_status(RunStatus::Paused, None),
            Control::Resume => inner.set_status(RunStatus::Running, None),
            _ => {}
        }
        self.notify(&inner);
        Ok(at)
    }

    /// Runs up to `steps` iterations unless paused. Returns true once the run
    /// can make no further progress.
    pub fn advance(&self, steps: usize) -> bool {
        let mut inner = self.lock();
        if inner.status.is_terminal() {
            return true;
        }
        if inner.status != RunStatus::Running {
            return false;
        }
        for _ in 0..steps {
            match inner.engine.step() {
                Ok(out) => {
                    let i = out.record.iteration;
                    inner.push(i, EventBody::Iteration { record: out.record });
                    if let Some((state, cycle)) = out.state_change {
                        inner.push(i, EventBody::StateChange { state, cycle });
                        inner.publish_metrics(i);
                    }
                }
                Err(e) => {
                    log::error!("run {} failed: {e}", self.id);
                    inner.set_status(RunStatus::Failed, Some(e.to_string()));
                    break;
                }
            }
            if inner.engine.is_finished() {
                let at = inner.engine.next_iteration();
                inner.publish_metrics(at);
                inner.set_status(RunStatus::Finished, None);
                self.write_outputs(&inner);
                break;
            }
        }
        self.notify(&inner);
        inner.status.is_terminal()
    }

    fn write_outputs(&self, inner: &Inner) {
        if let Some(dir) = &self.config.output_dir {
            let dir = dir.join(&self.id);
            match olcais::dump_csv(&inner.engine.result(), &dir) {
                Ok(_) => log::info!("run {} written to {}", self.id, dir.display()),
                Err(e) => log::warn!("run {}: {e}", self.id),
            }
        }
    }

    /// Events from position `index` on, if any.
    pub fn events_from(&self, index: usize) -> Vec<RunEvent> {
        let inner = self.lock();
        inner.events.get(index..).map(<[RunEvent]>::to_vec).unwrap_or_default()
    }

    /// Position of the first event at or after `iteration`.
    pub fn first_event_at(&self, iteration: usize) -> usize {
        self.lock().events.partition_point(|e| e.iteration < iteration)
    }

    pub fn subscribe(&self) -> watch::Receiver<usize> {
        self.progress.subscribe()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExportFile {
    #[default]
    Iterations,
    Metrics,
    Segments,
}

impl ExportFile {
    pub fn file_name(self) -> &'static str {
        match self {
            ExportFile::Iterations => "iterations.csv",
            ExportFile::Metrics => "metrics.csv",
            ExportFile::Segments => "segments.csv",
        }
    }
}

/// Steps `run` at the configured pace until it finishes or fails.
pub async fn drive(run: Arc<Run>) {
    let rate = run.config.iterations_per_second;
    // Above 1000 iterations/s several steps share one timer tick.
    let per_tick = (rate / 1000.0).ceil().max(1.0) as usize;
    let mut ticker = tokio::time::interval(Duration::from_secs_f64(per_tick as f64 / rate));
    ticker.set_missed_tick_behavior(tokio::time::MissedTickBehavior::Delay);
    loop {
        ticker.tick().await;
        if run.advance(per_tick) {
            break;
        }
    }
}
