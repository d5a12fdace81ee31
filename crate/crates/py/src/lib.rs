//! Python bindings. Configs go in as JSON text; structured results come back
//! as plain Python objects decoded from the same JSON the service emits.

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

use olcais::policies::{self, Equilibrium, PayoffMatrix};
use olcais::runner::{iterations_csv, metrics_csv, segments_csv};
use olcais::{Command, ExperimentConfig, PolicyKind};

fn err(e: olcais::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

/// Decodes serializable data into Python objects through the `json` module.
fn to_py<'py, T: serde::Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PyValueError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

fn parse_config(config: Option<&str>) -> PyResult<ExperimentConfig> {
    ExperimentConfig::from_json(config.unwrap_or("{}")).map_err(err)
}

#[pyfunction]
fn confidence_threshold(n: usize) -> PyResult<f64> {
    olcais::confidence_threshold(n).map_err(err)
}

/// The default configuration as JSON text.
#[pyfunction]
fn default_config() -> String {
    ExperimentConfig::default().to_json()
}

/// Runs one experiment. Returns a dict with the three CSV tables as text,
/// the metrics reports, the finish reason and the degradation count.
#[pyfunction]
#[pyo3(signature = (config=None))]
fn run_experiment<'py>(py: Python<'py>, config: Option<&str>) -> PyResult<Bound<'py, pyo3::types::PyDict>> {
    let cfg = parse_config(config)?;
    let r = py.detach(|| olcais::run_experiment(&cfg)).map_err(err)?;
    let out = pyo3::types::PyDict::new(py);
    out.set_item("iterations_csv", String::from_utf8_lossy(&iterations_csv(&r.records)))?;
    out.set_item("metrics_csv", String::from_utf8_lossy(&metrics_csv(&r.metrics)))?;
    out.set_item("segments_csv", String::from_utf8_lossy(&segments_csv(&r.segments)))?;
    out.set_item("metrics", to_py(py, &r.metrics)?)?;
    out.set_item("finish", to_py(py, &r.finish)?)?;
    out.set_item("degradations", r.degradations())?;
    Ok(out)
}

fn matrix(row: [[f64; 2]; 2], col: [[f64; 2]; 2]) -> PayoffMatrix {
    PayoffMatrix::from_tables(row, col)
}

/// Pure equilibria of a 2x2 game as `(row, col)` index pairs.
#[pyfunction]
fn find_psne(row: [[f64; 2]; 2], col: [[f64; 2]; 2]) -> Vec<(usize, usize)> {
    policies::find_psne(&matrix(row, col))
        .into_iter()
        .map(|(r, c)| (r.index(), c.index()))
        .collect()
}

/// Interior mixed equilibrium `(p, q)`, or None when there is none.
#[pyfunction]
fn solve_msne(row: [[f64; 2]; 2], col: [[f64; 2]; 2]) -> Option<(f64, f64)> {
    match policies::solve_msne(&matrix(row, col)) {
        Ok(Equilibrium::Mixed { p, q }) => Some((p, q)),
        _ => None,
    }
}

/// Step-by-step experiment, steerable between iterations.
#[pyclass(unsendable)]
struct Engine {
    inner: olcais::Engine,
}

#[pymethods]
impl Engine {
    #[new]
    #[pyo3(signature = (config=None))]
    fn new(config: Option<&str>) -> PyResult<Self> {
        let inner = olcais::Engine::new(parse_config(config)?).map_err(err)?;
        Ok(Self { inner })
    }

    /// Runs one iteration and returns its record as a dict.
    fn step<'py>(&mut self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        let out = self.inner.step().map_err(err)?;
        to_py(py, &out.record)
    }

    fn run_to_end(&mut self) -> PyResult<()> {
        self.inner.run_to_end().map_err(err)
    }

    /// Applies `switch_policy`, `inject_disruption` or `fix_disruption` and
    /// returns the iteration it takes effect at.
    #[pyo3(signature = (command, policy=None))]
    fn apply(&mut self, command: &str, policy: Option<&str>) -> PyResult<usize> {
        let cmd = match command {
            "switch_policy" => {
                let name = policy.ok_or_else(|| PyValueError::new_err("switch_policy needs a policy"))?;
                Command::SwitchPolicy {
                    policy: PolicyKind::parse(name).map_err(err)?,
                }
            }
            "inject_disruption" => Command::InjectDisruption { disruptor: None },
            "fix_disruption" => Command::FixDisruption,
            other => return Err(PyValueError::new_err(format!("unknown command `{other}`"))),
        };
        self.inner.apply(cmd).map_err(err)
    }

    #[getter]
    fn next_iteration(&self) -> usize {
        self.inner.next_iteration()
    }

    #[getter]
    fn finished(&self) -> bool {
        self.inner.is_finished()
    }

    #[getter]
    fn state(&self) -> &'static str {
        self.inner.state().name()
    }

    #[getter]
    fn policy(&self) -> &'static str {
        self.inner.policy().name()
    }

    fn iterations_csv(&self) -> String {
        String::from_utf8_lossy(&iterations_csv(self.inner.records())).into_owned()
    }

    fn metrics<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.inner.metrics())
    }
}

#[pymodule]
pub fn olcais_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(confidence_threshold, m)?)?;
    m.add_function(wrap_pyfunction!(default_config, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    m.add_function(wrap_pyfunction!(find_psne, m)?)?;
    m.add_function(wrap_pyfunction!(solve_msne, m)?)?;
    m.add_class::<Engine>()?;
    Ok(())
}
