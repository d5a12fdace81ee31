use std::ffi::CString;

use olcais::runner::iterations_csv;
use olcais::{run_experiment, ExperimentConfig};
use olcais_py::olcais_py;
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn with_module<R>(f: impl FnOnce(Python<'_>, &Bound<'_, PyModule>) -> PyResult<R>) -> R {
    static INIT: std::sync::Once = std::sync::Once::new();
    INIT.call_once(|| {
        pyo3::append_to_inittab!(olcais_py);
        Python::initialize();
    });
    Python::attach(|py| {
        let m = py.import("olcais_py")?;
        f(py, &m)
    })
    .unwrap()
}

#[test]
fn run_matches_the_native_csv() {
    let csv: String = with_module(|_, m| {
        let out = m.getattr("run_experiment")?.call1(("{\"seed\": 8}",))?;
        out.get_item("iterations_csv")?.extract()
    });
    let native = run_experiment(&ExperimentConfig {
        seed: 8,
        ..Default::default()
    })
    .unwrap();
    assert_eq!(csv.as_bytes(), iterations_csv(&native.records));
}

#[test]
fn script_level_use() {
    let code = CString::new(
        r#"
import olcais_py as o
assert abs(o.confidence_threshold(3) - 0.38333333333) < 1e-9
assert o.find_psne([[2, 0], [0, 1]], [[1, 0], [0, 2]]) == [(0, 0), (1, 1)]
p, q = o.solve_msne([[2, 0], [0, 1]], [[1, 0], [0, 2]])
assert abs(p - 2 / 3) < 1e-9 and abs(q - 1 / 3) < 1e-9
e = o.Engine('{"schedule": "manual", "iteration_budget": 20}')
for _ in range(5):
    rec = e.step()
assert rec["iteration"] == 4 and e.next_iteration == 5
assert e.apply("inject_disruption") == 5
e.run_to_end()
assert e.finished
modes = [line.split(",")[1] for line in e.iterations_csv().splitlines()[1:]]
assert modes == ["normal"] * 5 + ["disrupted"] * 15, modes
try:
    o.Engine('{"m": 0}')
    raise AssertionError("accepted m = 0")
except ValueError as err:
    assert "m" in str(err)
"#,
    )
    .unwrap();
    with_module(|py, _| {
        let globals = PyDict::new(py);
        py.run(&code, Some(&globals), None)
    });
}
