"""Smoke test for the olcais_py extension.

Install it first:  pip install --no-build-isolation ./crates/py
"""

import csv
import io
import json

import olcais_py as o


def main():
    k = o.confidence_threshold(3)
    assert abs(k - 0.383333333) < 1e-6, k

    assert o.find_psne([[2, 0], [0, 1]], [[1, 0], [0, 2]]) == [(0, 0), (1, 1)]
    p, q = o.solve_msne([[2, 0], [0, 1]], [[1, 0], [0, 2]])
    assert abs(p - 2 / 3) < 1e-9 and abs(q - 1 / 3) < 1e-9

    cfg = json.loads(o.default_config())
    assert cfg["seed"] == 42 and cfg["m"] == 5

    out = o.run_experiment(json.dumps({"seed": 42}))
    rows = list(csv.DictReader(io.StringIO(out["iterations_csv"])))
    states = {r["state"] for r in rows}
    print(f"{len(rows)} iterations, finish={out['finish']}, degradations={out['degradations']}")
    print("states seen:", sorted(states))
    for m in out["metrics"]:
        print(f"  cycle {m['cycle']}: duration {m['duration_ratio']:.3f}, fluctuation {m['fluctuation_ratio']:.3f}")
    assert out["degradations"] >= 2, "expected forgetting after the fix"

    again = o.run_experiment(json.dumps({"seed": 42}))
    assert again["iterations_csv"] == out["iterations_csv"], "runs are not deterministic"

    e = o.Engine(json.dumps({"schedule": "manual", "iteration_budget": 30}))
    for _ in range(10):
        e.step()
    at = e.apply("inject_disruption")
    e.run_to_end()
    modes = [r["mode"] for r in csv.DictReader(io.StringIO(e.iterations_csv()))]
    assert modes == ["normal"] * at + ["disrupted"] * (30 - at)
    print(f"manual disruption applied at iteration {at}")

    try:
        o.run_experiment('{"m": 0}')
    except ValueError as err:
        print("invalid config rejected:", err)
    else:
        raise AssertionError("m = 0 accepted")
    print("smoke OK")


if __name__ == "__main__":
    main()
