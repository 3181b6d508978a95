"""Smoke test for the wsn_py extension module.

Build and run:
    cargo build --release -p wsn-consensus-py --features extension-module
    cp target/release/libwsn_py.so crates/python/python/wsn_py.so
    python3 crates/python/python/smoke_test.py
"""

import json
import math

import wsn_py


def main():
    g = wsn_py.Graph(3, [(0, 1), (1, 2)])
    assert g.n == 3 and g.edges == [(0, 1), (1, 2)]
    assert g.neighbors(1) == [0, 2]
    assert wsn_py.Graph.from_json(g.to_json()).to_json() == g.to_json()

    x = [1 + 2j, -3j, 5.0]
    y = wsn_py.average_consensus(g, x, rho=0.5)
    mean = sum(x) / 3
    assert all(abs(v - mean) < 1e-9 for v in y)

    rg = wsn_py.Graph.random(10, "geometric", 0.5, 42)
    assert rg.n == 10

    s = wsn_py.Scenario(n=8, seed=3)
    ones = s.ml_variance([1.0] * 8)
    opt = s.optimize()
    assert math.isclose(opt["initial_variance"], ones, rel_tol=1e-12)
    assert opt["final_variance"] <= opt["initial_variance"]
    assert math.isclose(sum(abs(a) ** 2 for a in opt["gains"]), 8.0, rel_tol=1e-9)

    est = s.estimate(gains=opt["gains"])
    c = est["centralized"]
    assert all(abs(e - c) <= 1e-6 * abs(c) for e in est["estimates"])

    cfg = json.dumps({"trials": 4, "n_list": [3, 5]})
    lines = wsn_py.variance_sweep(cfg).strip().splitlines()
    assert lines[0].startswith("n,trials,failures")
    assert len(lines) == 3

    ok, report = wsn_py.selfcheck(0)
    assert ok, report

    try:
        wsn_py.Graph(2, [(0, 0)])
    except ValueError:
        pass
    else:
        raise AssertionError("self-loop accepted")

    print("smoke test passed")


if __name__ == "__main__":
    main()
