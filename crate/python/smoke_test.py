"""Smoke test for the Python bindings.

Build and install first:
    pip install --no-build-isolation ./crates/py
"""

import json
import math

import graphbreak as gb


def main():
    b = gb.PerturbationBundle.construct(0.75, 32, eps=0.1, dim=1)
    assert abs(b.delta - 7 / 12) < 1e-12
    assert abs(b.extrema["min"] + b.delta) < 1e-9
    assert b.extrema["max"] <= 1 / 32
    assert abs(b.potential.mean) < 1e-12
    assert b.criterion()["verdict"] == "DestructionCertified"

    again = gb.PerturbationBundle.from_json(b.to_json())
    assert again.to_json() == b.to_json()
    assert json.loads(b.to_json())["N_achieved"] == b.n_achieved

    r = gb.destruction_verdict_1d(0.5, -0.8, 0.01)
    assert r["verdict"] == "DestructionCertified"
    assert gb.destruction_verdict_1d(0.5, 0.0, 0.0)["verdict"] == "NoConclusion"
    assert abs(gb.standard_map_threshold(0.5)["k0"] - 1.2) < 1e-12

    m = gb.Map1D(0.5, potential=gb.standard_map_potential(0.9))
    x, y = m.inverse(*m.forward(0.3, 0.1))
    assert abs(x - 0.3) < 1e-12 and abs(y - 0.1) < 1e-12
    assert abs(m.jacobian_det(0.3, 0.1) - 0.5) < 1e-6
    assert len(m.orbit(0.0, 0.0, 10)) == 11

    phi = gb.standard_map_potential(0.1)
    t = gb.graph_transform_1d(0.5, phi)
    assert t["status"] == "Converged"
    values = t["graph"]["components"][0]["values"]
    h = gb.herman_residual_1d(0.5, values, phi)
    assert h["residual_formula"] < 1e-8

    report = gb.simulate_1d(0.5, gb.standard_map_potential(2.0), starts=16)
    assert report["verdict"] == "NonGraph" and report["fold_detected"]

    p = gb.TrigPoly.cos_mode([1], 1.0)
    assert abs(p.eval([0.0]) - 1.0) < 1e-15
    assert abs(p.derivative([1]).eval([0.25]) + 2 * math.pi) < 1e-12

    try:
        gb.PerturbationBundle.construct(1.5, 8)
    except ValueError as e:
        assert "OutOfRange" in str(e)
    else:
        raise AssertionError("lambda = 1.5 accepted")

    print("python smoke test: ok")


if __name__ == "__main__":
    main()
