import json

import pytest

from annealed_walk import validation as V
from annealed_walk.geometry import gamma


def test_gamma_check_passes():
    assert V.gamma_monotone(gamma)
    assert V.check_gamma().passed


def test_mutated_gamma_detected():
    """A sign-flipped rate must be caught by the monotonicity check."""
    def flipped(k, l, d, c0):
        return -gamma(k, l, d, c0)

    assert not V.gamma_monotone(flipped)
    assert not V.check_gamma(flipped).passed


def test_mutated_gamma_constant_detected():
    def frozen(k, l, d, c0):
        return gamma(min(k, 1), l, d, c0)

    assert not V.check_gamma(frozen).passed


def test_oracle_exactness():
    res = V.check_oracle_exactness()
    assert res.passed and res.measured["Z2"] == 5 / 32


def test_constants_report_lists_failing_entry():
    res = V.check_constants()
    m = res.measured
    assert abs(m["c_dp"]["value"] - 3.5486) <= 1e-3
    assert abs(m["rho_coefficient"]["value"] - 1.5999) <= 1e-3
    assert m["lambda1"]["value"] == pytest.approx(4.5421036, abs=1e-7)
    assert res.detail == ("" if res.passed else "failing: lambda1")


def test_small_checks():
    assert V.check_lattice_invariants().passed
    assert V.check_crossings(n_paths=100).passed
    assert V.check_skeletal(n_env=50, n_sparse=1).passed


def test_suite_levels():
    quick = [name for name, _, _ in V.suite("quick")]
    full = [name for name, _, _ in V.suite("full")]
    assert "scaling_trend" not in quick and full[-1] == "scaling_trend"
    assert set(quick) < set(full)
    assert len(quick) == len(set(quick))


def test_report_json(monkeypatch):
    def ok():
        return V.CheckResult("ok", True, {"x": 1.5})

    def boom():
        raise RuntimeError("broken")

    monkeypatch.setattr(V, "suite", lambda level: [("ok", ok, {}), ("boom", boom, {})])
    lines = []
    rep = V.run_validation_suite("quick", log=lines.append)
    assert not rep.passed and rep.failed() == ["boom"]
    data = json.loads(rep.to_json())
    assert data["level"] == "quick"
    status = {c["name"]: c["status"] for c in data["checks"]}
    assert status == {"ok": "pass", "boom": "fail"}
    assert "broken" in [c for c in data["checks"] if c["name"] == "boom"][0]["detail"]
    assert len(lines) == 2


def test_unknown_level():
    with pytest.raises(ValueError):
        V.run_validation_suite("medium")
