import json
import math

import numpy as np
import pytest

from yamabe_surgery.bending import BendingParams, construct_gamma
from yamabe_surgery.pipeline import (CSV_HEADER, PHASES, PlanError, SurgeryPlan, canonical_json,
                                     emit_report, export_curve_csv, grid_scale, load_report,
                                     run_surgery_plan)
from yamabe_surgery.yamabe import theorem1_certificate

from conftest import load_plan_dict


def claim(report, name):
    return next(c for c in report["claims"] if c["name"] == name)


def test_flat_plan_passes_every_claim(flat_report):
    assert flat_report["passed"]
    assert flat_report["aborted_at"] is None
    assert all(c["passed"] for c in flat_report["claims"])
    assert set(PHASES) <= set(flat_report["phases"])


def test_report_carries_certificate_inputs(flat_report):
    r = flat_report
    assert r["s_min_measured"] >= r["s_g_min"] - r["eps0"] - 1e-3
    assert r["volume_measured"] <= r["volume_g"] + r["eps0"] + 1e-3
    assert r["end_form_residual"] <= 1e-3
    assert sum(r["phase_budgets"]["curvature"]) <= r["eps0"] * (1 + 1e-12)
    assert r["delta"] > 0 and r["sphere_radius"] == pytest.approx(r["delta"] / 2)
    cert = theorem1_certificate(r, r)
    assert cert.passed


def test_run_is_deterministic(flat_report, plan_dir):
    again = run_surgery_plan(SurgeryPlan.load(plan_dir / "flat_torus.json"))
    assert canonical_json(again) == canonical_json(flat_report)


def test_negative_control_stops_at_the_bend(plan_dir):
    r = run_surgery_plan(SurgeryPlan.load(plan_dir / "negative_control.json"))
    assert not r["passed"]
    assert r["aborted_at"] == "bend"
    assert not claim(r, "bend_certificate")["passed"]
    assert "H1" not in r["phases"]


def test_delta_cap_is_enforced():
    d = load_plan_dict("flat_torus")
    d["delta"] = 1e-30
    r = run_surgery_plan(SurgeryPlan.from_dict(d))
    assert r["aborted_at"] == "bend"
    assert not claim(r, "delta_cap")["passed"]


@pytest.mark.parametrize("change", [
    {"eps0": 0.0}, {"r1": -1.0}, {"delta": 0.0}, {"sphere_radius": -1.0}, {"A": -2.0},
    {"target_w_metric": {"kind": "twisted"}}, {"target_w_metric": {"kind": "scaled"}},
    {"model": {"n": 4}}, {"colour": "red"}, {"grid": {"points": 3}},
])
def test_invalid_plans_are_rejected(change):
    d = load_plan_dict("flat_torus")
    d.update(change)
    with pytest.raises(PlanError):
        SurgeryPlan.from_dict(d)


def test_plan_round_trip(plan_dir):
    plan = SurgeryPlan.load(plan_dir / "perturbed_tube.json")
    assert SurgeryPlan.from_dict(json.loads(json.dumps(plan.to_dict()))) == plan


def test_grid_scale_from_environment(monkeypatch):
    monkeypatch.setenv("SURGERY_GRID_SCALE", "0.5")
    assert grid_scale() == 0.5
    monkeypatch.setenv("SURGERY_GRID_SCALE", "fast")
    with pytest.raises(PlanError):
        grid_scale()
    monkeypatch.setenv("SURGERY_GRID_SCALE", "-1")
    with pytest.raises(PlanError):
        grid_scale()


def test_canonical_json_format():
    text = canonical_json({"b": 1.0, "a": [True, None, np.float64(0.5), np.int64(3)],
                           "c": float("nan"), "d": np.bool_(False), "e": {}})
    assert text == ('{\n  "a": [\n    true,\n    null,\n    5.000000000000e-01,\n    3\n  ],\n'
                    '  "b": 1.000000000000e+00,\n  "c": "nan",\n  "d": false,\n  "e": {}\n}\n')
    with pytest.raises(TypeError):
        canonical_json({"x": object()})


def test_emit_report_round_trip(tmp_path, flat_report):
    path = tmp_path / "report.json"
    emit_report(flat_report, path)
    loaded = load_report(path)
    assert loaded["passed"] is True
    assert loaded["s_min_measured"] == pytest.approx(flat_report["s_min_measured"], rel=1e-11)
    assert [p.name for p in tmp_path.iterdir()] == ["report.json"]


def test_emit_report_needs_an_existing_directory(tmp_path):
    with pytest.raises(FileNotFoundError):
        emit_report({"a": 1}, tmp_path / "missing" / "report.json")


def test_curve_csv(tmp_path):
    curve = construct_gamma(BendingParams(r1=0.05, eps0=0.3, A=1.0, n=4, k=1, epsilon=0.2))
    path = tmp_path / "curve.csv"
    rows = export_curve_csv(curve, path, samples=50)
    lines = path.read_text().splitlines()
    assert rows == 51 and len(lines) == 52
    assert lines[0] == CSV_HEADER
    first = [float(v) for v in lines[1].split(",")]
    last = [float(v) for v in lines[-1].split(",")]
    assert first[0] == 0.0 and first[3] == 0.0
    assert last[0] == pytest.approx(curve.length)
    assert last[3] == pytest.approx(math.pi / 2)
    with pytest.raises(ValueError):
        export_curve_csv(curve, path, samples=0)


def test_perturbed_pair_certificate_within_slack(plan_dir):
    r = run_surgery_plan(SurgeryPlan.load(plan_dir / "perturbed_tube.json"))
    assert r["passed"]
    cert = theorem1_certificate(r, r)
    assert cert.glue_bound < 0
    assert cert.passed
    assert cert.certificate <= 0
