import json
from pathlib import Path

import pytest

PLANS = Path(__file__).resolve().parent.parent / "plans"


@pytest.fixture(scope="session")
def plan_dir():
    return PLANS


@pytest.fixture(scope="session")
def flat_report():
    from yamabe_surgery.pipeline import SurgeryPlan, run_surgery_plan
    return run_surgery_plan(SurgeryPlan.load(PLANS / "flat_torus.json"))


def load_plan_dict(name):
    with open(PLANS / f"{name}.json") as fh:
        return json.load(fh)


def pytest_terminal_summary(terminalreporter):
    mod = __import__("sys").modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(results):
        terminalreporter.write_line(results[number])
