import time

import pytest

from ilcmbk import harness
from ilcmbk.plant import PRESET_NAMES

ACCEPTANCE = {}


def record_acceptance(number: int, title: str, ok: bool, detail: str = ""):
    ACCEPTANCE[number] = (title, ok, detail)


@pytest.fixture(scope="session")
def protocol_runs():
    """Final force RMSE of every preset x method at 750 trials, plus wall time."""
    start = time.perf_counter()
    out = {}
    for task in PRESET_NAMES:
        for method in harness.METHODS:
            cfg = harness.load_config(overrides={"experiment": {"task": task, "method": method}})
            curve, _, _ = harness.execute(cfg)
            out[task, method] = curve.final_rmse_force
    return out, time.perf_counter() - start


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        title, ok, detail = ACCEPTANCE[number]
        line = f"{'PASS' if ok else 'FAIL'} {number}. {title}"
        terminalreporter.write_line(line + (f" ({detail})" if detail else ""))
