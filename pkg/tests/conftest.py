import time

import pytest

from helm_sim import config
from helm_sim.model import load_vessel
from helm_sim.sim import run_scenario


@pytest.fixture(scope="session")
def vessel():
    return load_vessel("synthetic")


@pytest.fixture(scope="session")
def case_cfg():
    return config.load("case_study")


@pytest.fixture(scope="session")
def case_run(case_cfg):
    """The case-study scenario at dt = 0.01 with every step logged."""
    t0 = time.perf_counter()
    ts, mon = run_scenario(case_cfg.replace(log_every=1))
    return ts, mon, time.perf_counter() - t0


ACCEPTANCE: dict[int, str] = {}


@pytest.fixture(scope="session")
def verdict():
    """Record one PASS/FAIL line per acceptance criterion; printed at the end of the run."""

    def record(n: int, ok: bool, detail: str) -> bool:
        line = f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
        ACCEPTANCE[n] = line
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[n])
