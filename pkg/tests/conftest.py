import numpy as np
import pytest

from gismc import contours
from gismc.config import default_config


def pytest_sessionstart(session):
    # implicit-vs-parametric consistency of the built-in contours
    contours.self_check()


@pytest.fixture(scope="session")
def cfg():
    return default_config()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def short(cfg, duration=0.05, **over):
    return cfg.with_overrides(**{"sim.duration": duration, **over})


def simulate(cfg, duration=0.05, **over):
    """One learning-free iteration of a shortened default config."""
    from gismc.sim import run_iteration
    c = short(cfg, duration, **over)
    return run_iteration(c.plant, c.sim, c.disturbance, c.controller, None, c.task)


# criterion number -> (passed, detail); filled by test_acceptance.py
ACCEPTANCE = {}


def record_criterion(n, ok, detail):
    ACCEPTANCE[n] = (bool(ok), detail)
    print(f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}")
    return ok


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
