"""Shared fixtures and the acceptance summary printed at the end of a run."""

from __future__ import annotations

import numpy as np
import pytest

from fiberlink import FreqSeries

CRITERIA = {
    1: "uptime arithmetic",
    2: "cycle-slip hop",
    3: "RF reference contribution",
    4: "uncompensated thermal limit",
    5: "short-link scenario",
    6: "delay-limited residual floor",
    7: "estimator oracles",
    8: "selection pipeline",
    9: "budget combination",
    10: "reproducibility",
}

_outcomes: dict[int, list[bool]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n): acceptance criterion checked by this test")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    if rep.when == "call" or (rep.when == "setup" and not rep.passed):
        _outcomes.setdefault(marker.args[0], []).append(rep.passed)


def pytest_terminal_summary(terminalreporter):
    if not _outcomes:
        return
    terminalreporter.section("acceptance criteria")
    for n, label in CRITERIA.items():
        results = _outcomes.get(n)
        if results is None:
            status = "NOT RUN"
        else:
            status = "PASS" if all(results) else "FAIL"
        terminalreporter.write_line(f"[{status:7}] {n:2d}. {label}")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def make_series(y, valid=None, gate=1.0, t0=57900.0, nu0=194.4e12) -> FreqSeries:
    return FreqSeries(np.asarray(y, dtype=float), valid, t0=t0, gate=gate, nu0=nu0)


@pytest.fixture(scope="session")
def short_link():
    """Bundled 12-day 5 m interconnect scenario and its simulation."""
    from fiberlink import simulate_end_to_end
    from fiberlink.scenario import load_scenario

    sc = load_scenario("short-link-5m")
    res = simulate_end_to_end(sc.topology, sc.specs, sc.n, sc.gate, sc.seed, sc.t0, sc.nu0, sc.segments)
    return sc, res
