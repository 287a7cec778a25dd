"""Shared fixtures plus a terminal summary line per acceptance criterion."""

from __future__ import annotations

import dataclasses
import pathlib

import pytest

import crowdpricer as cp

REPO_ROOT = pathlib.Path(__file__).resolve().parent.parent

# criterion number -> (description, outcome), filled by the makereport hook
_ACCEPTANCE: dict[int, tuple[str, str]] = {}


def pytest_configure(config):
    config.addinivalue_line(
        "markers",
        "acceptance(num, desc): marks a test as covering one acceptance criterion",
    )


@pytest.hookimpl(wrapper=True)
def pytest_runtest_makereport(item, call):
    rep = yield
    marker = item.get_closest_marker("acceptance")
    if marker is not None and rep.when in ("setup", "call"):
        num, desc = marker.args
        if rep.skipped:
            _ACCEPTANCE[num] = (desc, "SKIP")
        elif rep.failed:
            _ACCEPTANCE[num] = (desc, "FAIL")
        elif rep.when == "call" and rep.passed:
            _ACCEPTANCE[num] = (desc, "PASS")
    return rep


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(_ACCEPTANCE):
        desc, outcome = _ACCEPTANCE[num]
        terminalreporter.write_line(f"criterion {num:2d} {outcome}: {desc}")


@pytest.fixture(scope="session")
def weekly_profile() -> cp.ArrivalProfile:
    profile = cp.load_arrival_csv(str(REPO_ROOT / "data" / "arrival_weekly.csv"))
    return dataclasses.replace(profile, periodic=True)


@pytest.fixture(scope="session")
def trained_model() -> cp.LogisticAcceptance:
    return cp.LogisticAcceptance(scale_s=15.0, bias_b=-0.39, market_mass_m=2000.0)


@pytest.fixture(scope="session")
def day_problem(weekly_profile, trained_model) -> cp.DeadlineProblem:
    """200 tasks over 24 hours in 20-minute intervals, prices 0..50."""
    return cp.DeadlineProblem(
        n_tasks=200,
        n_intervals=72,
        interval_seconds=1200,
        profile=weekly_profile,
        model=trained_model,
        grid=cp.PriceGrid(min_price=0, max_price=50),
    )
