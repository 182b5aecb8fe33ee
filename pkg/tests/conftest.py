"""Shared fixtures: ground states are shot once per session and reused."""

import time
import warnings

import pytest

from lanemden.bubble import make_exponents, shoot_ground_state, tail_constants
from lanemden.constants import compute_constants

POINTS = [(4, 1.25), (5, 1.3), (6, 1.2)]

_SHOTS = {}
ACCEPTANCE = {}


def shot(N, p):
    """``(profile, tails, seconds)`` for ``(N, p)``, computed at most once."""
    key = (N, p)
    if key not in _SHOTS:
        exps = make_exponents(N, p)
        t0 = time.perf_counter()
        prof = shoot_ground_state(exps)
        tails = tail_constants(prof)
        _SHOTS[key] = (prof, tails, time.perf_counter() - t0)
    return _SHOTS[key]


@pytest.fixture(scope="session")
def exps6():
    return make_exponents(6, 1.2)


@pytest.fixture(scope="session")
def profile6():
    return shot(6, 1.2)[0]


@pytest.fixture(scope="session")
def tails6():
    return shot(6, 1.2)[1]


@pytest.fixture(scope="session")
def constants6(profile6):
    return compute_constants(profile6)


@pytest.fixture(scope="session")
def reduced6(profile6, tails6, constants6):
    from lanemden.reduced import ReducedConstants
    return ReducedConstants.from_parts(constants6, tails6, profile6.exps)


@pytest.fixture
def record_acceptance():
    """Store one pass/fail line per acceptance criterion for the terminal summary."""
    def record(number, title, passed, detail=""):
        ACCEPTANCE[number] = (title, bool(passed), detail)
        print(f"criterion {number} [{'PASS' if passed else 'FAIL'}] {title}: {detail}")
    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        title, ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"{n}. {'PASS' if ok else 'FAIL'}  {title}  ({detail})")


def pytest_configure(config):
    warnings.filterwarnings("ignore", category=RuntimeWarning, module="scipy")
