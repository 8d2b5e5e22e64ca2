import functools

import numpy as np
import pytest

from alch.boundary import boundary_data
from alch.chart import Chart
from alch.models import GeometricModel, ModelSpec

# Small base grid for quick structural tests; the 7³ grid leaves a 3³ interior for CR stencils.
SMALL = Chart(grid=(5, 5, 5))
FULL = Chart()


def spec_of(kind, a=1.25, eps=0.0):
    if kind in ("cph_horo", "cph_polar"):
        return ModelSpec(kind, 1)
    return ModelSpec(kind, 1, a=a, eps=eps)


@functools.lru_cache(maxsize=None)
def model_of(kind, a=1.25, eps=0.0, h_x=1e-3):
    return GeometricModel(spec_of(kind, a, eps), h_x)


@functools.lru_cache(maxsize=None)
def run_boundary(kind, a=1.25, eps=0.0, full=False, seed=0):
    """Boundary pipeline with frames, cached across the session."""
    chart = FULL if full else SMALL
    return boundary_data(model_of(kind, a, eps), chart, seed=seed, with_frames=True)


@pytest.fixture(scope="session")
def horo():
    return run_boundary("cph_horo")


@pytest.fixture(scope="session")
def horo_full():
    return run_boundary("cph_horo", full=True)


@pytest.fixture(scope="session")
def polar_full():
    return run_boundary("cph_polar", full=True)


@pytest.fixture(scope="session")
def rotated_full():
    return run_boundary("rotated_J", 1.25, 0.1, full=True)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# -- acceptance summary --------------------------------------------------------------

ACCEPTANCE: dict = {}


def record(criterion: int, ok: bool, detail: str) -> None:
    """Log one check under an acceptance criterion; the terminal summary prints the roll-up."""
    ACCEPTANCE.setdefault(criterion, []).append((bool(ok), detail))


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for crit in sorted(ACCEPTANCE):
        checks = ACCEPTANCE[crit]
        bad = [d for ok, d in checks if not ok]
        status = "PASS" if not bad else "FAIL"
        tail = f"{len(checks)} checks" if not bad else f"{len(bad)}/{len(checks)} failed: " + "; ".join(bad)
        tr.write_line(f"criterion {crit}: {status}  ({tail})")
