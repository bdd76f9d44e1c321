"""Shared solver fixtures.

The free packet is propagated once per snapshot time at session scope and the
extracted fields are reused across test modules; split-step propagation of a
free particle is a single exact phase multiply, so the real cost being
amortized is the repeated spectral extraction.
"""

import numpy as np
import pytest

from madelung_lab import (
    GaussianParams,
    PhysicalConstants,
    SpatialGrid,
    extract,
    initial_gaussian,
    propagate,
)

DT = 1e-3
SNAPSHOT_TIMES = (0.0, 1.0, 2.0, 4.0)
# half-width of the centered triples used for time derivatives, in steps
TRIPLE_HALF_STEPS = 5


@pytest.fixture(scope="session")
def grid():
    return SpatialGrid(-40.0, 40.0, 4096)


@pytest.fixture(scope="session")
def constants():
    return PhysicalConstants()


@pytest.fixture(scope="session")
def params(constants):
    return GaussianParams(sigma0=1.0, constants=constants)


@pytest.fixture(scope="session")
def initial_state(grid):
    return initial_gaussian(grid, 1.0)


@pytest.fixture(scope="session")
def snapshots(initial_state):
    """t -> WaveState at the standard snapshot times."""
    return {
        t: propagate(initial_state, DT, int(round(t / DT))) for t in SNAPSHOT_TIMES
    }


@pytest.fixture(scope="session")
def fields_by_time(snapshots):
    """t -> spectral MadelungFields at the standard snapshot times."""
    return {t: extract(s) for t, s in snapshots.items()}


@pytest.fixture(scope="session")
def triples(initial_state):
    """t -> (earlier, middle, later) states straddling each snapshot time.

    The t=0 triple is shifted a few steps in so the earlier member stays at
    nonnegative time; its middle sits at t = TRIPLE_HALF_STEPS * DT.
    """
    out = {}
    for t in SNAPSHOT_TIMES:
        center = max(int(round(t / DT)), TRIPLE_HALF_STEPS)
        out[t] = tuple(
            propagate(initial_state, DT, center + k)
            for k in (-TRIPLE_HALF_STEPS, 0, TRIPLE_HALF_STEPS)
        )
    return out


def rel_l2(approx: np.ndarray, target: np.ndarray, floor: float = 0.0) -> float:
    num = float(np.linalg.norm(approx - target))
    den = max(float(np.linalg.norm(target)), floor, np.finfo(float).tiny)
    return num / den
