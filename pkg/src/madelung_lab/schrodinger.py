"""Free-particle 1D Schrodinger propagation.

Two propagators cross-validate each other:

* ``splitstep``: spectral kinetic evolution on a periodic grid.  With no
  potential the Hamiltonian is diagonal in momentum space, so the whole
  interval is a single exact phase multiply exp(-i hbar k^2 t / 2m); the only
  error is the spatial discretization of the initial state.

* ``implicit``: Crank-Nicolson with a 4th-order 5-point Laplacian on a
  vanishing-boundary grid (wavefunction treated as zero beyond the edges).
  The update is the Cayley form (1 + i dt H/2hbar) psi' = (1 - i dt H/2hbar)
  psi, unconditionally stable and unitary for the symmetric discrete H; the
  sparse LU factorization is computed once per call and reused across steps.

Both guard against wrap-around or reflection contamination: a propagated
state whose boundary density exceeds 1e-12 of the peak aborts.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sparse
import scipy.sparse.linalg as sparse_linalg

from .errors import GridTooNarrow, MethodBoundaryMismatch, NormDrift
from .fields import PERIODIC, VANISHING, ComplexField, RealField, SpatialGrid, integrate

NORM_TOLERANCE = 1e-6
# absolute boundary-density budget for a fresh normalized Gaussian
EDGE_DENSITY_INITIAL = 1e-14
# relative-to-peak budget checked after every propagate call
EDGE_DENSITY_RUNNING = 1e-12

# 4th-order 5-point Laplacian, offsets -2..2
_LAPLACIAN_STENCIL = np.array([-1.0, 16.0, -30.0, 16.0, -1.0]) / 12.0


@dataclass(frozen=True)
class PhysicalConstants:
    hbar: float = 1.0
    mass: float = 1.0

    def __post_init__(self):
        if not (self.hbar > 0 and self.mass > 0):
            raise ValueError("hbar and mass must be strictly positive")


@dataclass(frozen=True, eq=False)
class WaveState:
    """Complex wavefunction samples at one time."""

    psi: ComplexField
    time: float
    constants: PhysicalConstants = field(default_factory=PhysicalConstants)

    @property
    def grid(self) -> SpatialGrid:
        return self.psi.grid

    def density(self) -> RealField:
        return RealField(self.grid, np.abs(self.psi.values) ** 2)

    def norm(self) -> float:
        return float(np.sqrt(integrate(self.density())))


def initial_gaussian(
    grid: SpatialGrid,
    sigma0: float,
    center: float = 0.0,
    momentum: float = 0.0,
    constants: PhysicalConstants | None = None,
) -> WaveState:
    """Minimum-uncertainty Gaussian packet at t = 0.

    psi = (2 pi sigma0^2)^(-1/4) exp(-(x-c)^2 / 4 sigma0^2 + i p x / hbar),
    so the probability density has standard deviation sigma0.

    Raises GridTooNarrow when the boundary density is not below 1e-14,
    i.e. the grid cannot hold the packet without edge contamination.
    """
    if sigma0 <= 0:
        raise ValueError("sigma0 must be positive")
    constants = constants or PhysicalConstants()
    x = grid.x
    envelope = (2.0 * np.pi * sigma0**2) ** (-0.25) * np.exp(
        -((x - center) ** 2) / (4.0 * sigma0**2)
    )
    psi = envelope * np.exp(1j * momentum * x / constants.hbar)
    rho_edges = max(abs(psi[0]) ** 2, abs(psi[-1]) ** 2)
    if rho_edges >= EDGE_DENSITY_INITIAL:
        raise GridTooNarrow(
            f"boundary density {rho_edges:.3e} >= {EDGE_DENSITY_INITIAL:.0e}; "
            "widen the grid or shrink sigma0"
        )
    return WaveState(ComplexField(grid, psi), 0.0, constants)


def _check_norm(state: WaveState) -> None:
    drift = abs(state.norm() - 1.0)
    if drift > NORM_TOLERANCE:
        raise NormDrift(f"norm deviates from unity by {drift:.3e}")


def _check_edges(state: WaveState) -> None:
    rho = np.abs(state.psi.values) ** 2
    edge = max(rho[0], rho[-1])
    if edge > EDGE_DENSITY_RUNNING * rho.max():
        raise GridTooNarrow(
            f"boundary density {edge:.3e} exceeds {EDGE_DENSITY_RUNNING:.0e} "
            f"of peak at t={state.time:g}; packet no longer fits the grid"
        )


def _splitstep(state: WaveState, dt: float, n_steps: int) -> np.ndarray:
    if state.grid.boundary != PERIODIC:
        raise MethodBoundaryMismatch("splitstep requires a periodic grid")
    k = state.grid.wavenumbers
    c = state.constants
    # V = 0 makes the kinetic factor exact over the whole interval
    phase = np.exp(-1j * c.hbar * k**2 * (n_steps * dt) / (2.0 * c.mass))
    return np.fft.ifft(phase * np.fft.fft(state.psi.values))


def _implicit(state: WaveState, dt: float, n_steps: int) -> np.ndarray:
    if state.grid.boundary != VANISHING:
        raise MethodBoundaryMismatch("implicit method requires a vanishing-boundary grid")
    grid = state.grid
    c = state.constants
    n = grid.n_points
    diags = [np.full(n - abs(off), _LAPLACIAN_STENCIL[off + 2]) for off in range(-2, 3)]
    laplacian = sparse.diags(diags, offsets=range(-2, 3), format="csc") / grid.dx**2
    hamiltonian = -(c.hbar**2 / (2.0 * c.mass)) * laplacian
    identity = sparse.identity(n, format="csc", dtype=complex)
    z = 1j * dt / (2.0 * c.hbar)
    forward = (identity + z * hamiltonian).tocsc()
    backward = (identity - z * hamiltonian).tocsr()
    solver = sparse_linalg.splu(forward)
    psi = state.psi.values.copy()
    for _ in range(n_steps):
        psi = solver.solve(backward @ psi)
    return psi


def propagate(
    state: WaveState, dt: float, n_steps: int, method: str = "splitstep"
) -> WaveState:
    """Advance a state by n_steps * dt under the free-particle Hamiltonian.

    Parameters
    ----------
    state : WaveState
    dt : float
        Step size, strictly positive.
    n_steps : int
        Number of steps; 0 returns the state unchanged.
    method : {"splitstep", "implicit"}
        splitstep needs a periodic grid, implicit a vanishing one.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    if n_steps < 0:
        raise ValueError("n_steps must be nonnegative")
    _check_norm(state)
    if n_steps == 0:
        return state
    if method == "splitstep":
        psi = _splitstep(state, dt, n_steps)
    elif method == "implicit":
        psi = _implicit(state, dt, n_steps)
    else:
        raise ValueError(f"unknown method {method!r}")
    out = WaveState(
        ComplexField(state.grid, psi), state.time + n_steps * dt, state.constants
    )
    _check_norm(out)
    _check_edges(out)
    return out


def write_snapshots(out_dir, states, prefix: str = "snapshot") -> list[Path]:
    """Dump states as CSV (x, Re psi, Im psi, rho) plus a JSON manifest."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    for i, s in enumerate(states):
        path = out_dir / f"{prefix}_{i:03d}.csv"
        vals = s.psi.values
        np.savetxt(
            path,
            np.column_stack([s.grid.x, vals.real, vals.imag, np.abs(vals) ** 2]),
            delimiter=",",
            header="x,re_psi,im_psi,rho",
            comments="",
            fmt="%.17g",
        )
        paths.append(path)
    grid = states[0].grid
    c = states[0].constants
    manifest = {
        "times": [s.time for s in states],
        "hbar": c.hbar,
        "mass": c.mass,
        "grid": {
            "x_min": grid.x_min,
            "x_max": grid.x_max,
            "n_points": grid.n_points,
            "boundary": grid.boundary,
        },
        "files": [p.name for p in paths],
    }
    manifest_path = out_dir / f"{prefix}_manifest.json"
    manifest_path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    paths.append(manifest_path)
    return paths
