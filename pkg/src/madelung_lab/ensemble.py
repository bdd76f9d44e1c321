"""Monte-Carlo ensembles consistent with a set of Madelung fields.

Positions are drawn from rho by inverse transform on its cumulative
quadrature.  Velocities use a local normal closure: given the fields supply
only the conditional mean u(x) and root-mean-square spread |u'(x)|, the
normal law is the maximum-entropy completion matching those two moments.
Every identity verified here depends only on the first two local moments,
so the closure choice biases none of the residuals; it does fix higher
local moments, which is stated wherever they are used.

Determinism contract: sampling is chunked (2^16 samples per chunk) and each
chunk draws from its own counter-based substream keyed by (seed, chunk
index).  Chunks are concatenated in index order, so results are bit-identical
for any worker count and across runs.  Global reductions use math.fsum
(exact, hence order independent); local estimators run on the position-sorted
ensemble via cumulative sums, a fixed evaluation order.

Ensembles are resampled per time slice from the evolved fields; no
trajectory is ever integrated under a force law.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import EmptyEnsemble, InsufficientSnapshots, SeedMismatch
from .fields import PERIODIC, RealField, SpatialGrid
from .madelung import MadelungFields

CHUNK_SIZE = 1 << 16
DEFAULT_BANDWIDTH_CELLS = 4
# finite-difference stride between probe nodes, in bandwidths; keeps the
# windows entering one stencil disjoint so their errors are independent
STRIDE_BANDWIDTHS = 4


@dataclass(frozen=True, eq=False)
class TrajectoryEnsemble:
    """(position, velocity) samples at one time plus their seed."""

    positions: np.ndarray
    velocities: np.ndarray
    time: float
    seed: int
    n_samples: int

    def __post_init__(self):
        if self.n_samples < 1:
            raise EmptyEnsemble("ensemble needs at least one sample")
        if len(self.positions) != self.n_samples or len(self.velocities) != self.n_samples:
            raise ValueError("positions/velocities must have n_samples entries")


@dataclass(frozen=True, eq=False)
class LocalMeanEstimate:
    """Top-hat binned conditional mean with per-bin uncertainty."""

    grid: SpatialGrid
    estimate: RealField
    counts: np.ndarray
    standard_error: RealField
    density: RealField
    mask: np.ndarray
    bandwidth: float


def _position_cdf(fields: MadelungFields):
    """Breakpoints and cumulative mass for inverse-transform sampling."""
    rho = fields.rho.values
    x = fields.grid.x
    dx = fields.grid.dx
    if fields.grid.boundary == PERIODIC:
        # piecewise-constant cells [x_i, x_i + dx)
        xs = np.concatenate([x, [x[-1] + dx]])
        cdf = np.concatenate([[0.0], np.cumsum(rho) * dx])
    else:
        xs = x
        cdf = np.concatenate([[0.0], np.cumsum(0.5 * (rho[:-1] + rho[1:]) * dx)])
    return xs, cdf


def _sample_chunk(seed, index, count, xs, cdf, x, u_vals, uprime_abs):
    rng = np.random.Generator(np.random.Philox(key=[seed, index]))
    uniforms = rng.random(count)
    normals = rng.standard_normal(count)
    positions = np.interp(uniforms * cdf[-1], cdf, xs)
    mean_v = np.interp(positions, x, u_vals)
    spread = np.interp(positions, x, uprime_abs)
    return positions, mean_v + spread * normals


def sample_ensemble(
    fields: MadelungFields, n: int, seed: int, n_workers: int = 1
) -> TrajectoryEnsemble:
    """Draw n (position, velocity) samples consistent with the fields.

    Deterministic given (seed, n): worker count only parallelizes chunks,
    never changes their content or order.
    """
    if n < 1:
        raise EmptyEnsemble("cannot sample an empty ensemble")
    if not 0 <= int(seed) < 2**64:
        raise ValueError("seed must fit in 64 bits")
    xs, cdf = _position_cdf(fields)
    x = fields.grid.x
    u_vals = fields.u.values
    uprime_abs = np.abs(fields.u_prime.values)

    n_chunks = (n + CHUNK_SIZE - 1) // CHUNK_SIZE
    sizes = [min(CHUNK_SIZE, n - i * CHUNK_SIZE) for i in range(n_chunks)]

    def run(i):
        return _sample_chunk(int(seed), i, sizes[i], xs, cdf, x, u_vals, uprime_abs)

    if n_workers > 1 and n_chunks > 1:
        with ThreadPoolExecutor(max_workers=n_workers) as pool:
            parts = list(pool.map(run, range(n_chunks)))
    else:
        parts = [run(i) for i in range(n_chunks)]

    positions = np.concatenate([p for p, _ in parts])
    velocities = np.concatenate([v for _, v in parts])
    return TrajectoryEnsemble(positions, velocities, fields.time, int(seed), n)


def _observable_values(ens: TrajectoryEnsemble, observable) -> np.ndarray:
    vals = np.asarray(observable(ens.positions, ens.velocities), dtype=float)
    if vals.ndim == 0:
        vals = np.full(ens.n_samples, float(vals))
    if vals.shape != (ens.n_samples,):
        raise ValueError("observable must return a scalar or one value per sample")
    return vals


def global_mean(ens: TrajectoryEnsemble, observable) -> float:
    """Unconditional sample mean, reduced with exact (fsum) summation."""
    vals = _observable_values(ens, observable)
    return math.fsum(vals) / ens.n_samples


def local_mean(
    ens: TrajectoryEnsemble, observable, grid: SpatialGrid, bandwidth: float | None = None
) -> LocalMeanEstimate:
    """Conditional mean of an observable in top-hat windows around grid nodes.

    The window at node x_j is [x_j - b/2, x_j + b/2) with b the bandwidth
    (default 4 grid cells).  Bins with zero count are masked, never
    zero-filled; standard_error is the per-bin sample std / sqrt(count).
    The density field is count/(n*bandwidth), the finite-sample density
    estimate at the nodes.
    """
    if ens.n_samples < 1:
        raise EmptyEnsemble("cannot estimate from an empty ensemble")
    bw = DEFAULT_BANDWIDTH_CELLS * grid.dx if bandwidth is None else float(bandwidth)
    if bw <= 0:
        raise ValueError("bandwidth must be positive")
    vals = _observable_values(ens, observable)

    order = np.argsort(ens.positions, kind="stable")
    xs = ens.positions[order]
    fs = vals[order]
    cum = np.concatenate([[0.0], np.cumsum(fs)])
    cum2 = np.concatenate([[0.0], np.cumsum(fs * fs)])

    lo = np.searchsorted(xs, grid.x - 0.5 * bw, side="left")
    hi = np.searchsorted(xs, grid.x + 0.5 * bw, side="left")
    counts = hi - lo
    occupied = counts > 0
    safe = np.maximum(counts, 1)

    sums = cum[hi] - cum[lo]
    estimate = np.where(occupied, sums / safe, 0.0)
    sq = cum2[hi] - cum2[lo]
    # sample variance, guarded against round-off negatives
    var = np.where(counts > 1, np.maximum(sq - sums**2 / safe, 0.0) / np.maximum(counts - 1, 1), 0.0)
    stderr = np.where(counts > 1, np.sqrt(var / safe), 0.0)
    density = counts / (ens.n_samples * bw)

    return LocalMeanEstimate(
        grid=grid,
        estimate=RealField(grid, estimate),
        counts=counts,
        standard_error=RealField(grid, stderr),
        density=RealField(grid, density),
        mask=occupied,
        bandwidth=bw,
    )


@dataclass(frozen=True, eq=False)
class ConsistencyReport:
    """Hydrodynamic balance residuals from estimated fields, with error bands."""

    times: tuple
    probe_x: np.ndarray
    continuity_residual: np.ndarray
    continuity_se: np.ndarray
    momentum_residual: np.ndarray
    momentum_se: np.ndarray
    bandwidth: float
    stride: float

    @property
    def continuity_sigmas(self) -> np.ndarray:
        return np.abs(self.continuity_residual) / self.continuity_se

    @property
    def momentum_sigmas(self) -> np.ndarray:
        return np.abs(self.momentum_residual) / self.momentum_se

    def passed(self, n_sigma: float = 5.0) -> bool:
        return bool(
            np.all(self.continuity_sigmas <= n_sigma)
            and np.all(self.momentum_sigmas <= n_sigma)
        )


def _window_stats(ens: TrajectoryEnsemble, centers: np.ndarray, bw: float):
    """Per-window count, mean v, variance of v, and their standard errors."""
    order = np.argsort(ens.positions, kind="stable")
    xs = ens.positions[order]
    vs = ens.velocities[order]
    cum = np.concatenate([[0.0], np.cumsum(vs)])
    cum2 = np.concatenate([[0.0], np.cumsum(vs * vs)])
    lo = np.searchsorted(xs, centers - 0.5 * bw, side="left")
    hi = np.searchsorted(xs, centers + 0.5 * bw, side="left")
    counts = hi - lo
    safe = np.maximum(counts, 1)
    sums = cum[hi] - cum[lo]
    sq = cum2[hi] - cum2[lo]
    mean = sums / safe
    var = np.maximum(sq - sums**2 / safe, 0.0) / np.maximum(counts - 1, 1)
    n = ens.n_samples
    return {
        "count": counts,
        "density": counts / (n * bw),
        # Poisson fluctuation of the occupation number
        "density_se": np.sqrt(safe) / (n * bw),
        "flux": sums / (n * bw),
        "flux_se": np.sqrt(np.maximum(sq, 0.0)) / (n * bw),
        "mean": mean,
        "mean_se": np.sqrt(var / safe),
        "var": var,
        # normal-theory spread of a sample variance
        "var_se": var * np.sqrt(2.0 / np.maximum(counts - 1, 1)),
    }


def consistency_check(ens_series, fields_series, bandwidth: float | None = None) -> ConsistencyReport:
    """Continuity and momentum-balance residuals from estimated fields.

    Both balances are evaluated at probe nodes on the central +-2 sigma
    region of the middle slice, with spatial derivatives taken at a stride
    of 4 bandwidths (disjoint windows, independent errors) and the time
    derivative centered across the outer slices.  The momentum balance
    compares Du/Dt + (1/rho) d(rho u'^2)/dx against the local-mean force
    per unit mass (hbar/2m)^2 (d3 rho/dx3)/rho evaluated on the estimated
    density alone.

    Reported bands treat all window statistics as independent; slices drawn
    from one seed are positively correlated, which only makes the bands
    conservative.
    """
    if len(ens_series) < 3:
        raise InsufficientSnapshots("need at least 3 time slices")
    if len(fields_series) != len(ens_series):
        raise ValueError("need one fields object per ensemble slice")
    seeds = {e.seed for e in ens_series}
    if len(seeds) != 1:
        raise SeedMismatch(f"slices carry different seeds: {sorted(seeds)}")
    times = np.array([e.time for e in ens_series])
    dts = np.diff(times)
    if np.any(dts <= 0) or np.max(np.abs(dts - dts[0])) > 1e-9 * dts[0]:
        raise ValueError("slices must be uniformly spaced in time")
    dt = dts[0]

    mid = len(ens_series) // 2
    grid = fields_series[mid].grid
    c = fields_series[mid].constants
    bw = DEFAULT_BANDWIDTH_CELLS * grid.dx if bandwidth is None else float(bandwidth)
    h = STRIDE_BANDWIDTHS * bw

    # probe nodes across +-2 sigma of the middle slice, spaced by the stride
    rho_mid = fields_series[mid].rho.values
    x = grid.x
    m1 = float(np.sum(x * rho_mid) * grid.dx)
    sigma_mid = math.sqrt(max(float(np.sum(x**2 * rho_mid) * grid.dx) - m1**2, 0.0))
    n_side = int(2.0 * sigma_mid / h)
    probe_x = m1 + np.arange(-n_side, n_side + 1) * h
    # stencil needs values out to +-2 strides around each probe
    eval_x = m1 + np.arange(-n_side - 2, n_side + 3) * h

    stats = [_window_stats(e, eval_x, bw) for e in ens_series]
    early, middle, late = stats[mid - 1], stats[mid], stats[mid + 1]
    sl = slice(2, -2)        # probe nodes inside eval_x
    plus = slice(3, -1)      # +h neighbors
    minus = slice(1, -3)     # -h neighbors
    plus2 = slice(4, None)   # +2h
    minus2 = slice(0, -4)    # -2h

    # continuity: d(density)/dt + d(flux)/dx
    cont = (late["density"][sl] - early["density"][sl]) / (2.0 * dt) + (
        middle["flux"][plus] - middle["flux"][minus]
    ) / (2.0 * h)
    cont_se = np.sqrt(
        (late["density_se"][sl] ** 2 + early["density_se"][sl] ** 2) / (2.0 * dt) ** 2
        + (middle["flux_se"][plus] ** 2 + middle["flux_se"][minus] ** 2) / (2.0 * h) ** 2
    )

    # momentum balance: du/dt + u du/dx + (1/rho) d(rho u'^2)/dx - F/m
    u_mid = middle["mean"][sl]
    du_dt = (late["mean"][sl] - early["mean"][sl]) / (2.0 * dt)
    du_dt_se2 = (late["mean_se"][sl] ** 2 + early["mean_se"][sl] ** 2) / (2.0 * dt) ** 2

    du_dx = (middle["mean"][plus] - middle["mean"][minus]) / (2.0 * h)
    du_dx_se2 = (middle["mean_se"][plus] ** 2 + middle["mean_se"][minus] ** 2) / (2.0 * h) ** 2
    advect = u_mid * du_dx
    advect_se2 = du_dx**2 * middle["mean_se"][sl] ** 2 + u_mid**2 * du_dx_se2

    # pressure flux rho u'^2 estimated as density * local variance
    pres = middle["density"] * middle["var"]
    pres_se = np.sqrt(
        (middle["var"] * middle["density_se"]) ** 2
        + (middle["density"] * middle["var_se"]) ** 2
    )
    dens = np.maximum(middle["density"][sl], np.finfo(float).tiny)
    pressure_term = (pres[plus] - pres[minus]) / (2.0 * h) / dens
    pressure_se2 = (pres_se[plus] ** 2 + pres_se[minus] ** 2) / (2.0 * h) ** 2 / dens**2

    # F/m = (hbar/2m)^2 rho'''/rho with the 5-point centered third derivative
    d = middle["density"]
    d3 = (d[plus2] - 2.0 * d[plus] + 2.0 * d[minus] - d[minus2]) / (2.0 * h**3)
    dse = middle["density_se"]
    d3_se2 = (
        dse[plus2] ** 2 + 4.0 * dse[plus] ** 2 + 4.0 * dse[minus] ** 2 + dse[minus2] ** 2
    ) / (2.0 * h**3) ** 2
    coef = (c.hbar / (2.0 * c.mass)) ** 2
    force = coef * d3 / dens
    force_se2 = coef**2 * (
        d3_se2 / dens**2 + (d3 / dens**2) ** 2 * middle["density_se"][sl] ** 2
    )

    mom = du_dt + advect + pressure_term - force
    mom_se = np.sqrt(du_dt_se2 + advect_se2 + pressure_se2 + force_se2)

    return ConsistencyReport(
        times=tuple(times),
        probe_x=probe_x,
        continuity_residual=cont,
        continuity_se=np.maximum(cont_se, np.finfo(float).tiny),
        momentum_residual=mom,
        momentum_se=np.maximum(mom_se, np.finfo(float).tiny),
        bandwidth=bw,
        stride=h,
    )


def write_ensemble_csv(path, ens: TrajectoryEnsemble, scenario_hash: str = "") -> Path:
    """Dump samples as CSV (x, v) with a JSON sidecar (seed, n, time, hash)."""
    path = Path(path)
    np.savetxt(
        path,
        np.column_stack([ens.positions, ens.velocities]),
        delimiter=",",
        header="x,v",
        comments="",
        fmt="%.17g",
    )
    sidecar = path.with_suffix(".json")
    sidecar.write_text(
        json.dumps(
            {
                "seed": ens.seed,
                "n_samples": ens.n_samples,
                "time": ens.time,
                "scenario_hash": scenario_hash,
            },
            indent=2,
            sort_keys=True,
        )
        + "\n"
    )
    return path


def write_estimate_csv(path, est: LocalMeanEstimate) -> Path:
    """Dump a local-mean estimate as CSV (x, estimate, stderr, count)."""
    path = Path(path)
    np.savetxt(
        path,
        np.column_stack(
            [est.grid.x, est.estimate.values, est.standard_error.values, est.counts]
        ),
        delimiter=",",
        header="x,estimate,stderr,count",
        comments="",
        fmt=["%.17g", "%.17g", "%.17g", "%d"],
    )
    return path
