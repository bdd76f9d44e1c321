"""Uniform 1D grids and the discrete calculus every other module rests on.

Derivatives come in two flavors so that downstream identities can always be
cross-checked scheme against scheme:

* ``spectral``: exact Fourier wavenumber multiplication on periodic grids.
  Before multiplying by (ik)^order the transform is passed through a noise
  floor: modes whose magnitude is at or below ``4 eps sum|f|`` are zeroed.
  Those modes carry only accumulated round-off from the O(n) summations
  inside the FFT, and multiplying them by k^3 would otherwise bury the tails
  of smooth densities in amplified rubble.  The filter is a no-op for fields
  whose spectrum is genuinely above the round-off floor.

* ``central4``: fourth-order centered stencils.  Periodic grids close by
  wrap-around; vanishing-boundary grids switch to one-sided rows of the same
  formal order near the edges, with weights obtained from the usual
  Vandermonde moment conditions.

Quadrature is the rectangle rule on periodic grids (spectrally accurate for
smooth periodic integrands) and the trapezoidal rule on vanishing grids.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property, lru_cache

import numpy as np

from .errors import SchemeBoundaryMismatch

PERIODIC = "periodic"
VANISHING = "vanishing"
BOUNDARIES = (PERIODIC, VANISHING)
SCHEMES = ("spectral", "central4")

# Relative noise floor for spectral differentiation, in units of eps*sum|f|.
NOISE_FLOOR_FACTOR = 4.0

# 4th-order interior stencils, offsets -half..+half.
_INTERIOR_STENCILS = {
    1: (np.array([1.0, -8.0, 0.0, 8.0, -1.0]) / 12.0, 2),
    2: (np.array([-1.0, 16.0, -30.0, 16.0, -1.0]) / 12.0, 2),
    3: (np.array([1.0, -8.0, 13.0, 0.0, -13.0, 8.0, -1.0]) / 8.0, 3),
}


@dataclass(frozen=True)
class SpatialGrid:
    """Uniform grid on [x_min, x_max] with periodic or vanishing boundary.

    Periodic grids exclude the right endpoint (x_max identifies with x_min),
    so dx = span/n_points; vanishing grids include both endpoints, so
    dx = span/(n_points - 1).
    """

    x_min: float
    x_max: float
    n_points: int
    boundary: str = PERIODIC

    def __post_init__(self):
        if not self.x_max > self.x_min:
            raise ValueError("x_max must exceed x_min")
        if self.n_points < 16:
            raise ValueError("need at least 16 grid points")
        if self.boundary not in BOUNDARIES:
            raise ValueError(f"boundary must be one of {BOUNDARIES}")

    @property
    def dx(self) -> float:
        span = self.x_max - self.x_min
        if self.boundary == PERIODIC:
            return span / self.n_points
        return span / (self.n_points - 1)

    @cached_property
    def x(self) -> np.ndarray:
        coords = self.x_min + self.dx * np.arange(self.n_points)
        coords.flags.writeable = False
        return coords

    @cached_property
    def wavenumbers(self) -> np.ndarray:
        if self.boundary != PERIODIC:
            raise SchemeBoundaryMismatch("wavenumbers exist only on periodic grids")
        k = 2.0 * np.pi * np.fft.fftfreq(self.n_points, d=self.dx)
        k.flags.writeable = False
        return k


@dataclass(frozen=True, eq=False)
class Field:
    """Per-node samples bound to the grid they live on.

    Values are copied in and frozen, so a Field never aliases caller
    buffers and never mutates after construction.
    """

    grid: SpatialGrid
    values: np.ndarray

    _dtype = None  # subclasses pin this

    def __post_init__(self):
        vals = np.asarray(self.values)
        if self._dtype is not None:
            if self._dtype is np.float64 and np.iscomplexobj(vals):
                raise ValueError("real field cannot hold complex values")
            vals = vals.astype(self._dtype, copy=True)
        else:
            vals = vals.copy()
        if vals.shape != (self.grid.n_points,):
            raise ValueError(
                f"values shape {vals.shape} does not match grid ({self.grid.n_points},)"
            )
        if not np.all(np.isfinite(vals)):
            raise ValueError("field values must be finite")
        vals.flags.writeable = False
        object.__setattr__(self, "values", vals)

    def __len__(self) -> int:
        return self.grid.n_points


class RealField(Field):
    _dtype = np.float64


class ComplexField(Field):
    _dtype = np.complex128


@lru_cache(maxsize=None)
def _difference_weights(offsets: tuple, order: int) -> np.ndarray:
    """Finite-difference weights on integer offsets for the given derivative.

    Solves the moment conditions sum_j c_j o_j^p = p! delta_{p,order} for
    p = 0..len(offsets)-1; the result applies as (c . f_window)/dx^order.
    """
    o = np.asarray(offsets, dtype=float)
    m = len(o)
    if order >= m:
        raise ValueError("not enough points for requested derivative order")
    vander = np.vander(o, m, increasing=True).T  # vander[p, j] = o_j**p
    rhs = np.zeros(m)
    rhs[order] = math.factorial(order)
    return np.linalg.solve(vander, rhs)


def _spectral_derivative(values: np.ndarray, grid: SpatialGrid, order: int) -> np.ndarray:
    fhat = np.fft.fft(values)
    floor = NOISE_FLOOR_FACTOR * np.finfo(float).eps * np.sum(np.abs(values))
    fhat[np.abs(fhat) <= floor] = 0.0
    out = np.fft.ifft((1j * grid.wavenumbers) ** order * fhat)
    return out.real if np.isrealobj(values) else out


def _central4_derivative(values: np.ndarray, grid: SpatialGrid, order: int) -> np.ndarray:
    coeffs, half = _INTERIOR_STENCILS[order]
    out = np.zeros_like(values)
    for c, off in zip(coeffs, range(-half, half + 1)):
        if c != 0.0:
            out += c * np.roll(values, -off)
    out /= grid.dx**order
    if grid.boundary == VANISHING:
        # one-sided closures of at least the interior order near both edges
        n = grid.n_points
        w = order + 5
        scale = grid.dx**order
        for i in range(half):
            wl = _difference_weights(tuple(range(-i, w - i)), order)
            out[i] = (wl @ values[:w]) / scale
            wr = _difference_weights(tuple(range(i + 1 - w, i + 1)), order)
            out[n - 1 - i] = (wr @ values[n - w:]) / scale
    return out


def derivative(f: Field, order: int, scheme: str = "spectral") -> Field:
    """Discrete d^order/dx^order of a field, same field kind out.

    Parameters
    ----------
    f : RealField or ComplexField
    order : 1, 2 or 3
        Third derivatives are computed directly ((ik)^3 in spectral space,
        a single 7-point stencil for central4), never by chaining first
        derivatives, to limit noise amplification.
    scheme : {"spectral", "central4"}
        "spectral" requires a periodic grid.
    """
    if order not in (1, 2, 3):
        raise ValueError("order must be 1, 2 or 3")
    if scheme == "spectral":
        if f.grid.boundary != PERIODIC:
            raise SchemeBoundaryMismatch(
                "spectral differentiation requires a periodic grid"
            )
        out = _spectral_derivative(f.values, f.grid, order)
    elif scheme == "central4":
        out = _central4_derivative(f.values, f.grid, order)
    else:
        raise ValueError(f"unknown scheme {scheme!r}")
    return f.__class__(f.grid, out)


def integrate(f: Field) -> float:
    """Quadrature over the grid: rectangle (periodic) or trapezoid (vanishing)."""
    if f.grid.boundary == PERIODIC:
        total = f.values.sum() * f.grid.dx
    else:
        total = np.trapezoid(f.values, dx=f.grid.dx)
    if np.iscomplexobj(f.values):
        return complex(total)
    return float(total)


def write_field_csv(path, f: RealField) -> None:
    """Serialize a real field as CSV columns (x, value), 17 significant digits."""
    np.savetxt(
        path,
        np.column_stack([f.grid.x, f.values]),
        delimiter=",",
        header="x,value",
        comments="",
        fmt="%.17g",
    )
