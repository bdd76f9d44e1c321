"""Closed-form spreading-Gaussian solution and classical comparison regimes.

The quantum regime evaluates every hydrodynamic field analytically (no
differencing anywhere), so its only error is round-off; it is the trust
anchor certifying the numerical pipeline.  Two classical regimes exist for
width-growth comparison and provide only sigma(t) and u(x,t):

* diffusion: sigma = sqrt(2 D t), u = x/2t  (undefined at t = 0)
* ballistic: sigma = sigma0 + lambda t, u = lambda x / sigma
  (ballistic spreading with zero mean acceleration)

Quantum closed forms, with y = x - center - (p/m) t and
sigma^2(t) = sigma0^2 + (hbar t / 2 m sigma0)^2:

  rho  = exp(-y^2/2 sigma^2) / sqrt(2 pi sigma^2)
  u    = y d(ln sigma)/dt + p/m = y (hbar/2 m sigma0)^2 t / sigma^2 + p/m
  u'   = hbar y / 2 m sigma^2
  Q    = (hbar^2/2m) (1/2 sigma^2 - y^2/4 sigma^4)
  Du/Dt = (hbar/2m)^2 y / sigma^4
  F    = m (Du/Dt) (3 - y^2/sigma^2)
  p_g  = (rho/m) (hbar/2 sigma)^2 (y/sigma)^2
  p_v  = (rho/m) (hbar/2 sigma)^2 (1 - (y/sigma)^2)
"""

from __future__ import annotations

from dataclasses import dataclass, field as dataclass_field

import numpy as np

from .errors import DiffusionAtZero
from .fields import RealField, SpatialGrid
from .madelung import MASK_EPS, MadelungFields
from .schrodinger import PhysicalConstants

REGIMES = ("quantum", "diffusion", "ballistic")


@dataclass(frozen=True)
class GaussianParams:
    sigma0: float
    constants: PhysicalConstants = dataclass_field(default_factory=PhysicalConstants)
    regime: str = "quantum"
    diffusion_coeff: float | None = None
    spreading_rate: float | None = None

    def __post_init__(self):
        if self.sigma0 <= 0:
            raise ValueError("sigma0 must be positive")
        if self.regime not in REGIMES:
            raise ValueError(f"regime must be one of {REGIMES}")
        if self.regime == "diffusion":
            if self.diffusion_coeff is None or self.diffusion_coeff <= 0:
                raise ValueError("diffusion regime requires diffusion_coeff > 0")
        if self.regime == "ballistic":
            if self.spreading_rate is None or self.spreading_rate < 0:
                raise ValueError("ballistic regime requires spreading_rate >= 0")


def sigma(params: GaussianParams, t: float) -> float:
    """Packet width at time t for the configured regime."""
    if t < 0:
        raise ValueError("t must be nonnegative")
    c = params.constants
    if params.regime == "quantum":
        return float(np.hypot(params.sigma0, c.hbar * t / (2.0 * c.mass * params.sigma0)))
    if params.regime == "diffusion":
        if t == 0:
            raise DiffusionAtZero("sqrt(2 D t) has no packet width at t = 0")
        return float(np.sqrt(2.0 * params.diffusion_coeff * t))
    return params.sigma0 + params.spreading_rate * t


def flow_velocity(params: GaussianParams, x, t: float):
    """u(x, t) for the configured regime (elementwise in x)."""
    x = np.asarray(x, dtype=float)
    if params.regime == "quantum":
        c = params.constants
        s2 = sigma(params, t) ** 2
        return (c.hbar / (2.0 * c.mass * params.sigma0)) ** 2 * x * t / s2
    if params.regime == "diffusion":
        if t == 0:
            raise DiffusionAtZero("u = x/2t is undefined at t = 0")
        return x / (2.0 * t)
    return params.spreading_rate * x / sigma(params, t)


def osmotic_velocity(params: GaussianParams, x, t: float):
    """u'(x, t) = hbar x / 2 m sigma^2 (quantum regime only)."""
    if params.regime != "quantum":
        raise ValueError("osmotic velocity is defined only in the quantum regime")
    c = params.constants
    return c.hbar * np.asarray(x, dtype=float) / (2.0 * c.mass * sigma(params, t) ** 2)


def material_acceleration(params: GaussianParams, x, t: float):
    """Du/Dt = (hbar/2m)^2 x / sigma^4 (quantum regime only)."""
    if params.regime != "quantum":
        raise ValueError("material acceleration is defined only in the quantum regime")
    c = params.constants
    return (c.hbar / (2.0 * c.mass)) ** 2 * np.asarray(x, dtype=float) / sigma(params, t) ** 4


def mean_energy(params: GaussianParams) -> float:
    """(m/2)(hbar/2m sigma0)^2, the conserved mean energy of the packet.

    Equals the quadrature of (m/2)(u^2 + u'^2) rho at any time, and
    (m/4) d2<X^2>/dt2 with <X^2> = sigma^2(t).
    """
    if params.regime != "quantum":
        raise ValueError("mean energy is defined only in the quantum regime")
    c = params.constants
    return 0.5 * c.mass * (c.hbar / (2.0 * c.mass * params.sigma0)) ** 2


def fields_closed_form(
    params: GaussianParams,
    grid: SpatialGrid,
    t: float,
    center: float = 0.0,
    momentum: float = 0.0,
    mask_eps: float = MASK_EPS,
) -> MadelungFields:
    """All Madelung fields evaluated analytically on the grid.

    Nonzero center/momentum apply the Galilean shift y = x - c - (p/m) t and
    the uniform velocity offset p/m; widths and shapes are unaffected.
    Quantum regime only.
    """
    if params.regime != "quantum":
        raise ValueError("closed-form fields exist only in the quantum regime")
    c = params.constants
    s = sigma(params, t)
    s2 = s * s
    x = grid.x
    y = x - center - (momentum / c.mass) * t

    rho = np.exp(-(y**2) / (2.0 * s2)) / np.sqrt(2.0 * np.pi * s2)
    mask = rho > mask_eps * rho.max()

    rate = (c.hbar / (2.0 * c.mass * params.sigma0)) ** 2 * t / s2  # d(ln sigma)/dt
    u = np.where(mask, y * rate + momentum / c.mass, 0.0)
    uprime = np.where(mask, c.hbar * y / (2.0 * c.mass * s2), 0.0)
    q = np.where(
        mask,
        (c.hbar**2 / (2.0 * c.mass)) * (1.0 / (2.0 * s2) - y**2 / (4.0 * s2 * s2)),
        0.0,
    )
    accel = (c.hbar / (2.0 * c.mass)) ** 2 * y / (s2 * s2)
    fbar = np.where(mask, c.mass * accel * (3.0 - y**2 / s2), 0.0)
    unit = (rho / c.mass) * (c.hbar / (2.0 * s)) ** 2
    p_g = unit * (y**2 / s2)
    p_v = unit * (1.0 - y**2 / s2)

    # action: S = m y^2 sigma_dot / 2 sigma - (hbar/2) arctan(hbar t / 2 m sigma0^2)
    #         + p (x - c) - p^2 t / 2m, the exact phase of the spreading packet
    phase = (
        0.5 * c.mass * y**2 * rate
        - 0.5 * c.hbar * np.arctan(c.hbar * t / (2.0 * c.mass * params.sigma0**2))
        + momentum * (x - center)
        - momentum**2 * t / (2.0 * c.mass)
    )
    phase = np.where(mask, phase, 0.0)

    make = lambda v: RealField(grid, v)
    return MadelungFields(
        grid=grid,
        time=t,
        constants=c,
        scheme="closed_form",
        mask_eps=mask_eps,
        rho=make(rho),
        phase_S=make(phase),
        u=make(u),
        u_prime=make(uprime),
        Q=make(q),
        F_bar=make(fbar),
        p_g=make(p_g),
        p_v=make(p_v),
        mask=mask,
    )
