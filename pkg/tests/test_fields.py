"""Grid, field container, derivative, and quadrature behavior."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from madelung_lab import (
    ComplexField,
    RealField,
    SchemeBoundaryMismatch,
    SpatialGrid,
    derivative,
    integrate,
)

# d3/dx3 exp(-x^2/2) = x (3 - x^2) exp(-x^2/2); values frozen from an exact
# symbolic evaluation, independent of everything in this package
GAUSSIAN_D3 = {
    -2.0: 0.2706705664732254,
    -0.5: -1.2134332410538187,
    0.7: 1.3752118736909624,
    1.3: 0.7315361810328886,
    3.1: -0.1677946724855392,
}


# --- grids ------------------------------------------------------------------


def test_periodic_grid_excludes_right_endpoint():
    g = SpatialGrid(-40.0, 40.0, 800)
    assert g.dx == pytest.approx(0.1)
    assert g.x[0] == -40.0
    assert g.x[-1] == pytest.approx(40.0 - g.dx)
    assert len(g.x) == 800


def test_vanishing_grid_includes_both_endpoints():
    g = SpatialGrid(-2.0, 2.0, 65, boundary="vanishing")
    assert g.dx == pytest.approx(4.0 / 64.0)
    assert g.x[0] == -2.0
    assert g.x[-1] == pytest.approx(2.0)


def test_grid_rejects_bad_construction():
    with pytest.raises(ValueError):
        SpatialGrid(1.0, 1.0, 64)
    with pytest.raises(ValueError):
        SpatialGrid(-1.0, 1.0, 8)
    with pytest.raises(ValueError):
        SpatialGrid(-1.0, 1.0, 64, boundary="absorbing")


def test_wavenumbers_require_periodic_grid():
    with pytest.raises(SchemeBoundaryMismatch):
        SpatialGrid(-1.0, 1.0, 64, boundary="vanishing").wavenumbers
    k = SpatialGrid(-1.0, 1.0, 64).wavenumbers
    assert k[0] == 0.0
    assert not k.flags.writeable


# --- field container --------------------------------------------------------


def test_field_values_are_copied_and_frozen():
    g = SpatialGrid(-1.0, 1.0, 64)
    src = np.ones(64)
    f = RealField(g, src)
    src[:] = 7.0
    assert np.all(f.values == 1.0)
    with pytest.raises(ValueError):
        f.values[0] = 2.0


def test_field_validation():
    g = SpatialGrid(-1.0, 1.0, 64)
    with pytest.raises(ValueError):
        RealField(g, np.ones(63))
    with pytest.raises(ValueError):
        RealField(g, np.ones(64) * np.nan)
    with pytest.raises(ValueError):
        RealField(g, np.ones(64, dtype=complex))
    assert ComplexField(g, np.ones(64)).values.dtype == np.complex128


# --- derivatives ------------------------------------------------------------


def test_spectral_derivative_matches_symbolic_gaussian_third_derivative():
    g = SpatialGrid(-40.0, 40.0, 800)  # dx = 0.1 puts every probe on a node
    f = RealField(g, np.exp(-(g.x**2) / 2.0))
    d3 = derivative(f, 3).values
    for x0, target in GAUSSIAN_D3.items():
        j = int(round((x0 + 40.0) / g.dx))
        assert g.x[j] == pytest.approx(x0, abs=1e-12)
        assert d3[j] == pytest.approx(target, abs=1e-10)


def test_central4_derivative_matches_symbolic_gaussian_third_derivative():
    g = SpatialGrid(-40.0, 40.0, 3200)  # dx = 0.025, error ~ dx^4
    f = RealField(g, np.exp(-(g.x**2) / 2.0))
    d3 = derivative(f, 3, scheme="central4").values
    for x0, target in GAUSSIAN_D3.items():
        j = int(round((x0 + 40.0) / g.dx))
        assert d3[j] == pytest.approx(target, abs=5e-6)


def test_spectral_derivative_exact_on_band_limited_modes():
    g = SpatialGrid(0.0, 2.0 * np.pi, 256)
    for m in (1, 3, 17):
        f = RealField(g, np.sin(m * g.x))
        assert np.max(np.abs(derivative(f, 1).values - m * np.cos(m * g.x))) < 1e-11
        assert np.max(np.abs(derivative(f, 2).values + m**2 * np.sin(m * g.x))) < 1e-9
        assert np.max(np.abs(derivative(f, 3).values + m**3 * np.cos(m * g.x))) < 1e-8


def test_central4_exact_on_cubic_with_one_sided_closures():
    # 5-point interior stencils and the Vandermonde edge closures are all
    # exact for polynomials of degree <= 4
    g = SpatialGrid(-2.0, 2.0, 65, boundary="vanishing")
    f = RealField(g, g.x**3)
    assert np.max(np.abs(derivative(f, 1, "central4").values - 3 * g.x**2)) < 1e-11
    assert np.max(np.abs(derivative(f, 2, "central4").values - 6 * g.x)) < 1e-10
    assert np.max(np.abs(derivative(f, 3, "central4").values - 6.0)) < 1e-9


def test_central4_fourth_order_convergence():
    errs = []
    for n in (400, 800, 1600):
        g = SpatialGrid(-40.0, 40.0, n)
        f = RealField(g, np.exp(-(g.x**2) / 2.0))
        exact = -g.x * np.exp(-(g.x**2) / 2.0)
        errs.append(np.max(np.abs(derivative(f, 1, "central4").values - exact)))
    assert 10.0 < errs[0] / errs[1] < 24.0
    assert 10.0 < errs[1] / errs[2] < 24.0


def test_derivative_composition_consistency():
    g = SpatialGrid(-40.0, 40.0, 1024)
    f = RealField(g, np.exp(-(g.x**2) / 2.0))
    dd = derivative(derivative(f, 1), 1).values
    d2 = derivative(f, 2).values
    assert np.max(np.abs(dd - d2)) < 1e-9


def test_derivative_linearity():
    g = SpatialGrid(0.0, 2.0 * np.pi, 128)
    a = RealField(g, np.sin(g.x))
    b = RealField(g, np.cos(2 * g.x))
    lhs = derivative(RealField(g, 2.0 * a.values - 3.0 * b.values), 1).values
    rhs = 2.0 * derivative(a, 1).values - 3.0 * derivative(b, 1).values
    assert np.max(np.abs(lhs - rhs)) < 1e-11


def test_derivative_of_constant_vanishes():
    g = SpatialGrid(-1.0, 1.0, 64)
    f = RealField(g, np.full(64, 2.5))
    for order in (1, 2, 3):
        assert np.max(np.abs(derivative(f, order).values)) < 1e-13


def test_spectral_requires_periodic_and_valid_order():
    gv = SpatialGrid(-1.0, 1.0, 64, boundary="vanishing")
    with pytest.raises(SchemeBoundaryMismatch):
        derivative(RealField(gv, np.zeros(64)), 1)
    gp = SpatialGrid(-1.0, 1.0, 64)
    with pytest.raises(ValueError):
        derivative(RealField(gp, np.zeros(64)), 4)
    with pytest.raises(ValueError):
        derivative(RealField(gp, np.zeros(64)), 1, scheme="upwind")


def test_complex_derivative_matches_componentwise():
    g = SpatialGrid(0.0, 2.0 * np.pi, 128)
    f = ComplexField(g, np.exp(1j * 3 * g.x))
    d = derivative(f, 1).values
    assert np.max(np.abs(d - 3j * f.values)) < 1e-11


@settings(max_examples=25, deadline=None)
@given(
    st.lists(
        st.tuples(
            st.integers(min_value=1, max_value=20),
            st.floats(min_value=-1.0, max_value=1.0),
            st.floats(min_value=-1.0, max_value=1.0),
        ),
        min_size=1,
        max_size=4,
    )
)
def test_spectral_derivative_exact_on_trig_polynomials(terms):
    """Any band-limited trig polynomial differentiates exactly in spectral."""
    g = SpatialGrid(0.0, 2.0 * np.pi, 128)
    f = np.zeros(128)
    df = np.zeros(128)
    for m, a, b in terms:
        f += a * np.sin(m * g.x) + b * np.cos(m * g.x)
        df += a * m * np.cos(m * g.x) - b * m * np.sin(m * g.x)
    got = derivative(RealField(g, f), 1).values
    scale = max(np.max(np.abs(df)), 1.0)
    assert np.max(np.abs(got - df)) < 1e-10 * scale


# --- quadrature -------------------------------------------------------------


def test_integrate_normalized_gaussian():
    g = SpatialGrid(-40.0, 40.0, 2048)
    rho = np.exp(-(g.x**2) / 2.0) / math.sqrt(2.0 * math.pi)
    assert integrate(RealField(g, rho)) == pytest.approx(1.0, abs=1e-12)


def test_integrate_periodic_rectangle_exact_for_modes():
    g = SpatialGrid(0.0, 2.0 * np.pi, 64)
    assert integrate(RealField(g, np.sin(3 * g.x))) == pytest.approx(0.0, abs=1e-13)
    assert integrate(RealField(g, np.full(64, 2.0))) == pytest.approx(4.0 * np.pi)


def test_integrate_vanishing_uses_trapezoid():
    g = SpatialGrid(0.0, 1.0, 101, boundary="vanishing")
    # trapezoid integrates linear functions exactly
    assert integrate(RealField(g, 2.0 * g.x)) == pytest.approx(1.0, abs=1e-14)


def test_integrate_complex_field_returns_complex():
    g = SpatialGrid(0.0, 2.0 * np.pi, 64)
    val = integrate(ComplexField(g, np.full(64, 1.0 + 2.0j)))
    assert isinstance(val, complex)
    assert val == pytest.approx(2.0 * np.pi * (1.0 + 2.0j))
