"""Force moments, energy partition, and uncertainty diagnostics."""

import math

import numpy as np
import pytest

from madelung_lab import (
    ComplexField,
    InsufficientSnapshots,
    MadelungLabError,
    PhysicalConstants,
    RealField,
    SpatialGrid,
    TailTruncation,
    WaveState,
    energy_partition,
    extract,
    fields_closed_form,
    force_moments,
    initial_gaussian,
    integrate,
    propagate,
    uncertainty_check,
)

from conftest import DT


# --- force-moment table -----------------------------------------------------


def test_low_moments_vanish(fields_by_time):
    # <F> = <XF> = <X^2 F> = 0 for any normalizable density
    for t, f in fields_by_time.items():
        report = force_moments(f)
        for j in (0, 1, 2):
            assert abs(report.row(j).lhs) < 1e-12, f"t={t} j={j}"
            assert report.row(j).rhs == 0.0


def test_cubic_moment_is_minus_three_halves(fields_by_time):
    # <X^3 F> = -(1/m)(hbar/2)^2 * 3! = -3 hbar^2 / 2m at every time
    for t, f in fields_by_time.items():
        row = force_moments(f).row(3)
        assert row.rhs == pytest.approx(-1.5, rel=1e-12)
        assert abs(row.lhs + 1.5) / 1.5 < 1e-9, f"t={t}"


def test_moment_recursion_to_seventh_order(fields_by_time):
    # <X^j F> = -(1/m)(hbar/2)^2 j(j-1)(j-2) <X^(j-3)>, normalized by the
    # table's dominant target where the exact value is zero
    for t, f in fields_by_time.items():
        report = force_moments(f)
        scale = max(abs(r.rhs) for r in report.rows)
        for r in report.rows:
            if r.order < 3:
                continue
            denom = abs(r.rhs) if abs(r.rhs) > 1e-6 * scale else scale
            assert abs(r.residual) / denom < 1e-6, f"t={t} j={r.order}"


def test_moment_table_scales_with_hbar_squared(grid):
    for hbar in (0.5, 2.0):
        c = PhysicalConstants(hbar=hbar)
        f = extract(initial_gaussian(grid, 1.0, constants=c))
        row = force_moments(f).row(3)
        target = -1.5 * hbar**2
        assert row.rhs == pytest.approx(target, rel=1e-12)
        assert abs(row.lhs - target) / abs(target) < 1e-9


def test_moment_report_metadata(fields_by_time):
    report = force_moments(fields_by_time[2.0], k_max=2)
    assert [r.order for r in report.rows] == [0, 1, 2, 3, 4, 5]
    assert report.n_points == 4096
    assert report.scheme == "spectral"
    assert "force moments" in report.table()
    assert '"E_total"' in report.to_json()
    with pytest.raises(KeyError):
        report.row(9)
    with pytest.raises(ValueError):
        force_moments(fields_by_time[2.0], k_max=-1)


def test_moments_reject_truncated_tails(params):
    narrow = SpatialGrid(-8.0, 8.0, 512)
    f = fields_closed_form(params, narrow, 4.0)  # sigma ~ 2.24, x^7 rho huge at edge
    with pytest.raises(TailTruncation):
        force_moments(f)


# --- energy partition -------------------------------------------------------


def test_energy_partition_closes(snapshots, fields_by_time):
    for t in fields_by_time:
        e, k, i, q = energy_partition(snapshots[t], fields_by_time[t])
        assert abs(e - k - i) < 1e-15, f"t={t}"
        assert abs(q - i) < 1e-15, f"t={t}"


def test_energy_components_follow_closed_form(snapshots, fields_by_time):
    # K = E t^2/(t^2+4), I = 4E/(t^2+4) for the unit packet
    for t in fields_by_time:
        e, k, i, _ = energy_partition(snapshots[t], fields_by_time[t])
        assert e == pytest.approx(0.125, rel=1e-12)
        assert k == pytest.approx(0.125 * t**2 / (t**2 + 4.0), abs=1e-12)
        assert i == pytest.approx(0.5 / (t**2 + 4.0), rel=1e-10)


def test_energy_is_conserved(snapshots, fields_by_time):
    energies = [
        energy_partition(snapshots[t], fields_by_time[t])[0] for t in fields_by_time
    ]
    assert max(energies) - min(energies) < 1e-12


def test_boosted_packet_adds_kinetic_energy(grid):
    state = initial_gaussian(grid, 1.0, momentum=2.0)
    e, k, i, _ = energy_partition(state, extract(state))
    assert e == pytest.approx(0.125 + 2.0, rel=1e-9)  # + p^2/2m
    assert k == pytest.approx(2.0, rel=1e-9)
    assert i == pytest.approx(0.125, rel=1e-9)


def test_energy_partition_scheme_independent(snapshots):
    state = snapshots[2.0]
    e_spec = energy_partition(state, extract(state))[0]
    e_c4 = energy_partition(state, extract(state, scheme="central4"))[0]
    assert abs(e_spec - e_c4) < 1e-7


# --- uncertainty product and cross moment -----------------------------------


def test_uncertainty_product_follows_width_law(initial_state):
    # product(t) = sqrt(<X^2><Xdot^2>) = sqrt(t^2+4)/4, minimum 1/2 at t = 0
    traj = []
    for k in range(9):
        state = propagate(initial_state, DT, int(round(0.5 * k / DT)))
        traj.append((state, extract(state)))
    report = uncertainty_check(traj)
    assert report.bound == 0.5
    assert report.min_time == 0.0
    assert abs(report.min_product - 0.5) < 1e-6
    assert report.min_product > 0.5 - 1e-12
    for r in report.rows:
        assert abs(r.product - math.sqrt(r.time**2 + 4.0) / 4.0) < 1e-12
        assert abs(r.xdot2 - 0.25) < 1e-12


def test_cross_moment_identity_on_fine_triples(triples):
    # <X^2 Xdot^2> = hbar^2/2m^2 + (1/3) d<X^3 Xdot>/dt, centered difference
    for t, (lo, mid, hi) in triples.items():
        traj = [(s, extract(s)) for s in (lo, mid, hi)]
        report = uncertainty_check(traj)
        row = report.rows[1]
        t_mid = mid.time
        lhs_oracle = 3.0 * t_mid**2 / 16.0 + 0.75
        assert abs(row.cross_lhs - lhs_oracle) < 1e-12, f"t={t_mid}"
        assert abs(row.cross_residual) < 1e-4, f"t={t_mid}"
        assert math.isnan(report.rows[0].cross_residual)
        assert math.isnan(report.rows[2].cross_residual)


def test_cross_moment_quadratures_match_symbolic_forms(snapshots):
    # <X^3 Xdot> = 3t(t^2+4)/16 and <X^2 Xdot^2> = 3t^2/16 + 3/4, frozen from
    # an exact symbolic quadrature of the spreading packet
    from madelung_lab.fields import derivative

    for t, state in snapshots.items():
        x = state.grid.x
        dpsi = derivative(state.psi, 1)
        flux = (np.conj(state.psi.values) * dpsi.values).imag
        speed2 = np.abs(dpsi.values) ** 2
        x3xdot = integrate(RealField(state.grid, x**3 * flux))
        cross = integrate(RealField(state.grid, x**2 * speed2))
        assert x3xdot == pytest.approx(3.0 * t * (t**2 + 4.0) / 16.0, abs=1e-12)
        assert cross == pytest.approx(3.0 * t**2 / 16.0 + 0.75, rel=1e-12)


def test_uncertainty_check_validates_trajectory(initial_state, triples):
    lo, mid, hi = triples[1.0]
    with pytest.raises(InsufficientSnapshots):
        uncertainty_check([(lo, extract(lo)), (mid, extract(mid))])
    skewed = propagate(initial_state, DT, 1017)
    with pytest.raises(ValueError):
        uncertainty_check([(s, extract(s)) for s in (lo, mid, skewed)])


def test_uncertainty_bound_violation_raises(initial_state):
    # a deliberately non-normalized state scales both second moments by
    # 0.81, dragging the product below hbar/2m
    fields = extract(initial_state)
    shrunk = [
        WaveState(
            ComplexField(initial_state.grid, 0.9 * initial_state.psi.values),
            k * DT,
            initial_state.constants,
        )
        for k in range(3)
    ]
    with pytest.raises(MadelungLabError):
        uncertainty_check([(s, fields) for s in shrunk])


# --- distribution shape -----------------------------------------------------


def test_fourth_moment_kurtosis_identity(fields_by_time):
    # <X^4> = 3 <X^2>^2 for the spreading packet at every time
    for t, f in fields_by_time.items():
        x = f.grid.x
        x2 = integrate(RealField(f.grid, x**2 * f.rho.values))
        x4 = integrate(RealField(f.grid, x**4 * f.rho.values))
        assert x4 == pytest.approx(3.0 * x2**2, rel=1e-12), f"t={t}"
