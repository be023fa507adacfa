"""Scaling fits, switching coefficients, and matched-error traversals."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from adiapath.asymptotics import (
    SwitchingCoefficient,
    counterexample_row,
    eps_series,
    fit_power_law,
    match_slowdown,
    periodic_row,
    rotating_cycle,
    switching_coefficient,
)
from adiapath.model import reparameterize, three_level_path
from adiapath.pathgeom import arc_length_map, make_schedule, natural_velocity
from adiapath.spectral import transport_frame


def test_power_law_fit_recovers_exact_law():
    xs = np.array([2.0, 5.0, 11.0, 31.0])
    ys = 3.7 * xs ** -1.25
    fit = fit_power_law(xs, ys)
    assert fit.exponent == pytest.approx(-1.25, abs=1e-12)
    assert math.exp(fit.intercept) == pytest.approx(3.7, rel=1e-12)
    assert fit.residual_rms < 1e-13
    assert fit.endpoint_sensitivity < 1e-10
    assert "exponent" in fit.describe()


@given(
    c=st.floats(0.1, 50.0),
    p=st.floats(-3.0, 3.0),
)
@settings(max_examples=25, deadline=None)
def test_power_law_fit_is_exact_on_pure_laws(c, p):
    xs = np.array([1.0, 3.0, 9.0, 27.0])
    fit = fit_power_law(xs, c * xs**p)
    assert fit.exponent == pytest.approx(p, abs=1e-9)
    assert fit.residual_rms < 1e-9


def test_power_law_fit_rejects_bad_input():
    with pytest.raises(ValueError):
        fit_power_law([1.0, 2.0], [1.0])
    with pytest.raises(ValueError):
        fit_power_law([1.0, 2.0], [1.0, -3.0])
    with pytest.raises(ValueError):
        fit_power_law([1.0], [1.0])


def test_power_law_window_policy_largest_decade():
    # slope breaks at x = 10; the top decade holds four clean samples
    xs = np.array([1.0, 2.0, 4.0, 20.0, 40.0, 80.0, 160.0])
    ys = np.where(xs < 10, xs**-1.0, xs**-2.0 * 20.0)
    fit = fit_power_law(xs, ys, window_policy="largest_decade")
    assert fit.exponent == pytest.approx(-2.0, abs=1e-9)
    assert fit.window == (3, 7)
    contaminated = fit_power_law(xs, ys)
    assert contaminated.exponent > -1.9


def do_switching(s_c, n_frame=2049, s_hi=2.0, parameter="arc"):
    path = three_level_path()
    amap = arc_length_map(path, 0.0, s_hi)
    sched = make_schedule((0.0, amap.total), natural_velocity(amap), s_c)
    frame = transport_frame(amap.arc_path(), np.linspace(0.0, amap.total, n_frame))
    return switching_coefficient(frame, amap, sched, parameter=parameter)


def test_switching_envelope_matches_closed_form():
    s_hi = 2.0
    lam_total = s_hi + 0.5 * s_hi * s_hi
    coeff = do_switching(6.0, s_hi=s_hi)
    assert coeff.envelope_times_t == pytest.approx(
        oracles.three_level_eps_times_t_envelope(lam_total, 1.0), rel=2e-4
    )
    # first-order amplitude: 1/kappa with kappa = gap * tau * s_c
    assert coeff.reduced_envelope == pytest.approx(1.0 / 6.0, rel=2e-4)


def test_switching_reduced_value_survives_rescaling():
    # base and velocity-rescaled twin share the invariant coefficient
    from adiapath.nogo import rescale
    from adiapath.pathgeom import velocity_from_spec

    path = three_level_path()
    amap = arc_length_map(path, 0.0, 2.0)
    sched = make_schedule(
        (0.0, amap.total), velocity_from_spec({"kind": "constant", "value": 1.0}), 3.0
    )
    system = rescale(path, amap, sched, lambda lam: 1.0 + 0.5 * np.asarray(lam))
    grid = np.linspace(0.0, amap.total, 2049)
    coeffs = []
    for sys_path, sys_map, sys_sched in (system.base_system, system.derived_system):
        frame = transport_frame(sys_map.arc_path(), grid)
        coeffs.append(switching_coefficient(frame, sys_map, sys_sched))
    assert coeffs[0].reduced_value == pytest.approx(coeffs[1].reduced_value, rel=1e-8)


def test_switching_footnote_vanishes_on_stalled_endpoints():
    # cubic smoothstep onto [0, 2]: endpoint speed zero kills the bare
    # boundary terms even though the reduced (invariant) value stays finite
    from adiapath.pathgeom import velocity_from_spec

    base = three_level_path()
    warped = reparameterize(
        base,
        lambda u: u * u * (3.0 - 2.0 * u),
        lambda u: 6.0 * u * (1.0 - u),
        u_min=0.0,
        u_max=1.0,
    )
    amap = arc_length_map(warped, 0.0, 1.0)
    # constant arc speed: the natural clock diverges at the stalls
    sched = make_schedule(
        (0.0, amap.total), velocity_from_spec({"kind": "constant", "value": 1.0}), 5.0
    )
    # path form: frame over the raw parameter, where the stall lives
    frame = transport_frame(warped, np.linspace(0.0, 1.0, 2049))
    coeff = switching_coefficient(frame, amap, sched, parameter="path")
    assert abs(coeff.footnote_value) < 5e-6
    assert abs(coeff.endpoint_difference) < 5e-6
    # the invariant reading resolves its 0/0 to a finite value here
    assert math.isfinite(coeff.reduced_value)


def test_rotating_cycle_peak_matches_envelope():
    for s_c in [3.0, 10.0]:
        probe = rotating_cycle(1.0, 2.0 * math.pi, s_c, want_unitary=True)
        expected = oracles.rotating_cycle_envelope(1.0, 2.0 * math.pi, s_c)
        assert probe.peak_eps == pytest.approx(expected, rel=1e-3)
        u = probe.unitary
        assert np.linalg.norm(u.conj().T @ u - np.eye(2)) < 1e-9
        assert probe.cycle_time == pytest.approx(2.0 * math.pi * s_c, rel=1e-9)


def test_eps_series_reads_excited_weight():
    path = three_level_path()
    hams = path.hamiltonian_batch(np.array([0.0, 1.0]))
    _, v0 = np.linalg.eigh(hams[0])
    _, v1 = np.linalg.eigh(hams[1])
    states = np.stack([v0[:, 0], 0.6 * v1[:, 0] + 0.8 * v1[:, 2]]).astype(complex)
    got = eps_series(hams, states)
    np.testing.assert_allclose(got, [0.0, 0.8], atol=1e-12)


def test_match_slowdown_hits_analytic_crossing():
    # n * envelope = eps  =>  s* = sqrt((n/eps)^2 - 1) for gap*tau_ref = 2*pi
    s_star, eps_star = match_slowdown(2, 0.005)
    ideal = math.sqrt((2 / 0.005) ** 2 - 1.0)
    assert s_star == pytest.approx(ideal, rel=0.02)
    assert eps_star == pytest.approx(0.005, rel=0.02)


def test_periodic_row_costs_match_rotating_closed_form():
    row = periodic_row(4, 0.005)
    assert row.arc_length == pytest.approx(4 * math.pi, rel=1e-9)
    assert row.transit_time == pytest.approx(
        4 * 2.0 * math.pi * row.slowdown_star, rel=1e-9
    )
    expected = oracles.rotating_qd(4, 1.0, 2.0 * math.pi, row.slowdown_star)
    for cost in (row.cost_mean, row.cost_rms, row.cost_sqrt):
        assert cost == pytest.approx(expected, rel=1e-6)


def test_counterexample_row_reaches_error_ceiling():
    row = counterexample_row(50.0)
    assert row.transit_time == pytest.approx(
        oracles.three_level_time_of_arc(50.0, 1.0), rel=1e-9
    )
    assert row.eps_max == pytest.approx(
        oracles.three_level_eps_ceiling(1.0, 1.0), rel=0.01
    )
    assert 0.0 < row.plateau_time < row.transit_time
