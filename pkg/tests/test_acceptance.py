"""Acceptance gate: one test per advertised guarantee.

Each test pins the published tolerance; run with -v for a one-line verdict
per criterion. Everything here goes through public entry points only.
"""

import math

import numpy as np
import pytest
import scipy.integrate

import oracles
from adiapath.asymptotics import (
    counterexample_row,
    counterexample_scaling_experiment,
    fit_power_law,
    periodic_scaling_experiment,
    rotating_cycle,
    switching_coefficient,
)
from adiapath.evolve import (
    diabatic_error,
    first_order_error,
    ground_state,
    integrate,
    integrate_arc,
    integrate_unitary,
    schedule_hamiltonian,
)
from adiapath.metrics import adiabaticity_cost, cost_summary, qd_invariance_check
from adiapath.model import (
    reparameterize,
    rotating_two_level_path,
    three_level_path,
)
from adiapath.nogo import pin_gap, rescale, scaling_engineering_demo, verify_rescaled
from adiapath.pathgeom import (
    arc_length_map,
    make_schedule,
    natural_velocity,
    path_length,
    velocity_from_spec,
)
from adiapath.spectral import transport_frame

UNIT_SPEED = velocity_from_spec({"kind": "constant", "value": 1.0})


def test_criterion_01_arc_length_quadratic_growth():
    """Natural traversal arc length equals t/tau + t^2/(2 tau^2) to 1e-6."""
    tau = 1.0
    path = three_level_path(gap=1.0, tau=tau)
    for t_over_tau in np.linspace(0.25, 20.0, 12):
        s = float(t_over_tau)  # s = t / tau along the natural traversal
        got = path_length(path, 0.0, s)
        expected = t_over_tau + 0.5 * t_over_tau**2
        assert got == pytest.approx(expected, rel=1e-6)


def test_criterion_02_error_ceiling_within_one_percent():
    """Running error maximum reaches 1/sqrt(1 + (gap*tau)^2) +- 1% by L = 30."""
    for gap_tau in (0.5, 1.0, 2.0):
        row = counterexample_row(30.0, gap=gap_tau, tau=1.0)
        ceiling = oracles.three_level_eps_ceiling(gap_tau, 1.0)
        assert row.eps_max == pytest.approx(ceiling, rel=0.01)


def test_criterion_03_counterexample_scaling_window():
    """Transit-vs-arc exponent in [0.45, 0.55]; closed-form overlay within 2%."""
    result = counterexample_scaling_experiment([20.0, 50.0, 100.0, 200.0], jobs=1)
    assert 0.45 <= result.fit.exponent <= 0.55
    assert result.overlay_rel_dev <= 0.02
    for row in result.rows:
        assert row.eps_max == pytest.approx(
            oracles.three_level_eps_ceiling(1.0, 1.0), rel=0.02
        )


def test_criterion_04_rescaled_pair_is_equivalent():
    """Factor 1 + lam^2 over 10 arc units: states, errors, and clocks agree."""
    path = three_level_path()
    amap = arc_length_map(path, 0.0, float(np.sqrt(21.0)) - 1.0)
    assert amap.total == pytest.approx(10.0, abs=1e-9)
    sched = make_schedule((0.0, amap.total), UNIT_SPEED, 1.0)
    system = rescale(path, amap, sched, lambda lam: 1.0 + np.asarray(lam) ** 2)
    report = verify_rescaled(system)
    assert report.max_state_deviation <= 1e-6
    assert report.eps_gap <= 1e-6
    quad, _ = scipy.integrate.quad(lambda lam: 1.0 / (1.0 + lam * lam), 0.0, 10.0)
    assert report.transit_b / report.transit_a == pytest.approx(
        quad / 10.0, rel=1e-6
    )


def test_criterion_05_engineered_scaling_verdict():
    """Engineered factor 1 + lam^2: marginal-rate exponent lands in [-2.2, -1.8]."""
    table = scaling_engineering_demo(2.0, [5.0, 10.0, 20.0, 40.0], jobs=1)
    assert -2.2 <= table.verdict_exponent <= -1.8
    for row in table.rows:
        assert row.eps_a == pytest.approx(row.eps_b, abs=1e-6)


def test_criterion_06_pinned_gap_and_zero_leakage():
    """Inert block pins the global gap to 1e-10 and never takes amplitude."""
    path = three_level_path()
    amap = arc_length_map(path, 0.0, 2.0)
    sched = make_schedule((0.0, amap.total), UNIT_SPEED, 2.0)
    system = rescale(path, amap, sched, lambda lam: 1.0 + np.asarray(lam))
    pinned = pin_gap(system, 0.4)
    assert abs(pinned.probe_min_gap - 0.4) <= 1e-10
    ham = schedule_hamiltonian(pinned.path, pinned.arcmap, pinned.schedule)
    psi0 = ground_state(pinned.path, 0.0)
    ts = np.linspace(0.1, pinned.schedule.transit_time, 7)
    traj = integrate(ham, pinned.schedule.transit_time, psi0, t_samples=ts)
    assert pinned.leakage(traj.states) <= 1e-12


def test_criterion_07_stroboscopic_error_accumulation():
    """At the tuned slowdown, eps(N) tracks N * eps_single within 5% to 0.01."""
    probe = rotating_cycle(
        1.0, 2.0 * math.pi, oracles.ACCUM_SLOWDOWN, target=1e-11
    )
    path = rotating_two_level_path(1.0, 2.0 * math.pi * oracles.ACCUM_SLOWDOWN)
    h0 = path.hamiltonian(0.0)
    psi = ground_state(path, 0.0)
    for n in range(1, 21):
        psi = probe.unitary @ psi
        expected = n * oracles.ACCUM_EPS_SINGLE
        if expected > 0.01:
            break
        assert diabatic_error(psi, h0) == pytest.approx(expected, rel=0.05)
    assert n >= 20


def test_criterion_08_matched_error_time_grows_superlinearly():
    """Matched-error rotations: transit time vs arc exponent > 1.02, clean fit."""
    result = periodic_scaling_experiment(0.005, [4, 8, 16, 32, 64], jobs=1)
    assert result.fit.exponent > 1.02
    assert result.fit.residual_rms < 0.05
    assert result.superlinear


def test_criterion_09_cost_bounds_and_variants():
    """Q_D dominates its gap-time bound; variants behave as advertised."""
    # (a) bound domination on an inhomogeneous traversal
    path = three_level_path()
    amap = arc_length_map(path, 0.0, 2.0)
    natural = make_schedule((0.0, amap.total), natural_velocity(amap), 3.0)
    for cost in cost_summary(path, amap, natural).values():
        assert cost.value >= cost.delta_t_bound - 1e-8 * cost.value
    # (b) rescaling invariance per variant
    const = make_schedule((0.0, amap.total), UNIT_SPEED, 1.0)
    system = rescale(path, amap, const, lambda lam: 1.0 + np.asarray(lam) ** 2)
    devs = qd_invariance_check(system.base_system, system.derived_system)
    for variant, dev in devs.items():
        assert dev <= 1e-8, variant
    # (c) two-level constant-speed saturation, all four variants
    rot = rotating_two_level_path(gap=1.3, tau=2.0 * math.pi)
    rot_map = arc_length_map(rot, 0.0, 2.0 * math.pi)
    rot_sched = make_schedule((0.0, rot_map.total), UNIT_SPEED, 2.0)
    saturated = cost_summary(rot, rot_map, rot_sched)
    saturated["generic_f"] = adiabaticity_cost(
        rot, rot_map, rot_sched, "generic_f",
        f=lambda x: x**3, f_inverse=lambda x: np.cbrt(x),
    )
    for variant, cost in saturated.items():
        assert cost.value == pytest.approx(
            1.3 * rot_sched.transit_time, rel=1e-8
        ), variant
    # (d) identity f collapses onto the mean variant
    mean = adiabaticity_cost(path, amap, natural, "mean")
    ident = adiabaticity_cost(
        path, amap, natural, "generic_f", f=lambda x: x, f_inverse=lambda x: x
    )
    assert ident.value == pytest.approx(mean.value, rel=1e-10)


def test_criterion_10_numerical_hygiene():
    """Unitarity, gauge, invariance, first-order match, boundary-term zero."""
    # (a) propagator unitarity <= 1e-9
    rot = rotating_two_level_path(1.0, 2.0 * math.pi)
    ham = rot.hamiltonian_batch
    res = integrate_unitary(ham, 2.0 * math.pi, 2, target=1e-10)
    u = res.unitary
    assert np.linalg.norm(u.conj().T @ u - np.eye(2)) <= 1e-9

    # (b) parallel-transport gauge: diagonal connection <= 1e-8
    path = three_level_path()
    frame = transport_frame(path, np.linspace(0.0, 3.0, 801))
    assert frame.gauge_defect() <= 1e-8

    # (c) reparameterization leaves arc length fixed to 1e-7
    warped = reparameterize(
        path,
        lambda u: 3.0 * (u + 0.1 * math.sin(2.0 * math.pi * u)),
        lambda u: 3.0 * (1.0 + 0.2 * math.pi * math.cos(2.0 * math.pi * u)),
        u_min=0.0,
        u_max=1.0,
    )
    assert path_length(warped, 0.0, 1.0) == pytest.approx(
        path_length(path, 0.0, 3.0), rel=1e-7
    )

    # (d) first-order estimate within 10% of the integrator while eps < 1e-2
    amap = arc_length_map(path, 0.0, 3.0)
    s_c = 100.0
    sched = make_schedule((0.0, amap.total), natural_velocity(amap), s_c)
    stretch = math.sqrt(1.0 + s_c * s_c)
    peaks = [(m + 0.5) * math.pi / stretch for m in (40, 110, 190)]
    est = first_order_error(path, amap, sched, lam_samples=peaks)
    traj = integrate_arc(path, amap, sched, lam_samples=peaks, target=1e-10)
    for lam, e, psi in zip(peaks, est, traj.states):
        s = float(amap.s_of_lam(lam))
        exact = diabatic_error(psi, path.hamiltonian(s))
        assert exact < 1e-2
        assert e == pytest.approx(exact, rel=0.10)

    # (e) boundary coefficient vanishes on flat-endpoint traversals
    stalled = reparameterize(
        path,
        lambda v: v * v * (3.0 - 2.0 * v),
        lambda v: 6.0 * v * (1.0 - v),
        u_min=0.0,
        u_max=1.0,
    )
    st_map = arc_length_map(stalled, 0.0, 1.0)
    st_sched = make_schedule((0.0, st_map.total), UNIT_SPEED, 5.0)
    st_frame = transport_frame(stalled, np.linspace(0.0, 1.0, 2049))
    coeff = switching_coefficient(st_frame, st_map, st_sched, parameter="path")
    assert abs(coeff.footnote_value) <= 5e-6
    assert abs(coeff.endpoint_difference) <= 5e-6
