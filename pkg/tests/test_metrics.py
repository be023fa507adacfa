"""Traversal-cost integrals against closed forms and their lower bounds."""

import math

import numpy as np
import pytest

import oracles
from adiapath.metrics import (
    adiabaticity_cost,
    cost_summary,
    frame_cost_profile,
    local_adiabaticity,
    ordering_defect,
    qd_invariance_check,
)
from adiapath.model import rotating_two_level_path, three_level_path
from adiapath.nogo import rescale
from adiapath.pathgeom import (
    arc_length_map,
    make_schedule,
    natural_velocity,
    velocity_from_spec,
)
from adiapath.spectral import transport_frame

GAP, TAU, S_C = 1.3, 0.8, 3.0


@pytest.fixture(scope="module")
def natural_setup():
    path = three_level_path(gap=GAP, tau=TAU)
    amap = arc_length_map(path, 0.0, 2.0)
    sched = make_schedule((0.0, amap.total), natural_velocity(amap), S_C)
    return path, amap, sched


def test_natural_schedule_cost_matches_closed_form(natural_setup):
    path, amap, sched = natural_setup
    costs = cost_summary(path, amap, sched)
    expected = oracles.three_level_qd_natural(amap.total, GAP, TAU, S_C)
    for variant in ("mean", "rms", "sqrt"):
        assert costs[variant].value == pytest.approx(expected, rel=1e-7)


def test_constant_speed_cost_matches_closed_form():
    path = three_level_path(gap=GAP)
    amap = arc_length_map(path, 0.0, 2.0)
    v = 0.25
    sched = make_schedule(
        (0.0, amap.total), velocity_from_spec({"kind": "constant", "value": v})
    )
    got = adiabaticity_cost(path, amap, sched, "mean")
    expected = oracles.three_level_qd_constant_speed(amap.total, GAP, v)
    assert got.value == pytest.approx(expected, rel=1e-7)


def test_rotating_cycles_cost_matches_closed_form():
    tau_ref, s_c, n = 2.0 * math.pi, 2.5, 3
    path = rotating_two_level_path(gap=GAP, tau=tau_ref)
    amap = arc_length_map(path, 0.0, n * tau_ref)
    sched = make_schedule((0.0, amap.total), natural_velocity(amap), s_c)
    costs = cost_summary(path, amap, sched)
    expected = oracles.rotating_qd(n, GAP, tau_ref, s_c)
    for variant in ("mean", "rms", "sqrt"):
        assert costs[variant].value == pytest.approx(expected, rel=1e-6)


def test_power_mean_ordering_holds(natural_setup):
    costs = cost_summary(*natural_setup)
    assert ordering_defect(costs) <= 1e-9


def test_cost_dominates_gap_time_bound(natural_setup):
    costs = cost_summary(*natural_setup)
    for c in costs.values():
        assert c.bound_satisfied
        assert c.value >= c.delta_t_bound * (1 - 1e-8)
        # the integrated-gap bound is tighter than min-gap * T
        assert c.gap_time_integral >= c.delta_t_bound * (1 - 1e-8)
        assert c.value >= c.gap_time_integral * (1 - 1e-8)


def test_two_level_constant_speed_saturates_bound():
    # single level, constant gap, constant speed: every variant collapses
    # onto gap * transit_time exactly
    path = rotating_two_level_path(gap=GAP, tau=2.0 * math.pi)
    amap = arc_length_map(path, 0.0, 2.0 * math.pi)
    sched = make_schedule(
        (0.0, amap.total), velocity_from_spec({"kind": "constant", "value": 0.5})
    )
    costs = cost_summary(path, amap, sched)
    for c in costs.values():
        assert c.value == pytest.approx(GAP * c.transit_time, rel=1e-8)
    ident = adiabaticity_cost(
        path, amap, sched, "generic_f", f=lambda x: x, f_inverse=lambda x: x
    )
    assert ident.value == pytest.approx(GAP * sched.transit_time, rel=1e-8)


def test_generic_f_identity_reduces_to_mean(natural_setup):
    path, amap, sched = natural_setup
    mean = adiabaticity_cost(path, amap, sched, "mean")
    ident = adiabaticity_cost(
        path, amap, sched, "generic_f", f=lambda x: x, f_inverse=lambda x: x
    )
    assert ident.value == pytest.approx(mean.value, rel=1e-10)


def test_generic_f_validates_monotonicity(natural_setup):
    path, amap, sched = natural_setup
    with pytest.raises(ValueError, match="increasing"):
        adiabaticity_cost(
            path, amap, sched, "generic_f", f=lambda x: -x, f_inverse=lambda x: -x
        )
    with pytest.raises(ValueError, match="invert"):
        adiabaticity_cost(
            path, amap, sched, "generic_f", f=lambda x: x, f_inverse=lambda x: 2 * x
        )
    with pytest.raises(ValueError, match="needs f"):
        adiabaticity_cost(path, amap, sched, "generic_f")
    with pytest.raises(ValueError, match="variant"):
        adiabaticity_cost(path, amap, sched, "median")


def test_cost_is_invariant_under_unit_rescaling():
    # gap doubled, slowdown halved: same physics, same Q_D
    a_path = three_level_path(gap=1.0, tau=1.0)
    a_map = arc_length_map(a_path, 0.0, 2.0)
    a_sched = make_schedule((0.0, a_map.total), natural_velocity(a_map), 4.0)
    b_path = three_level_path(gap=2.0, tau=1.0)
    b_map = arc_length_map(b_path, 0.0, 2.0)
    b_sched = make_schedule((0.0, b_map.total), natural_velocity(b_map), 2.0)
    qa = adiabaticity_cost(a_path, a_map, a_sched, "mean")
    qb = adiabaticity_cost(b_path, b_map, b_sched, "mean")
    assert qb.value == pytest.approx(qa.value, rel=1e-9)


def test_invariance_check_on_rescaled_pair(natural_setup):
    path, amap, sched = natural_setup
    system = rescale(path, amap, sched, lambda lam: 1.0 + np.asarray(lam) ** 2)
    devs = qd_invariance_check(system.base_system, system.derived_system)
    assert set(devs) == {"mean", "rms", "sqrt"}
    for v in devs.values():
        assert v <= 1e-8


def test_local_rate_routes_agree(natural_setup):
    path, amap, sched = natural_setup
    for lam in [0.3, 1.2, 2.8]:
        rate = local_adiabaticity(path, amap, sched, lam)
        assert rate.rate_expectation == pytest.approx(rate.rate_mean, rel=1e-10)
        # natural schedule keeps the local mean rate pinned at 2*gap*tau*s_c
        assert rate.rate_mean == pytest.approx(2.0 * GAP * TAU * S_C, rel=1e-8)


def test_frame_profile_cross_checks_perturbative_rates(natural_setup):
    # the frame route expects the arc-parameterized path
    path, amap, sched = natural_setup
    frame = transport_frame(amap.arc_path(), np.linspace(0.0, amap.total, 801))
    prof = frame_cost_profile(frame, sched)
    for idx in [200, 400, 600]:
        rate = local_adiabaticity(path, amap, sched, float(prof["lam"][idx]))
        assert prof["mean"][idx] == pytest.approx(rate.rate_mean, rel=1e-3)
        assert prof["rms"][idx] == pytest.approx(rate.rate_rms, rel=1e-3)
        assert prof["gap"][idx] == pytest.approx(float(rate.excitations[0]), rel=1e-9)
