"""
Adiabaticity cost functionals
=============================

How expensive is a traversal, beyond its wall-clock time? The functionals
here integrate a local rate built from three ingredients at each arc
position: the unit tangent of the ground curve, the spectrum above the
ground level, and the traversal velocity. The tangent weights w_k say which
excited levels the motion actually couples to; the variants differ only in
which power mean of the coupled excitation energies they charge.

All variants are invariant under the joint rescaling (H, v) -> (c H, c v),
because energies enter only through E/v: that invariance, not the bare time
integral, is what makes them honest difficulty measures. Each is also
bounded below by the gap-time integral, hence by min-gap times transit
time.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .model import HamiltonianPath
from .pathgeom import ArcLengthMap, Schedule
from .quadrature import adaptive_simpson
from .spectral import GaugedFrame, eigensystem

VARIANTS = ("mean", "rms", "sqrt", "generic_f")


@dataclass(frozen=True)
class LocalRate:
    """Pointwise ingredients of the cost integrand at one arc position.

    rate_expectation contracts the lab-frame tangent against H - E_g
    directly; rate_mean sums w_k times excitation energies. The two are
    equal analytically and serve as mutual implementation checks.
    """

    lam: float
    velocity: float
    weights: np.ndarray        # w_k = |<e_k|dg/dlam>|^2 over excited levels
    excitations: np.ndarray    # E_k - E_g over excited levels
    rate_expectation: float    # <t|(H - E_g)|t> / v with |t> the unit tangent
    rate_mean: float           # sum_k w_k (E_k - E_g) / v
    rate_rms: float            # sqrt(sum_k w_k (E_k - E_g)^2) / v
    rate_sqrt: float           # (sum_k w_k sqrt(E_k - E_g))^2 / v


def local_adiabaticity(
    path: HamiltonianPath, arcmap: ArcLengthMap, schedule: Schedule, lam: float
) -> LocalRate:
    """Cost integrand at one arc position, from perturbation theory.

    The tangent comes from <e_k|dH/ds|g>/(E_k - E_g) normalized to unit
    arc-length norm, so no transported frame is involved.
    """
    s = float(arcmap.s_of_lam(lam))
    eig = eigensystem(path.hamiltonian(s))
    h = path.hamiltonian(s)
    hd = path.hamiltonian_deriv(s)
    num = eig.states.conj().T @ hd @ eig.ground
    exc = eig.energies[1:] - eig.energies[0]
    amps = num[1:] / exc
    norm = float(np.linalg.norm(amps))
    if norm == 0.0:
        weights = np.zeros_like(exc)
        rate_exp = 0.0
    else:
        weights = np.abs(amps / norm) ** 2
        tangent = eig.states[:, 1:] @ (amps / norm)
        shifted = h - eig.energies[0] * np.eye(path.dim)
        rate_exp = float(np.real(tangent.conj() @ shifted @ tangent))
    v = float(schedule.velocity(lam))
    return LocalRate(
        lam=float(lam),
        velocity=v,
        weights=weights,
        excitations=exc,
        rate_expectation=rate_exp / v,
        rate_mean=float(weights @ exc) / v,
        rate_rms=math.sqrt(float(weights @ exc**2)) / v,
        rate_sqrt=float(weights @ np.sqrt(exc)) ** 2 / v,
    )


def _validate_generic_f(f, f_inverse, exc_range):
    lo, hi = exc_range
    if hi - lo < 1e-9 * max(hi, 1.0):
        # constant excitation spectrum: widen the probe to a neighborhood,
        # else every increasing f would fail the strictness check
        lo, hi = 0.5 * lo, 1.5 * hi
    probe = np.linspace(lo, hi, 17)
    vals = np.asarray(f(probe), dtype=float)
    if np.any(np.diff(vals) <= 0):
        raise ValueError("f must be strictly increasing on the excitation range")
    back = np.asarray(f_inverse(vals), dtype=float)
    if np.abs(back - probe).max() > 1e-9 * max(1.0, hi):
        raise ValueError("f_inverse does not invert f on the excitation range")


def _variant_rate(rate: LocalRate, variant: str, f, f_inverse) -> float:
    if variant == "mean":
        return rate.rate_mean
    if variant == "rms":
        return rate.rate_rms
    if variant == "sqrt":
        return rate.rate_sqrt
    inner = float(rate.weights @ np.asarray(f(rate.excitations), dtype=float))
    return float(f_inverse(inner)) / rate.velocity


@dataclass(frozen=True)
class AdiabaticityCost:
    """One traversal-cost integral plus the bounds it must dominate."""

    value: float
    variant: str
    transit_time: float
    arc_span: float
    delta_t_bound: float       # (min gap over the arc) * transit time
    gap_time_integral: float   # integral of gap(lam)/v(lam); tighter bound
    lam_profile: np.ndarray    # sampled arc positions
    a_profile: np.ndarray      # the variant's local rate at those positions

    @property
    def bound_satisfied(self) -> bool:
        return self.value >= self.delta_t_bound * (1 - 1e-8)


def adiabaticity_cost(
    path: HamiltonianPath,
    arcmap: ArcLengthMap,
    schedule: Schedule,
    variant: str = "mean",
    *,
    f: Callable[[np.ndarray], np.ndarray] | None = None,
    f_inverse: Callable[[np.ndarray], np.ndarray] | None = None,
    rel_tol: float = 1e-8,
    n_profile: int = 513,
) -> AdiabaticityCost:
    """Integrated traversal cost for one power-mean variant.

    "mean" charges the tangent-weighted mean excitation energy per unit
    velocity, "rms" the quadratic mean, "sqrt" the square of the mean root.
    "generic_f" uses the supplied strictly increasing f and its inverse,
    applied spectrally on the excited subspace.
    """
    if variant == "generic_f":
        if f is None or f_inverse is None:
            raise ValueError("variant 'generic_f' needs f and f_inverse")
    elif variant not in ("mean", "rms", "sqrt"):
        raise ValueError(f"unknown cost variant '{variant}'")

    lam_lo, lam_hi = schedule.lam_lo, schedule.lam_hi
    if variant == "generic_f":
        probe = np.linspace(lam_lo, lam_hi, 33)
        excs = [local_adiabaticity(path, arcmap, schedule, x).excitations for x in probe]
        _validate_generic_f(f, f_inverse, (min(e.min() for e in excs),
                                           max(e.max() for e in excs)))

    def rate_at(lam: float) -> LocalRate:
        return local_adiabaticity(path, arcmap, schedule, lam)

    value = adaptive_simpson(
        lambda lam: _variant_rate(rate_at(lam), variant, f, f_inverse),
        lam_lo, lam_hi, rel_tol=rel_tol,
    )
    gap_time = adaptive_simpson(
        lambda lam: float(rate_at(lam).excitations[0]) / float(schedule.velocity(lam)),
        lam_lo, lam_hi, rel_tol=rel_tol,
    )

    lam_profile = np.linspace(lam_lo, lam_hi, n_profile)
    rates = [rate_at(float(x)) for x in lam_profile]
    a_profile = np.asarray([_variant_rate(r, variant, f, f_inverse) for r in rates])
    min_gap = min(float(r.excitations[0]) for r in rates)

    return AdiabaticityCost(
        value=float(value),
        variant=variant,
        transit_time=schedule.transit_time,
        arc_span=schedule.arc_span,
        delta_t_bound=min_gap * schedule.transit_time,
        gap_time_integral=float(gap_time),
        lam_profile=lam_profile,
        a_profile=a_profile,
    )


def cost_summary(
    path: HamiltonianPath,
    arcmap: ArcLengthMap,
    schedule: Schedule,
    *,
    rel_tol: float = 1e-8,
    n_profile: int = 257,
) -> dict[str, AdiabaticityCost]:
    """The three closed-form variants at once, sharing grid parameters."""
    return {
        name: adiabaticity_cost(
            path, arcmap, schedule, name, rel_tol=rel_tol, n_profile=n_profile
        )
        for name in ("mean", "rms", "sqrt")
    }


def ordering_defect(costs: dict[str, AdiabaticityCost]) -> float:
    """How badly the power-mean ordering sqrt <= mean <= rms is violated.

    Nonpositive up to quadrature tolerance: the pointwise rates obey the
    ordering for every weight vector, so the integrals inherit it.
    """
    return max(
        costs["sqrt"].value - costs["mean"].value,
        costs["mean"].value - costs["rms"].value,
    )


def qd_invariance_check(
    system_a: tuple[HamiltonianPath, ArcLengthMap, Schedule],
    system_b: tuple[HamiltonianPath, ArcLengthMap, Schedule],
    variants: Sequence[str] = ("mean", "rms", "sqrt"),
    *,
    rel_tol: float = 1e-8,
) -> dict[str, float]:
    """Relative Q_D deviation between two systems, per variant.

    Intended for pairs built by the nogo rescaling, where the integrand is
    pointwise identical because H and v scale together; deviations then
    reflect only quadrature noise.
    """
    if not math.isclose(system_a[2].arc_span, system_b[2].arc_span,
                        rel_tol=1e-12, abs_tol=0.0):
        raise ValueError("systems are not defined on a common arc range")
    out = {}
    for variant in variants:
        qa = adiabaticity_cost(*system_a, variant, rel_tol=rel_tol, n_profile=3)
        qb = adiabaticity_cost(*system_b, variant, rel_tol=rel_tol, n_profile=3)
        out[variant] = abs(qb.value - qa.value) / abs(qa.value)
    return out


def frame_cost_profile(frame: GaugedFrame, schedule: Schedule) -> dict[str, np.ndarray]:
    """Local rates at the frame's nodes, from the transported connection.

    Alternate route to local_adiabaticity (frame transport instead of
    perturbation theory); used to cross-check the integrand construction.
    """
    tangent = frame.connection[:, 1:, 0]
    norms = np.linalg.norm(tangent, axis=1, keepdims=True)
    weights = np.abs(tangent / np.where(norms == 0, 1.0, norms)) ** 2
    exc = frame.energies[:, 1:] - frame.energies[:, :1]
    v = np.asarray(schedule.velocity(frame.s_grid), dtype=float)
    return {
        "lam": frame.s_grid,
        "mean": np.einsum("ik,ik->i", weights, exc) / v,
        "rms": np.sqrt(np.einsum("ik,ik->i", weights, exc**2)) / v,
        "sqrt": np.einsum("ik,ik->i", weights, np.sqrt(exc)) ** 2 / v,
        "gap": exc[:, 0],
    }
