"""
Arc length, traversal schedules, and velocity profiles
======================================================

The ground-state curve of a path carries a natural metric: the norm of its
parameter derivative. Integrating that norm gives the curve's arc length,
the reparameterization-invariant "distance travelled" that all scaling
experiments are phrased in. This module computes arc lengths, builds the
bidirectional maps between raw parameters and arc length, and attaches
traversal schedules (velocity profiles plus a uniform slowdown) that decide
the physical clock.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy.interpolate import CubicSpline, PchipInterpolator

from .model import HamiltonianPath, PathSpecError, reparameterize
from .quadrature import adaptive_simpson
from .spectral import eigensystem, ground_speed

# Gauss-Legendre 5-point rule on [-1, 1]; used for per-cell cumulative
# integrals where adaptive recursion would be wasteful.
_GL_NODES = np.array([
    -0.9061798459386640, -0.5384693101056831, 0.0,
    0.5384693101056831, 0.9061798459386640,
])
_GL_WEIGHTS = np.array([
    0.2369268850561891, 0.4786286704993665, 0.5688888888888889,
    0.4786286704993665, 0.2369268850561891,
])


def _gauss_cells(f_vec: Callable[[np.ndarray], np.ndarray], grid: np.ndarray) -> np.ndarray:
    """Integral of f over each cell of a grid, shape (len(grid)-1,)."""
    a, b = grid[:-1], grid[1:]
    half = 0.5 * (b - a)
    mid = 0.5 * (a + b)
    pts = mid[:, None] + half[:, None] * _GL_NODES[None, :]
    vals = f_vec(pts.reshape(-1)).reshape(pts.shape)
    return half * (vals @ _GL_WEIGHTS)


# ============================================================
# Ground-state speed and arc length
# ============================================================

def ground_speed_at(path: HamiltonianPath, s: float) -> float:
    """||d|g>/ds|| from the perturbation sum; the reduced (gauge-free) form."""
    eig = eigensystem(path.hamiltonian(s))
    return ground_speed(eig, path.hamiltonian_deriv(s))


def ground_speed_fd(path: HamiltonianPath, s: float, step: float = 1e-6) -> float:
    """||d|g>/ds|| from projected finite differences of the ground state.

    Independent route used to cross-check ground_speed_at: differentiates
    the eigh ground state directly and projects out the phase/normalization
    direction instead of summing perturbation-theory terms.
    """
    lo = max(s - step, path.s_min)
    hi = s + step if path.s_max is None else min(s + step, path.s_max)
    ga = eigensystem(path.hamiltonian(lo)).ground
    gb = eigensystem(path.hamiltonian(hi)).ground
    ov = np.vdot(ga, gb)
    gb = gb * (ov.conjugate() / abs(ov))
    mid = eigensystem(path.hamiltonian(s)).ground
    diff = (gb - ga) / (hi - lo)
    resid = diff - mid * (np.vdot(mid, diff))
    return float(np.linalg.norm(resid))


def path_length(
    path: HamiltonianPath, s_lo: float, s_hi: float, rel_tol: float = 1e-8
) -> float:
    """Arc length of the ground-state curve between two parameter values."""
    if s_hi < s_lo:
        raise ValueError(f"reversed parameter interval [{s_lo}, {s_hi}]")
    if s_hi == s_lo:
        return 0.0
    return adaptive_simpson(lambda s: ground_speed_at(path, s), s_lo, s_hi, rel_tol=rel_tol)


# ============================================================
# Arc-length maps
# ============================================================

@dataclass(frozen=True)
class ArcLengthMap:
    """Bidirectional map between a parameter interval and arc length [0, L].

    Interpolants are cubic splines through per-cell Gauss-integrated arc
    increments; the roundtrip defect quoted below is measured at cell
    midpoints (off the construction nodes) at build time.
    """

    path: HamiltonianPath
    s_lo: float
    s_hi: float
    total: float
    roundtrip_defect: float
    _lam_of_s: CubicSpline
    _s_of_lam: CubicSpline
    _speed_nodes: np.ndarray
    _s_nodes: np.ndarray

    def lam_of_s(self, s):
        return np.clip(self._lam_of_s(s), 0.0, self.total)

    def s_of_lam(self, lam):
        return np.clip(self._s_of_lam(lam), self.s_lo, self.s_hi)

    def speed_of_lam(self, lam):
        """||dg/ds|| evaluated at s(lam); also 1/(ds/dlam)."""
        return np.maximum(self._lam_of_s.derivative()(self.s_of_lam(lam)), 1e-300)

    def arc_path(self) -> HamiltonianPath:
        """The same family with arc length as the parameter (unit tangent)."""
        return reparameterize(
            self.path,
            fn=lambda lam: float(self.s_of_lam(lam)),
            dfn=lambda lam: 1.0 / float(self.speed_of_lam(lam)),
            u_min=0.0,
            u_max=self.total,
        )


def arc_length_map(
    path: HamiltonianPath, s_lo: float, s_hi: float, n_nodes: int = 1025
) -> ArcLengthMap:
    """Build an ArcLengthMap over [s_lo, s_hi] from n_nodes speed samples."""
    if not s_hi > s_lo:
        raise ValueError(f"need s_hi > s_lo, got [{s_lo}, {s_hi}]")
    s_nodes = np.linspace(s_lo, s_hi, n_nodes)

    def speed_vec(s_arr: np.ndarray) -> np.ndarray:
        hb = path.hamiltonian_batch(s_arr)
        out = np.empty(len(s_arr))
        for i, s in enumerate(s_arr):
            eig = eigensystem(hb[i])
            out[i] = ground_speed(eig, path.hamiltonian_deriv(float(s)))
        return out

    increments = _gauss_cells(speed_vec, s_nodes)
    if np.any(increments <= 0):
        raise PathSpecError("ground state stalls: arc length is not strictly increasing")
    lam_nodes = np.concatenate([[0.0], np.cumsum(increments)])
    lam_of_s = CubicSpline(s_nodes, lam_nodes)
    s_of_lam = CubicSpline(lam_nodes, s_nodes)

    mids = 0.5 * (s_nodes[:-1] + s_nodes[1:])
    roundtrip = float(np.abs(s_of_lam(lam_of_s(mids)) - mids).max())
    grid_defect = float(np.abs(s_of_lam(lam_nodes) - s_nodes).max())

    return ArcLengthMap(
        path=path, s_lo=float(s_lo), s_hi=float(s_hi),
        total=float(lam_nodes[-1]),
        roundtrip_defect=max(roundtrip, grid_defect),
        _lam_of_s=lam_of_s, _s_of_lam=s_of_lam,
        _speed_nodes=speed_vec(s_nodes), _s_nodes=s_nodes,
    )


# ============================================================
# Velocity profiles
# ============================================================

@dataclass(frozen=True)
class VelocityProfile:
    """Reference traversal rate v_ref(lam) > 0 over arc length."""

    kind: str
    params: dict
    _fn: Callable[[np.ndarray], np.ndarray]

    def __call__(self, lam):
        lam = np.asarray(lam, dtype=float)
        out = self._fn(lam)
        return float(out) if np.ndim(out) == 0 and np.ndim(lam) == 0 else out

    def describe(self) -> dict:
        return {"kind": self.kind, **self.params}


def constant_velocity(value: float = 1.0) -> VelocityProfile:
    if value <= 0:
        raise PathSpecError(f"velocity must be positive, got {value}")
    return VelocityProfile("constant", {"value": value}, lambda lam: np.full_like(np.asarray(lam, float), value) if np.ndim(lam) else value)


def polynomial_velocity(coeffs: Sequence[float]) -> VelocityProfile:
    """v_ref(lam) = c0 + c1*lam + c2*lam^2 + ...; positivity checked on use."""
    c = [float(x) for x in coeffs]
    if not c:
        raise PathSpecError("polynomial velocity needs at least one coefficient")

    def fn(lam):
        return np.polynomial.polynomial.polyval(np.asarray(lam, float), c)

    return VelocityProfile("polynomial", {"coeffs": c}, fn)


def table_velocity(lam_nodes: Sequence[float], values: Sequence[float]) -> VelocityProfile:
    lam_nodes = np.asarray(lam_nodes, float)
    values = np.asarray(values, float)
    if len(lam_nodes) < 2 or np.any(np.diff(lam_nodes) <= 0):
        raise PathSpecError("velocity table needs >= 2 strictly increasing nodes")
    if np.any(values <= 0):
        raise PathSpecError("velocity table values must be positive")
    interp = PchipInterpolator(lam_nodes, values)  # monotone shape-preserving

    def fn(lam):
        return interp(np.clip(lam, lam_nodes[0], lam_nodes[-1]))

    return VelocityProfile(
        "table", {"lam": lam_nodes.tolist(), "values": values.tolist()}, fn
    )


def callable_velocity(fn: Callable, label: str = "custom") -> VelocityProfile:
    """Programmatic profile; label lands in manifests instead of parameters."""
    return VelocityProfile("callable", {"label": label}, lambda lam: np.asarray(fn(lam), float) if np.ndim(lam) else float(fn(lam)))


def natural_velocity(arcmap: ArcLengthMap, tau: float | None = None) -> VelocityProfile:
    """Profile that makes the raw parameter advance uniformly: v = speed(s)/tau.

    With this profile and slowdown 1 the traversal satisfies s(t) = s_lo + t/tau,
    i.e. the family's own clock. ``tau`` defaults to the path's natural_tau
    metadata (families with a time-like parameter set it to 1 there).
    """
    if tau is None:
        tau = float(arcmap.path.params.get("natural_tau", arcmap.path.params.get("tau", 1.0)))
    if tau <= 0:
        raise PathSpecError(f"tau must be positive, got {tau}")
    return callable_velocity(
        lambda lam: arcmap.speed_of_lam(lam) / tau, label=f"natural(tau={tau})"
    )


def velocity_from_spec(spec: dict) -> VelocityProfile:
    """Decode the JSON velocity description {"kind": ..., ...params}."""
    if not isinstance(spec, dict):
        raise PathSpecError("velocity spec must be an object")
    kind = spec.get("kind")
    rest = {k: v for k, v in spec.items() if k != "kind"}
    if kind == "constant":
        if set(rest) - {"value"}:
            raise PathSpecError(f"unknown constant-velocity field(s) {sorted(set(rest) - {'value'})}")
        return constant_velocity(rest.get("value", 1.0))
    if kind == "polynomial":
        if set(rest) != {"coeffs"}:
            raise PathSpecError("polynomial velocity takes exactly 'coeffs'")
        return polynomial_velocity(rest["coeffs"])
    if kind == "table":
        if set(rest) != {"lam", "values"}:
            raise PathSpecError("table velocity takes exactly 'lam' and 'values'")
        return table_velocity(rest["lam"], rest["values"])
    raise PathSpecError(f"unknown velocity kind '{kind}'")


# ============================================================
# Schedules
# ============================================================

@dataclass(frozen=True)
class Schedule:
    """A traversal clock: arc position against physical time.

    Combines a reference velocity profile with a uniform slowdown s_c >= 1;
    the actual rate is v(lam) = v_ref(lam) / s_c. Time-from-arc and
    arc-from-time come from splines through per-cell Gauss integrals of
    1/v, while the headline transit_time is an independent adaptive
    quadrature (the two agree to the spline tolerance by construction).
    """

    lam_lo: float
    lam_hi: float
    slowdown: float
    profile: VelocityProfile
    transit_time: float
    _t_of_lam: CubicSpline
    _lam_of_t: CubicSpline

    @property
    def arc_span(self) -> float:
        return self.lam_hi - self.lam_lo

    @property
    def mean_velocity(self) -> float:
        return self.arc_span / self.transit_time

    def velocity(self, lam):
        return self.profile(lam) / self.slowdown

    def t_of_lambda(self, lam):
        return np.clip(self._t_of_lam(lam), 0.0, self.transit_time)

    def lambda_of_t(self, t):
        return np.clip(self._lam_of_t(t), self.lam_lo, self.lam_hi)


def make_schedule(
    arc_span: float | tuple[float, float],
    profile: VelocityProfile,
    slowdown: float = 1.0,
    n_nodes: int = 2049,
    rel_tol: float = 1e-10,
) -> Schedule:
    """Build the schedule covering an arc interval under profile/slowdown."""
    if slowdown < 1.0:
        raise PathSpecError(f"slowdown must be >= 1, got {slowdown}")
    lam_lo, lam_hi = (0.0, float(arc_span)) if np.isscalar(arc_span) else map(float, arc_span)
    if not lam_hi > lam_lo:
        raise PathSpecError(f"empty arc interval [{lam_lo}, {lam_hi}]")

    lam_nodes = np.linspace(lam_lo, lam_hi, n_nodes)
    pace_vec = lambda lam: slowdown / np.maximum(profile(lam), 1e-300)
    probe = profile(lam_nodes)
    if np.any(probe <= 0):
        raise PathSpecError("velocity profile is not positive on the arc interval")

    cells = _gauss_cells(pace_vec, lam_nodes)
    t_nodes = np.concatenate([[0.0], np.cumsum(cells)])
    transit = adaptive_simpson(
        lambda lam: float(pace_vec(np.asarray([lam]))[0]), lam_lo, lam_hi, rel_tol=rel_tol
    )

    return Schedule(
        lam_lo=lam_lo, lam_hi=lam_hi, slowdown=float(slowdown), profile=profile,
        transit_time=float(transit),
        _t_of_lam=CubicSpline(lam_nodes, t_nodes),
        _lam_of_t=CubicSpline(t_nodes, lam_nodes),
    )
