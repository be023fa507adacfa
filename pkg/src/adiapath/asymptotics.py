"""Power-law fits, the leading switching coefficient, and scaling experiments.

Two experiment drivers live here. The periodic driver slows a rotating
two-level traversal until N cycles accumulate a requested error and watches
how the matched transit time grows with total arc; the counterexample driver
traverses the three-level family at its natural schedule and records the time
needed to reach a given arc length together with the error plateau. Both
produce rows that are independent of each other, so they can be farmed out
to worker processes.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.integrate import simpson

from . import evolve
from .metrics import cost_summary
from .model import DegenerateSpectrumError, rotating_two_level_path, three_level_path
from .pathgeom import ArcLengthMap, Schedule, arc_length_map, make_schedule, natural_velocity
from .quadrature import loglog_least_squares
from .spectral import GaugedFrame, ground_state_batch


class BisectionError(RuntimeError):
    """Slowdown search failed to bracket or converge on the error target."""


class MonotonicityError(RuntimeError):
    """Measured error rose while the slowdown increased in the small-error regime."""


class PlateauError(RuntimeError):
    """Running-max error never settled inside the recorded traversal."""


# ============================================================
# Power-law fitting
# ============================================================

@dataclass(frozen=True)
class ScalingFit:
    """Least-squares power law through positive samples, on log-log axes.

    window is the index range (lo, hi) of the sorted samples actually fitted.
    endpoint_sensitivity is the largest shift of the exponent when one end of
    the window is dropped; it is reported, never used to reject a fit.
    """

    xs: np.ndarray
    ys: np.ndarray
    exponent: float
    intercept: float
    residual_rms: float
    window: tuple[int, int]
    endpoint_sensitivity: float

    def describe(self) -> str:
        lo, hi = self.window
        return (
            f"exponent {self.exponent:.4f} on {hi - lo} of {len(self.xs)} points, "
            f"residual rms {self.residual_rms:.2e}, "
            f"endpoint sensitivity {self.endpoint_sensitivity:.3f}"
        )


def fit_power_law(xs, ys, window_policy: str = "all") -> ScalingFit:
    """Fit y = c * x**p by least squares on logs.

    window_policy "all" uses every sample; "largest_decade" keeps the samples
    with x >= max(x)/10, widened to the top four samples when the decade is
    thinner than that. Requires at least four positive samples overall.
    """
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    if xs.shape != ys.shape or xs.ndim != 1:
        raise ValueError("samples must be two equal-length 1-d arrays")
    if len(xs) < 4:
        raise ValueError("power-law fit needs at least 4 points")
    if np.any(xs <= 0.0) or np.any(ys <= 0.0):
        raise ValueError("power-law fit needs positive data")
    order = np.argsort(xs)
    xs, ys = xs[order], ys[order]

    if window_policy == "all":
        lo = 0
    elif window_policy == "largest_decade":
        lo = int(np.searchsorted(xs, xs[-1] / 10.0))
        lo = min(lo, len(xs) - 4)
    else:
        raise ValueError(f"unknown window policy '{window_policy}'")
    window = (lo, len(xs))

    wx, wy = xs[lo:], ys[lo:]
    exponent, log_c = loglog_least_squares(wx, wy)
    res = np.log(wy) - (exponent * np.log(wx) + log_c)
    residual_rms = float(np.sqrt(np.mean(res**2)))

    sens = 0.0
    if len(wx) > 2:
        for sl in (slice(1, None), slice(None, -1)):
            alt, _ = loglog_least_squares(wx[sl], wy[sl])
            sens = max(sens, abs(alt - exponent))

    return ScalingFit(
        xs=xs,
        ys=ys,
        exponent=float(exponent),
        intercept=float(log_c),
        residual_rms=residual_rms,
        window=window,
        endpoint_sensitivity=float(sens),
    )


# ============================================================
# Leading switching coefficient
# ============================================================

@dataclass(frozen=True)
class SwitchingCoefficient:
    """Endpoint data of the slow-traversal error series, in three readings.

    footnote_value follows the bare recipe: ratios coupling/gap straight off
    the frame, the final term carrying the phase exp(i * gap_area * T) with
    gap_area the plain arc integral of each gap. endpoint_difference is the
    same with the phase dropped. reduced_value converts each ratio to its
    time form coupling * (du/dt) / gap and uses the accumulated dynamical
    phase, which makes it exactly the boundary term of the first-order error
    integral; its phase-free ceiling is reduced_envelope, and
    envelope_times_t = reduced_envelope * transit_time is the constant that
    eps * T sweeps approach from below as the traversal slows.
    """

    footnote_value: float
    endpoint_difference: float
    reduced_value: float
    reduced_envelope: float
    envelope_times_t: float
    transit_time: float
    gap_areas: np.ndarray
    dynamical_phases: np.ndarray
    couplings_initial: np.ndarray
    couplings_final: np.ndarray


def switching_coefficient(
    frame: GaugedFrame,
    arcmap: ArcLengthMap,
    schedule: Schedule,
    *,
    parameter: str = "arc",
) -> SwitchingCoefficient:
    """Evaluate the leading switching coefficient from endpoint frame data.

    parameter declares the frame's grid variable: "arc" for a frame built on
    arcmap.arc_path() over arc length, "path" for a frame on the underlying
    path over its own parameter. With "path" the time-form ratios divide by
    the local ground speed, so at a stalled endpoint they are 0/0 limits.
    The finite-difference frame normally resolves those to the finite
    invariant value; nan is reported only when the endpoint speed estimate
    underflows (a flat stall). The bare ratios vanish there either way.
    """
    if parameter not in ("arc", "path"):
        raise ValueError(f"unknown frame parameter '{parameter}'")
    u = frame.s_grid
    if parameter == "arc":
        lam = u
        dlam_du = np.ones_like(u)
    else:
        lam = arcmap.lam_of_s(u)
        dlam_du = frame.speeds

    deltas = frame.energies[:, 1:] - frame.energies[:, :1]
    if deltas[0].min() <= 1e-12 or deltas[-1].min() <= 1e-12:
        raise DegenerateSpectrumError("endpoint spectrum is degenerate")

    c_i = frame.connection[0, 1:, 0]
    c_f = frame.connection[-1, 1:, 0]
    t_total = schedule.transit_time
    v_lam = schedule.velocity(lam)

    gap_areas = simpson(deltas * dlam_du[:, None], x=u, axis=0)
    phases = simpson(deltas * (dlam_du / v_lam)[:, None], x=u, axis=0)

    bare_i = c_i / deltas[0]
    bare_f = c_f / deltas[-1]
    footnote = float(np.linalg.norm(np.exp(1j * gap_areas * t_total) * bare_f - bare_i))
    difference = float(np.linalg.norm(bare_f - bare_i))

    du_dt_ends = np.array([v_lam[0], v_lam[-1]]) / np.array([dlam_du[0], dlam_du[-1]])
    with np.errstate(divide="ignore", invalid="ignore"):
        red_i = c_i * du_dt_ends[0] / deltas[0]
        red_f = c_f * du_dt_ends[-1] / deltas[-1]
    speed_floor = 1e-8 * float(dlam_du.max())
    if parameter == "path" and (dlam_du[0] <= speed_floor or dlam_du[-1] <= speed_floor):
        reduced = envelope = math.nan
    else:
        reduced = float(np.linalg.norm(np.exp(1j * phases) * red_f - red_i))
        envelope = float(np.linalg.norm(np.abs(red_f) + np.abs(red_i)))

    return SwitchingCoefficient(
        footnote_value=footnote,
        endpoint_difference=difference,
        reduced_value=reduced,
        reduced_envelope=envelope,
        envelope_times_t=envelope * t_total,
        transit_time=float(t_total),
        gap_areas=gap_areas,
        dynamical_phases=phases,
        couplings_initial=c_i,
        couplings_final=c_f,
    )


# Spec-facing alias; the config file tag for this quantity is "b1".
b1_coefficient = switching_coefficient


# ============================================================
# Shared traversal instrumentation
# ============================================================

def eps_series(ham_values: np.ndarray, states: np.ndarray) -> np.ndarray:
    """Diabatic error of each state against the matching instantaneous H."""
    grounds = ground_state_batch(ham_values)
    overlap = np.abs(np.einsum("ij,ij->i", grounds.conj(), states)) ** 2
    norms = np.einsum("ij,ij->i", states.conj(), states).real
    return np.sqrt(np.maximum(norms - overlap, 0.0))


def _parabolic_peak(ts: np.ndarray, eps: np.ndarray, cap: float = 0.05) -> tuple[float, float]:
    """Peak (time, value) from the argmax triple, capped against overshoot.

    Only trustworthy when neighbouring samples resolve the oscillation; the
    caller decides whether to use it or fall back to the raw maximum.
    """
    m = int(np.argmax(eps))
    if m == 0 or m == len(eps) - 1:
        return float(ts[m]), float(eps[m])
    y0, y1, y2 = eps[m - 1], eps[m], eps[m + 1]
    denom = 2.0 * y1 - y0 - y2
    if denom <= 0.0:
        return float(ts[m]), float(y1)
    shift = 0.5 * (y2 - y0) / denom
    value = y1 + 0.125 * (y2 - y0) * shift
    if not (abs(shift) <= 1.0 and value <= y1 * (1.0 + cap)):
        return float(ts[m]), float(y1)
    t_peak = ts[m] + shift * 0.5 * (ts[m + 1] - ts[m - 1])
    return float(t_peak), float(value)


# ============================================================
# Rotating-family cycle probes
# ============================================================

@dataclass(frozen=True)
class CycleProbe:
    """One slowed rotation cycle: its propagator, error peak, and timing."""

    unitary: np.ndarray
    cycle_time: float
    peak_eps: float
    final_eps: float
    slowdown: float


def rotating_cycle(
    gap: float,
    tau_ref: float,
    slowdown: float,
    *,
    target: float = 1e-9,
    n_eps_samples: int = 2053,
    want_unitary: bool = True,
) -> CycleProbe:
    """Integrate one cycle of the slowed rotating family and probe its error.

    The error peak is the raw maximum over n_eps_samples times. The sample
    count is deliberately an odd prime: at resonant slowdowns the error
    oscillation locks to the cycle, and a composite count aliases the
    sample phases onto a handful of values that can all miss the crests.
    """
    path = rotating_two_level_path(gap, tau_ref)
    arcmap = arc_length_map(path, 0.0, tau_ref)
    schedule = make_schedule(
        (0.0, arcmap.total), natural_velocity(arcmap), slowdown=slowdown
    )
    ham = evolve.schedule_hamiltonian(path, arcmap, schedule)
    t_cycle = schedule.transit_time
    psi0 = evolve.ground_state(path, 0.0)

    ts = np.linspace(0.0, t_cycle, n_eps_samples + 1)[1:]
    traj = evolve.integrate(ham, t_cycle, psi0, t_samples=ts, target=target)
    eps = eps_series(ham(ts), traj.states)

    unitary = None
    if want_unitary:
        unitary = evolve.integrate_unitary(ham, t_cycle, 2, target=target).unitary
    return CycleProbe(
        unitary=unitary,
        cycle_time=float(t_cycle),
        peak_eps=float(eps.max()),
        final_eps=float(eps[-1]),
        slowdown=float(slowdown),
    )


def match_slowdown(
    n_cycles: int,
    eps_target: float,
    *,
    gap: float = 1.0,
    tau_ref: float = 2.0 * math.pi,
    rel_tol: float = 0.02,
    max_iter: int = 40,
    probe_target: float = 1e-7,
) -> tuple[float, float]:
    """Bisect the slowdown until n_cycles * (single-cycle peak) hits eps_target.

    Returns (slowdown, matched eps). The accumulated error over n_cycles is
    composed from the single-cycle peak, which falls monotonically as the
    traversal slows; a rise between probes once the error is small aborts the
    search, since it means the measurement cannot be trusted.
    """
    small_probes: list[tuple[float, float]] = []

    def measure(s_c: float) -> float:
        probe = rotating_cycle(
            gap, tau_ref, s_c, target=probe_target, want_unitary=False
        )
        eps = n_cycles * probe.peak_eps
        if eps < 0.05:
            for prev_s, prev_eps in small_probes:
                if s_c > prev_s and eps > prev_eps * (1.0 + 1e-4):
                    raise MonotonicityError(
                        f"error rose from {prev_eps:.3e} at slowdown {prev_s:.6g} "
                        f"to {eps:.3e} at slowdown {s_c:.6g}"
                    )
            small_probes.append((s_c, eps))
        return eps

    lo, hi = 1.0, 2.0
    eps_hi = measure(hi)
    grow = 0
    while eps_hi > eps_target:
        lo, hi = hi, hi * 4.0
        eps_hi = measure(hi)
        grow += 1
        if grow > 24:
            raise BisectionError("could not bracket the error target from above")

    for _ in range(max_iter):
        mid = math.sqrt(lo * hi)
        eps_mid = measure(mid)
        if abs(eps_mid - eps_target) <= rel_tol * eps_target:
            return mid, eps_mid
        if eps_mid > eps_target:
            lo = mid
        else:
            hi = mid
    raise BisectionError(
        f"no slowdown matching eps={eps_target:.3e} within {max_iter} bisections"
    )


# ============================================================
# Periodic scaling experiment
# ============================================================

@dataclass(frozen=True)
class PeriodicScalingRow:
    """Matched-error traversal of n_cycles rotations."""

    n_cycles: int
    arc_length: float
    slowdown_star: float
    eps_at_star: float
    transit_time: float
    cost_mean: float
    cost_rms: float
    cost_sqrt: float


def periodic_row(
    n_cycles: int,
    eps_target: float,
    *,
    gap: float = 1.0,
    tau_ref: float = 2.0 * math.pi,
    rel_tol: float = 0.02,
) -> PeriodicScalingRow:
    s_star, eps_star = match_slowdown(
        n_cycles, eps_target, gap=gap, tau_ref=tau_ref, rel_tol=rel_tol
    )
    path = rotating_two_level_path(gap, tau_ref)
    arcmap = arc_length_map(path, 0.0, n_cycles * tau_ref)
    schedule = make_schedule(
        (0.0, arcmap.total), natural_velocity(arcmap), slowdown=s_star
    )
    costs = cost_summary(path, arcmap, schedule, n_profile=257)
    return PeriodicScalingRow(
        n_cycles=n_cycles,
        arc_length=float(arcmap.total),
        slowdown_star=float(s_star),
        eps_at_star=float(eps_star),
        transit_time=float(schedule.transit_time),
        cost_mean=costs["mean"].value,
        cost_rms=costs["rms"].value,
        cost_sqrt=costs["sqrt"].value,
    )


def _periodic_row_task(kwargs: dict) -> PeriodicScalingRow:
    return periodic_row(kwargs.pop("n_cycles"), kwargs.pop("eps_target"), **kwargs)


@dataclass(frozen=True)
class PeriodicScalingResult:
    rows: tuple[PeriodicScalingRow, ...]
    fit: ScalingFit
    eps_target: float
    gap: float
    tau_ref: float

    @property
    def superlinear(self) -> bool:
        return self.fit.exponent > 1.0


def periodic_scaling_experiment(
    eps_target: float,
    n_list,
    *,
    gap: float = 1.0,
    tau_ref: float = 2.0 * math.pi,
    rel_tol: float = 0.02,
    jobs: int = 1,
) -> PeriodicScalingResult:
    """Match eps_target for each cycle count and fit transit time against arc.

    The verdict exponent comes from the largest available decade of the
    matched rows; anything meaningfully above 1 says the transit time grows
    faster than the traversed arc.
    """
    n_list = [int(n) for n in n_list]
    if sorted(n_list) != n_list or len(set(n_list)) != len(n_list):
        raise ValueError("cycle counts must be strictly increasing")
    tasks = [
        dict(n_cycles=n, eps_target=eps_target, gap=gap, tau_ref=tau_ref, rel_tol=rel_tol)
        for n in n_list
    ]
    rows = _run_rows(_periodic_row_task, tasks, jobs)
    rows = tuple(sorted(rows, key=lambda r: r.n_cycles))
    fit = fit_power_law(
        [r.arc_length for r in rows],
        [r.transit_time for r in rows],
        window_policy="largest_decade",
    )
    return PeriodicScalingResult(
        rows=rows, fit=fit, eps_target=eps_target, gap=gap, tau_ref=tau_ref
    )


def exploratory_f_profile(result: PeriodicScalingResult) -> dict:
    """Exploratory only: log(N/eps) against inverse mean velocity.

    A straight line here sketches the shape of the slowdown law implied by
    the matched rows; nothing downstream consumes it.
    """
    xs = [r.transit_time / r.arc_length for r in result.rows]
    ys = [math.log(r.n_cycles / result.eps_target) for r in result.rows]
    slope, intercept = np.polyfit(xs, ys, 1)
    return {
        "exploratory": True,
        "inverse_mean_velocity": xs,
        "log_cycles_over_eps": ys,
        "slope": float(slope),
        "intercept": float(intercept),
    }


# ============================================================
# Three-level counterexample experiment
# ============================================================

@dataclass(frozen=True)
class CounterexampleRow:
    """Natural-schedule traversal of the three-level family out to one arc."""

    arc_length: float
    transit_time: float
    analytic_time: float
    plateau_time: float
    eps_max: float
    eps_final: float


def counterexample_row(
    arc_length: float,
    *,
    gap: float = 1.0,
    tau: float = 1.0,
    slowdown: float = 1.0,
    n_eps_samples: int = 2048,
    target: float = 1e-9,
    plateau_frac: float = 0.005,
) -> CounterexampleRow:
    """Traverse to the given arc length and record timing plus error marks.

    plateau_time is the first sampled time at which the running maximum of
    the error is within plateau_frac of its final value; if that only
    happens in the last stretch of the traversal the plateau never formed.
    """
    path = three_level_path(gap, tau)
    s_hi = math.sqrt(1.0 + 2.0 * arc_length) - 1.0
    arcmap = arc_length_map(path, 0.0, s_hi)
    schedule = make_schedule(
        (0.0, arc_length), natural_velocity(arcmap), slowdown=slowdown
    )
    ham = evolve.schedule_hamiltonian(path, arcmap, schedule)
    t_total = schedule.transit_time
    psi0 = evolve.ground_state(path, 0.0)

    ts = np.linspace(0.0, t_total, n_eps_samples + 1)[1:]
    traj = evolve.integrate(ham, t_total, psi0, t_samples=ts, target=target)
    eps = eps_series(ham(ts), traj.states)

    running = np.maximum.accumulate(eps)
    threshold = running[-1] * (1.0 - plateau_frac)
    idx = int(np.searchsorted(running, threshold))
    if idx >= int(0.98 * (len(ts) - 1)):
        raise PlateauError(
            f"error still climbing at arc {arc_length:g}: running max first "
            f"reaches its plateau at sample {idx} of {len(ts)}"
        )
    _, eps_peak = _parabolic_peak(ts, eps)

    analytic = tau * slowdown * (math.sqrt(1.0 + 2.0 * arc_length) - 1.0)
    return CounterexampleRow(
        arc_length=float(arc_length),
        transit_time=float(t_total),
        analytic_time=float(analytic),
        plateau_time=float(ts[idx]),
        eps_max=float(eps_peak),
        eps_final=float(eps[-1]),
    )


def _counterexample_row_task(kwargs: dict) -> CounterexampleRow:
    return counterexample_row(kwargs.pop("arc_length"), **kwargs)


@dataclass(frozen=True)
class CounterexampleResult:
    rows: tuple[CounterexampleRow, ...]
    fit: ScalingFit
    overlay_rel_dev: float
    gap: float
    tau: float
    slowdown: float
    plateau_frac: float


def counterexample_scaling_experiment(
    l_list,
    *,
    gap: float = 1.0,
    tau: float = 1.0,
    slowdown: float = 1.0,
    jobs: int = 1,
    plateau_frac: float = 0.005,
    target: float = 1e-9,
) -> CounterexampleResult:
    """Record the time to reach each arc length and fit its growth law.

    overlay_rel_dev compares the recorded times against the closed-form
    traversal time of the natural schedule, over the rows with arc length
    at least 10 where the closed form is the advertised check.
    """
    l_list = [float(x) for x in l_list]
    if sorted(l_list) != l_list or len(set(l_list)) != len(l_list):
        raise ValueError("arc lengths must be strictly increasing")
    if min(l_list) < 5.0:
        raise ValueError("arc lengths below 5 are outside the scaling regime")
    tasks = [
        dict(
            arc_length=L, gap=gap, tau=tau, slowdown=slowdown,
            plateau_frac=plateau_frac, target=target,
        )
        for L in l_list
    ]
    rows = _run_rows(_counterexample_row_task, tasks, jobs)
    rows = tuple(sorted(rows, key=lambda r: r.arc_length))
    fit = fit_power_law(
        [r.arc_length for r in rows],
        [r.transit_time for r in rows],
        window_policy="all",
    )
    overlay = [
        abs(r.transit_time - r.analytic_time) / r.analytic_time
        for r in rows
        if r.arc_length >= 10.0
    ]
    return CounterexampleResult(
        rows=rows,
        fit=fit,
        overlay_rel_dev=float(max(overlay)) if overlay else math.nan,
        gap=gap,
        tau=tau,
        slowdown=slowdown,
        plateau_frac=plateau_frac,
    )


def _run_rows(task, kwargs_list, jobs):
    if jobs <= 1 or len(kwargs_list) <= 1:
        return [task(dict(kw)) for kw in kwargs_list]
    with ProcessPoolExecutor(max_workers=min(jobs, len(kwargs_list))) as pool:
        return list(pool.map(task, [dict(kw) for kw in kwargs_list]))
