"""
Schrödinger propagation along scheduled paths
=============================================

Two independent routes to the same physics:

* the time route: i d|psi>/dt = H(t)|psi> stepped with unitary one-step
  exponentials (geometric midpoint or a fourth-order two-exponential
  commutator-free scheme) on a uniform grid per segment;

* the arc route: the state expressed in the parallel-transported eigenframe
  and integrated in arc length, where the generator is diag(E)/v minus i
  times the frame connection.

Both use the same step-doubling acceptance rule: refine until the final
states of consecutive refinements agree below the target, then keep the
finer run. Disagreement between the two routes flags a bug in either; their
agreement is exercised heavily by the equivalence checks in `nogo`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from . import _backend
from .model import HamiltonianPath
from .pathgeom import ArcLengthMap, Schedule
from .spectral import GaugedFrame, eigensystem, transport_frame

# Fourth-order commutator-free pair: with H1, H2 at the Gauss points
# t_mid -/+ h*sqrt(3)/6, the step is
#   exp(-i h (x1 H1 + x2 H2)) exp(-i h (x2 H1 + x1 H2)),
# rightmost factor applied first.
_SQRT3 = math.sqrt(3.0)
_CF4_X1 = (3.0 - 2.0 * _SQRT3) / 12.0
_CF4_X2 = (3.0 + 2.0 * _SQRT3) / 12.0

# Initial step density: steps per unit of (duration * ||H||). The accepted
# run is chosen by step doubling, so these only set the starting point.
_STEP_DENSITY = {"midpoint": 1.0 / 0.1, "cf4": 1.0 / 0.4}

_MAX_HALVINGS = 12


class ConvergenceError(RuntimeError):
    """Step doubling hit the refinement cap without meeting the target."""


@dataclass(frozen=True)
class TrajectoryResult:
    """Accepted run of the time-route integrator."""

    times: np.ndarray        # (m,) sample times
    states: np.ndarray       # (m, d) states at sample times
    final_state: np.ndarray
    t_initial: float
    t_final: float
    n_steps: int             # physical steps of the accepted run
    n_halvings: int
    step_defect: float       # ||final(n) - final(2n)|| of the accepted pair
    target: float
    method: str
    backend: str


@dataclass(frozen=True)
class UnitaryResult:
    """Accepted run of the propagator (full unitary) integrator."""

    unitary: np.ndarray
    t_initial: float
    t_final: float
    n_steps: int
    n_halvings: int
    step_defect: float
    target: float
    method: str
    backend: str


@dataclass(frozen=True)
class ArcTrajectoryResult:
    """Accepted run of the arc-route integrator.

    states are physical (lab-frame) vectors reconstructed from the
    transported-frame amplitudes; mode_amplitudes keep the frame
    components, whose magnitudes give level populations directly.
    """

    lams: np.ndarray
    states: np.ndarray
    mode_amplitudes: np.ndarray
    final_state: np.ndarray
    final_mode_amplitudes: np.ndarray
    lam_initial: float
    lam_final: float
    n_steps: int
    n_halvings: int
    step_defect: float
    target: float
    backend: str


# ============================================================
# Time route
# ============================================================

def _chunk_size(dim: int) -> int:
    return max(1024, (1 << 18) // (dim * dim))


def _segment_chunk(ham_batch, t0, h, j0, j1, method):
    """Step generators and step sizes for steps j0..j1-1 of one segment."""
    j = np.arange(j0, j1)
    tm = t0 + (j + 0.5) * h
    if method == "midpoint":
        return ham_batch(tm), np.full(j1 - j0, h)
    off = h * _SQRT3 / 6.0
    h1 = ham_batch(tm - off)
    h2 = ham_batch(tm + off)
    ga = _CF4_X2 * h1 + _CF4_X1 * h2
    gb = _CF4_X1 * h1 + _CF4_X2 * h2
    gens = np.stack([ga, gb], axis=1).reshape(2 * (j1 - j0), *h1.shape[1:])
    return gens, np.full(2 * (j1 - j0), h)


def _run_segment(ham_batch, t0, t1, n, psi, method, dim):
    h = (t1 - t0) / n
    chunk = _chunk_size(dim)
    for start in range(0, n, chunk):
        gens, hs = _segment_chunk(ham_batch, t0, h, start, min(start + chunk, n), method)
        psi, _ = _backend.propagate(psi, gens, hs)
    return psi


def _sample_bounds(t_initial, t_final, t_samples):
    if not t_final > t_initial:
        raise ValueError(f"need t_final > t_initial, got [{t_initial}, {t_final}]")
    if t_samples is None:
        return [t_final], [(t_initial, t_final)]
    samples = [float(t) for t in t_samples]
    if any(b <= a for a, b in zip(samples[:-1], samples[1:])):
        raise ValueError("sample times must be strictly increasing")
    if samples and (samples[0] <= t_initial or samples[-1] > t_final * (1 + 1e-12)):
        raise ValueError("sample times must lie inside (t_initial, t_final]")
    bounds = [t_initial] + samples
    if samples[-1] < t_final:
        bounds.append(t_final)
    return samples, list(zip(bounds[:-1], bounds[1:]))


def operator_norm_probe(ham_batch, t_initial, t_final, n_probe=257) -> float:
    """Largest |eigenvalue| of H over a uniform probe grid."""
    ts = np.linspace(t_initial, t_final, n_probe)
    return float(np.abs(np.linalg.eigvalsh(ham_batch(ts))).max())


def integrate(
    ham_batch: Callable[[np.ndarray], np.ndarray],
    t_final: float,
    psi0: np.ndarray,
    *,
    t_initial: float = 0.0,
    t_samples: Sequence[float] | None = None,
    target: float = 1e-9,
    method: str = "cf4",
    max_halvings: int = _MAX_HALVINGS,
) -> TrajectoryResult:
    """Propagate psi0 from t_initial to t_final under step doubling.

    ham_batch maps an array of times (m,) to Hermitian matrices (m, d, d).
    States are recorded at t_samples (default: the final time only).
    """
    if method not in _STEP_DENSITY:
        raise ValueError(f"unknown method '{method}'")
    psi0 = np.asarray(psi0, dtype=np.complex128)
    dim = psi0.shape[0]
    samples, cells = _sample_bounds(t_initial, t_final, t_samples)
    hmax = operator_norm_probe(ham_batch, t_initial, t_final)
    density = _STEP_DENSITY[method]
    base = [max(1, math.ceil((b - a) * max(hmax, 1e-30) * density)) for a, b in cells]

    def run(mult):
        psi = psi0
        rec = np.empty((len(cells), dim), dtype=np.complex128)
        for i, ((a, b), nb) in enumerate(zip(cells, base)):
            psi = _run_segment(ham_batch, a, b, nb * mult, psi, method, dim)
            rec[i] = psi
        return psi, rec

    prev_final, _ = run(1)
    mult = 1
    defect = math.inf
    for k in range(1, max_halvings + 1):
        mult *= 2
        cur_final, cur_rec = run(mult)
        defect = float(np.linalg.norm(cur_final - prev_final))
        if defect < target:
            return TrajectoryResult(
                times=np.asarray(samples),
                states=cur_rec[: len(samples)],
                final_state=cur_final,
                t_initial=float(t_initial),
                t_final=float(t_final),
                n_steps=mult * sum(base),
                n_halvings=k,
                step_defect=defect,
                target=float(target),
                method=method,
                backend=_backend.BACKEND,
            )
        prev_final = cur_final
    raise ConvergenceError(
        f"time-route refinement failed: defect {defect:.3e} after "
        f"{max_halvings} doublings (target {target:.1e})"
    )


def integrate_unitary(
    ham_batch: Callable[[np.ndarray], np.ndarray],
    t_final: float,
    dim: int,
    *,
    t_initial: float = 0.0,
    target: float = 1e-9,
    method: str = "cf4",
    max_halvings: int = _MAX_HALVINGS,
) -> UnitaryResult:
    """Full propagator from t_initial to t_final under step doubling."""
    if method not in _STEP_DENSITY:
        raise ValueError(f"unknown method '{method}'")
    if not t_final > t_initial:
        raise ValueError(f"need t_final > t_initial, got [{t_initial}, {t_final}]")
    hmax = operator_norm_probe(ham_batch, t_initial, t_final)
    density = _STEP_DENSITY[method]
    base = max(1, math.ceil((t_final - t_initial) * max(hmax, 1e-30) * density))
    chunk = _chunk_size(dim)

    def run(n):
        u = np.eye(dim, dtype=np.complex128)
        h = (t_final - t_initial) / n
        for start in range(0, n, chunk):
            gens, hs = _segment_chunk(
                ham_batch, t_initial, h, start, min(start + chunk, n), method
            )
            u = _backend.propagate_unitary(u, gens, hs)
        return u

    prev = run(base)
    mult = 1
    defect = math.inf
    for k in range(1, max_halvings + 1):
        mult *= 2
        cur = run(base * mult)
        defect = float(np.linalg.norm(cur - prev))
        if defect < target:
            return UnitaryResult(
                unitary=cur,
                t_initial=float(t_initial),
                t_final=float(t_final),
                n_steps=base * mult,
                n_halvings=k,
                step_defect=defect,
                target=float(target),
                method=method,
                backend=_backend.BACKEND,
            )
        prev = cur
    raise ConvergenceError(
        f"propagator refinement failed: defect {defect:.3e} after "
        f"{max_halvings} doublings (target {target:.1e})"
    )


def schedule_hamiltonian(
    path: HamiltonianPath, arcmap: ArcLengthMap, schedule: Schedule
) -> Callable[[np.ndarray], np.ndarray]:
    """H(t) for a path traversed per the schedule, as a batch callable."""

    def ham_batch(ts):
        lam = schedule.lambda_of_t(np.asarray(ts, dtype=float))
        return path.hamiltonian_batch(arcmap.s_of_lam(lam))

    return ham_batch


def ground_state(path: HamiltonianPath, s: float) -> np.ndarray:
    return eigensystem(path.hamiltonian(s)).ground


def diabatic_error(psi: np.ndarray, h_final: np.ndarray) -> float:
    """Norm of the component of psi outside the ground level of h_final."""
    g = eigensystem(h_final).ground
    overlap = abs(np.vdot(g, psi)) ** 2
    return math.sqrt(max(np.vdot(psi, psi).real - overlap, 0.0))


# ============================================================
# Arc route
# ============================================================

def _arc_generators(frame: GaugedFrame, velocity) -> np.ndarray:
    """Hermitian arc-length generators diag(E)/v - i*A at the frame nodes."""
    v = np.asarray(velocity(frame.s_grid), dtype=float)
    if np.any(v <= 0):
        raise ValueError("velocity must be positive along the arc")
    n, d = frame.energies.shape
    gens = -1j * frame.connection
    idx = np.arange(d)
    gens[:, idx, idx] += frame.energies / v[:, None]
    return gens


def integrate_arc(
    path: HamiltonianPath,
    arcmap: ArcLengthMap,
    schedule: Schedule,
    *,
    lam_samples: Sequence[float] | None = None,
    psi0: np.ndarray | None = None,
    target: float = 1e-8,
    n_base: int = 1024,
    max_halvings: int = _MAX_HALVINGS,
) -> ArcTrajectoryResult:
    """Integrate the traversal in arc length, in the transported eigenframe.

    Starts in the ground level unless psi0 (a lab-frame state at the initial
    point) says otherwise. The generator couples levels through the frame
    connection and advances phases at rate E/v, so the result carries the
    full dynamical phase and matches the time route state for state.
    """
    lam_lo, lam_hi = schedule.lam_lo, schedule.lam_hi
    if lam_samples is None:
        samples = [lam_hi]
    else:
        samples = [float(x) for x in lam_samples]
        if any(b <= a for a, b in zip(samples[:-1], samples[1:])):
            raise ValueError("arc samples must be strictly increasing")
        if samples and (samples[0] <= lam_lo or samples[-1] > lam_hi * (1 + 1e-12)):
            raise ValueError("arc samples must lie inside (lam_lo, lam_hi]")
    arc_path = arcmap.arc_path()
    dim = path.dim

    def run(n_cells):
        grid = np.unique(np.concatenate([
            np.linspace(lam_lo, lam_hi, n_cells + 1), np.asarray(samples)
        ]))
        frame = transport_frame(arc_path, grid)
        lam_nodes = frame.s_grid
        gens_nodes = _arc_generators(frame, schedule.velocity)
        cell_gens = 0.5 * (gens_nodes[:-1] + gens_nodes[1:])
        hs = np.diff(lam_nodes)
        if psi0 is None:
            phi = np.zeros(dim, dtype=np.complex128)
            phi[0] = 1.0
        else:
            phi = frame.states[0].conj().T @ np.asarray(psi0, dtype=np.complex128)
        sample_idx = np.searchsorted(lam_nodes, samples)
        rec_phi = np.empty((len(samples), dim), dtype=np.complex128)
        rec_psi = np.empty((len(samples), dim), dtype=np.complex128)
        chunk = _chunk_size(dim)
        pos = 0
        for m, stop in enumerate(sample_idx):
            while pos < stop:
                end = min(pos + chunk, stop)
                phi, _ = _backend.propagate(phi, cell_gens[pos:end], hs[pos:end])
                pos = end
            rec_phi[m] = phi
            rec_psi[m] = frame.states[stop] @ phi
        while pos < len(hs):
            end = min(pos + chunk, len(hs))
            phi, _ = _backend.propagate(phi, cell_gens[pos:end], hs[pos:end])
            pos = end
        psi_final = frame.states[-1] @ phi
        return phi, psi_final, rec_phi, rec_psi, len(hs)

    prev_psi = run(n_base)[1]
    mult = 1
    defect = math.inf
    for k in range(1, max_halvings + 1):
        mult *= 2
        phi, psi_final, rec_phi, rec_psi, n_steps = run(n_base * mult)
        defect = float(np.linalg.norm(psi_final - prev_psi))
        if defect < target:
            return ArcTrajectoryResult(
                lams=np.asarray(samples),
                states=rec_psi,
                mode_amplitudes=rec_phi,
                final_state=psi_final,
                final_mode_amplitudes=phi,
                lam_initial=float(lam_lo),
                lam_final=float(lam_hi),
                n_steps=n_steps,
                n_halvings=k,
                step_defect=defect,
                target=float(target),
                backend=_backend.BACKEND,
            )
        prev_psi = psi_final
    raise ConvergenceError(
        f"arc-route refinement failed: defect {defect:.3e} after "
        f"{max_halvings} doublings (target {target:.1e})"
    )


# ============================================================
# Perturbative error and effective generators
# ============================================================

def first_order_error(
    path: HamiltonianPath,
    arcmap: ArcLengthMap,
    schedule: Schedule,
    *,
    lam_samples: Sequence[float] | None = None,
    n_grid: int = 4097,
) -> np.ndarray:
    """Leading-order diabatic error from the oscillatory-integral formula.

    For each excited level k the complex amplitude is the arc integral of
    exp(+i Phi_k) <e_k|d/dlam g>, with Phi_k the accumulated gap phase
    integral of (E_k - E_g)/v; the error is the rms over levels. Returns
    values at lam_samples (default: the end of the schedule).
    """
    lam_lo, lam_hi = schedule.lam_lo, schedule.lam_hi
    samples = np.asarray([lam_hi] if lam_samples is None else lam_samples, float)
    grid = np.unique(np.concatenate([np.linspace(lam_lo, lam_hi, n_grid), samples]))
    frame = transport_frame(arcmap.arc_path(), grid)
    lam = frame.s_grid
    v = np.asarray(schedule.velocity(lam), dtype=float)
    rel_energies = frame.energies[:, 1:] - frame.energies[:, :1]
    coupling = frame.connection[:, 1:, 0]  # <e_k | d/dlam g>, k > 0

    # cumulative trapezoid in lam for both the phase and the amplitude
    def cumtrap(vals):
        steps = 0.5 * (vals[1:] + vals[:-1]) * np.diff(lam)[:, None]
        return np.concatenate([np.zeros((1, vals.shape[1])), np.cumsum(steps, axis=0)])

    phases = cumtrap(rel_energies / v[:, None])
    amplitudes = cumtrap(np.exp(1j * phases) * coupling)
    eps1 = np.sqrt((np.abs(amplitudes) ** 2).sum(axis=1))
    idx = np.searchsorted(lam, samples)
    return eps1[idx]


def segment_generator(u: np.ndarray, duration: float, phase_hint: float = 0.0) -> np.ndarray:
    """Hermitian G with exp(-i*G*duration) = u, principal branch.

    phase_hint (radians) is factored out before taking the branch, keeping
    eigenphases principal when a known dynamical phase exceeds pi.
    """
    from scipy.linalg import schur

    t, z = schur(np.asarray(u, dtype=complex) * np.exp(1j * phase_hint), output="complex")
    theta = np.angle(np.diagonal(t))
    g = (z * ((phase_hint - theta) / duration)) @ z.conj().T
    g = 0.5 * (g + g.conj().T)
    return g
