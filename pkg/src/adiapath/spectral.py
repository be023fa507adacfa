"""
Instantaneous eigensystems and transported frames
=================================================

Dense Hermitian diagonalization with a deterministic phase convention, plus
the machinery that strings pointwise eigensystems into a smooth frame along
a path: discrete parallel transport, the anti-Hermitian connection driving
transitions, tangent vectors of the ground-state curve, and the geometric
phase of closed loops.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .model import HamiltonianPath

# Adjacent-node eigenvector overlap below which the transport grid is refined;
# failure to recover after bisection signals a level crossing.
OVERLAP_THRESHOLD = 0.99
MAX_REFINE_DEPTH = 20


class FrameTransportError(RuntimeError):
    """Eigenvector continuation broke down (crossing or wild grid)."""


@dataclass(frozen=True)
class EigenSystem:
    """Eigendecomposition of one Hermitian matrix, energies ascending."""

    energies: np.ndarray
    states: np.ndarray  # orthonormal columns, deterministic phase

    @property
    def gap(self) -> float:
        return float(self.energies[1] - self.energies[0])

    @property
    def ground_energy(self) -> float:
        return float(self.energies[0])

    @property
    def ground(self) -> np.ndarray:
        return self.states[:, 0]


def _fix_phases(states: np.ndarray) -> np.ndarray:
    """Rotate each column so its largest-magnitude entry is real positive."""
    for k in range(states.shape[1]):
        col = states[:, k]
        idx = int(np.argmax(np.abs(col)))
        pivot = col[idx]
        if abs(pivot) > 0:
            states[:, k] = col * (pivot.conjugate() / abs(pivot))
    return states


def eigensystem(h: np.ndarray, require_ground_gap: bool = True) -> EigenSystem:
    """Diagonalize a Hermitian matrix.

    The ground level must be strictly separated from the first excited one
    (unless ``require_ground_gap`` is disabled); crossings among excited
    levels are allowed here and policed separately by frame transport.
    """
    h = np.asarray(h, dtype=complex)
    energies, states = np.linalg.eigh(h)
    scale = max(1.0, float(np.abs(energies).max()))
    if require_ground_gap and energies[1] - energies[0] <= 1e-12 * scale:
        from .model import DegenerateSpectrumError

        raise DegenerateSpectrumError(
            f"ground gap {energies[1] - energies[0]:.3e} is not resolvable"
        )
    return EigenSystem(energies=energies, states=_fix_phases(states))


def spectral_gap(path: HamiltonianPath, s: float) -> float:
    return eigensystem(path.hamiltonian(s)).gap


def minimum_gap(path: HamiltonianPath, s_grid) -> float:
    return min(eigensystem(path.hamiltonian(float(s))).gap for s in s_grid)


def ground_state_batch(h_batch: np.ndarray) -> np.ndarray:
    """Ground states of a stack of Hermitian matrices, shape (n, d).

    Two-level stacks use the closed form (this sits on hot sampling paths);
    larger dimensions fall back to per-matrix diagonalization. Phases are
    arbitrary: use only where a projector or an overlap magnitude is needed.
    """
    h_batch = np.asarray(h_batch, dtype=complex)
    n, d, _ = h_batch.shape
    if d == 2:
        a = h_batch[:, 0, 0].real
        c = h_batch[:, 1, 1].real
        b = h_batch[:, 0, 1]
        delta = 0.5 * (a - c)
        r = np.sqrt(delta * delta + np.abs(b) ** 2)
        out = np.empty((n, 2), dtype=complex)
        # (b, -(delta+r)) solves the ground row; fall back to basis vectors
        # where the matrix is already diagonal
        top = delta + r
        diag = np.abs(b) < 1e-300
        out[:, 0] = np.where(diag, np.where(a <= c, 1.0, 0.0), b)
        out[:, 1] = np.where(diag, np.where(a <= c, 0.0, 1.0), -top)
        norm = np.linalg.norm(out, axis=1)
        return out / norm[:, None]
    out = np.empty((n, d), dtype=complex)
    for i in range(n):
        _, vecs = np.linalg.eigh(h_batch[i])
        out[i] = vecs[:, 0]
    return out


def ground_tangent(eig: EigenSystem, h_deriv: np.ndarray) -> np.ndarray:
    """d|g>/ds in the parallel-transport gauge, from first-order perturbation.

    |g'> = sum_{k>0} |k> <k|dH/ds|g> / (E_g - E_k). Gauge-free input (no
    frame continuation needed), which makes it the reference route for
    tangent norms and transition weights.
    """
    drive = eig.states.conj().T @ (np.asarray(h_deriv, dtype=complex) @ eig.ground)
    denom = eig.ground_energy - eig.energies[1:]
    return eig.states[:, 1:] @ (drive[1:] / denom)


def ground_speed(eig: EigenSystem, h_deriv: np.ndarray) -> float:
    """Norm of the ground tangent; independent of all phase choices."""
    return float(np.linalg.norm(ground_tangent(eig, h_deriv)))


# ============================================================
# Transported frames
# ============================================================

@dataclass(frozen=True)
class GaugedFrame:
    """Parallel-transported eigenframe along a parameter grid.

    Attributes
    ----------
    s_grid : (n,) parameter values, refined from the caller's grid wherever
        adjacent eigenvectors overlapped below OVERLAP_THRESHOLD.
    energies : (n, d) ascending eigenvalues.
    states : (n, d, d) transported eigenvector columns.
    connection : (n, d, d) anti-Hermitian matrices A[j, k] ~ <e_j | d/ds e_k>
        from central differences of the transported frame.
    speeds : (n,) ground-tangent norms ||d|g>/ds||, read off the connection.
    """

    s_grid: np.ndarray
    energies: np.ndarray
    states: np.ndarray
    connection: np.ndarray
    speeds: np.ndarray

    @property
    def dim(self) -> int:
        return self.states.shape[2]

    def gauge_defect(self) -> float:
        """Largest diagonal connection element; zero in exact transport."""
        diags = np.abs(np.diagonal(self.connection, axis1=1, axis2=2))
        return float(diags.max())

    def antihermiticity_defect(self) -> float:
        sym = self.connection + self.connection.conj().transpose(0, 2, 1)
        return float(np.abs(sym).max())

    def ground_states(self) -> np.ndarray:
        return self.states[:, :, 0]

    def gaps(self) -> np.ndarray:
        return self.energies[:, 1] - self.energies[:, 0]

    def closed_loop_defect(self) -> float:
        """1 - |<g(start)|g(end)>| for loop grids; small iff the path closes."""
        ov = np.vdot(self.states[0, :, 0], self.states[-1, :, 0])
        return float(abs(1.0 - abs(ov)))

    def loop_phase(self) -> float:
        """Discrete geometric phase of the ground state around the grid.

        Product-of-overlaps form, closed with the overlap back to the first
        node; gauge invariant, meaningful when the grid is a closed loop.
        """
        grounds = self.states[:, :, 0]
        phase = 1.0 + 0.0j
        for a, b in zip(grounds[:-1], grounds[1:]):
            ov = np.vdot(a, b)
            phase *= ov / abs(ov)
        ov = np.vdot(grounds[-1], grounds[0])
        phase *= ov / abs(ov)
        return float(np.angle(phase))


def _adjacent_overlaps(states: np.ndarray) -> np.ndarray:
    """<e_k(i)|e_k(i+1)> for every adjacent pair and level, shape (n-1, d)."""
    return np.einsum("ijk,ijk->ik", states[:-1].conj(), states[1:])


def _edge_derivative(f3: np.ndarray, x3: np.ndarray) -> np.ndarray:
    """d f/dx at x3[0] from three nodes; second order on any spacing."""
    x0, x1, x2 = x3
    c0 = (2 * x0 - x1 - x2) / ((x0 - x1) * (x0 - x2))
    c1 = (x0 - x2) / ((x1 - x0) * (x1 - x2))
    c2 = (x0 - x1) / ((x2 - x0) * (x2 - x1))
    return c0 * f3[0] + c1 * f3[1] + c2 * f3[2]


def _refine_interval(path: HamiltonianPath, a: float, b: float) -> list[float]:
    """Nodes to insert inside (a, b) until adjacent overlaps recover."""

    def eig_states(s: float) -> np.ndarray:
        return eigensystem(path.hamiltonian(s), require_ground_gap=False).states

    cache = {a: eig_states(a), b: eig_states(b)}
    inserted: list[float] = []
    stack = [(a, b, 0)]
    while stack:
        lo, hi, depth = stack.pop()
        ov = np.abs(np.einsum("jk,jk->k", cache[lo].conj(), cache[hi]))
        if float(ov.min()) >= OVERLAP_THRESHOLD:
            continue
        if depth >= MAX_REFINE_DEPTH:
            raise FrameTransportError(
                f"eigenvector continuation lost between s={lo} and s={hi}; "
                "levels appear to cross"
            )
        mid = 0.5 * (lo + hi)
        cache[mid] = eig_states(mid)
        inserted.append(mid)
        stack.append((mid, hi, depth + 1))
        stack.append((lo, mid, depth + 1))
    return inserted


def transport_frame(path: HamiltonianPath, s_grid) -> GaugedFrame:
    """Diagonalize along a grid and parallel-transport the eigenvector phases.

    The grid is refined by bisection wherever adjacent eigenvectors fail the
    overlap threshold; persistent failure at depth MAX_REFINE_DEPTH means
    levels cross (or the path is discontinuous) and raises.
    """
    s_arr = np.asarray([float(s) for s in s_grid])
    if s_arr.size < 2:
        raise ValueError("transport grid needs at least two nodes")
    if np.any(np.diff(s_arr) <= 0):
        raise ValueError("transport grid must be strictly increasing")

    energies, states = np.linalg.eigh(path.hamiltonian_batch(s_arr))
    # refine bad adjacency cells until the whole chain is continuable
    while True:
        bad = np.abs(_adjacent_overlaps(states)).min(axis=1) < OVERLAP_THRESHOLD
        if not bad.any():
            break
        extra: list[float] = []
        for i in np.flatnonzero(bad):
            extra.extend(_refine_interval(path, s_arr[i], s_arr[i + 1]))
        s_arr = np.unique(np.concatenate([s_arr, np.asarray(extra)]))
        energies, states = np.linalg.eigh(path.hamiltonian_batch(s_arr))

    degenerate = energies[:, 1] - energies[:, 0] <= 0
    if degenerate.any():
        raise FrameTransportError(
            f"ground level degenerate at s={s_arr[degenerate][0]}"
        )

    # phase alignment: cumulative correction making every adjacent
    # <e_k(prev)|e_k(next)> real positive
    states[0] = _fix_phases(states[0])
    q = _adjacent_overlaps(states)
    corrections = np.cumprod((q / np.abs(q)).conj(), axis=0)
    states[1:] *= corrections[:, None, :]

    diff = np.empty_like(states)
    diff[1:-1] = (states[2:] - states[:-2]) / (s_arr[2:] - s_arr[:-2])[:, None, None]
    diff[0] = _edge_derivative(states[:3], s_arr[:3])
    diff[-1] = _edge_derivative(states[-3:][::-1], s_arr[-3:][::-1])
    raw = np.einsum("ijk,ijl->ikl", states.conj(), diff)
    connection = 0.5 * (raw - raw.conj().transpose(0, 2, 1))
    # reduced tangent norm of the ground curve, straight off the connection
    speeds = np.linalg.norm(connection[:, 1:, 0], axis=1)

    return GaugedFrame(
        s_grid=s_arr, energies=energies, states=states,
        connection=connection, speeds=speeds,
    )


# ============================================================
# Artifact dumps
# ============================================================

def write_frame_csv(frame: GaugedFrame, filename: str) -> None:
    """Energies and ground gap along the grid, one row per node."""
    d = frame.dim
    header = "s," + ",".join(f"energy_{k}" for k in range(d)) + ",gap"
    lines = [header]
    for i, s in enumerate(frame.s_grid):
        cells = [repr(float(s))] + [repr(float(e)) for e in frame.energies[i]]
        cells.append(repr(float(frame.energies[i, 1] - frame.energies[i, 0])))
        lines.append(",".join(cells))
    with open(filename, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def write_frame_json(frame: GaugedFrame, filename: str) -> None:
    """Full transported frame, states as [re, im] pairs."""
    payload = {
        "s": frame.s_grid.tolist(),
        "energies": frame.energies.tolist(),
        "speeds": frame.speeds.tolist(),
        "states": [
            [[[float(z.real), float(z.imag)] for z in row] for row in mat]
            for mat in frame.states
        ],
    }
    with open(filename, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
