"""
Hamiltonian path families
=========================

A *path* is a smooth family of finite-dimensional Hermitian matrices H(s)
over a scalar parameter. The parameter carries no physical meaning by
itself; traversal schedules (module ``pathgeom``) decide how fast the family
is swept in time. Paths are immutable value objects carrying the closures
needed to evaluate H and dH/ds, plus enough metadata to reconstruct them
from a JSON description.

Two built-in families serve as benchmarks:

* ``three_level_path`` - a 3x3 family with a constant spectral gap whose
  ground-state arc length grows quadratically in the parameter while the
  top level's energy grows linearly.
* ``rotating_two_level_path`` - a two-level Hamiltonian of fixed norm whose
  eigenbasis rotates uniformly; after one period the family returns to its
  starting point, so repeated cycles model periodic driving.

Composite constructions (direct sums, entrywise-splined sampled data,
reparameterizations) and the JSON/CSV loaders live here too.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.interpolate import CubicSpline

MAX_DENSE_DIM = 64

# finite-difference step for the derivative fallback; paths are smooth and
# order-1 scaled, so sqrt-of-eps balancing is appropriate
_FD_STEP = 1e-6


class PathSpecError(ValueError):
    """Malformed path description (bad kind, bad params, bad samples)."""


class DegenerateSpectrumError(RuntimeError):
    """Ground level touches the first excited level somewhere on the path."""


@dataclass(frozen=True)
class HamiltonianPath:
    """Smooth Hermitian family H(s) on a parameter interval.

    Attributes
    ----------
    dim : int
        Matrix dimension (dense storage; capped at MAX_DENSE_DIM).
    s_min, s_max : float | None
        Parameter domain. ``s_max`` of None means unbounded above.
    kind : str
        Construction tag, one of the JSON-schema kinds.
    params : dict
        Construction parameters; sufficient to rebuild the path.
    """

    dim: int
    s_min: float
    s_max: float | None
    kind: str
    params: dict = field(repr=False)
    _eval: Callable[[float], np.ndarray] = field(repr=False)
    _eval_deriv: Callable[[float], np.ndarray] | None = field(repr=False, default=None)
    _eval_batch: Callable[[np.ndarray], np.ndarray] | None = field(repr=False, default=None)

    def _check_domain(self, s: float) -> None:
        hi = math.inf if self.s_max is None else self.s_max
        if not (self.s_min - 1e-12 <= s <= hi + 1e-12):
            raise ValueError(f"parameter {s} outside domain [{self.s_min}, {hi}]")

    def hamiltonian(self, s: float) -> np.ndarray:
        """H(s) as a fresh complex array."""
        self._check_domain(s)
        return np.array(self._eval(s), dtype=complex)

    def hamiltonian_deriv(self, s: float) -> np.ndarray:
        """dH/ds, analytic when the family provides it, else central FD."""
        self._check_domain(s)
        if self._eval_deriv is not None:
            return np.array(self._eval_deriv(s), dtype=complex)
        h = _FD_STEP * max(1.0, abs(s))
        lo = max(s - h, self.s_min)
        hi = s + h if self.s_max is None else min(s + h, self.s_max)
        return (np.asarray(self._eval(hi)) - np.asarray(self._eval(lo))) / (hi - lo)

    def hamiltonian_batch(self, s_values: np.ndarray) -> np.ndarray:
        """H at many parameters, shape (n, dim, dim). Vectorized when possible."""
        s_values = np.asarray(s_values, dtype=float)
        if s_values.size:
            self._check_domain(float(s_values.min()))
            self._check_domain(float(s_values.max()))
        if self._eval_batch is not None:
            return self._eval_batch(s_values)
        out = np.empty((len(s_values), self.dim, self.dim), dtype=complex)
        for i, s in enumerate(s_values):
            out[i] = self._eval(s)
        return out


# ============================================================
# Built-in families
# ============================================================

def three_level_path(gap: float = 1.0, tau: float = 1.0) -> HamiltonianPath:
    """Constant-gap 3x3 benchmark family.

    H(s) = R(theta) diag(0, gap, 2*gap*(1+s)) R(theta)^T with
    theta(s) = s + s^2/2 and R a rotation in the (1,3) coordinate plane.
    The lowest two levels are pinned at 0 and ``gap`` for every s, the top
    level climbs linearly, and the ground-state tangent norm is 1 + s.
    ``tau`` sets the clock of the family's natural traversal s = t/tau and
    is kept as metadata for schedule builders.

    Parameters
    ----------
    gap : float
        Spectral gap, constant along the whole path. Must be nonnegative;
        zero builds the degenerate family so spectral probes can flag it.
    tau : float
        Natural time constant of the traversal. Must be positive.
    """
    if gap < 0 or tau <= 0:
        raise PathSpecError(f"need gap >= 0 and tau > 0, got {gap}, {tau}")

    def evaluate(s: float) -> np.ndarray:
        return _three_level_batch(np.array([s]), gap)[0]

    def derivative(s: float) -> np.ndarray:
        theta = s + 0.5 * s * s
        c, sn = math.cos(theta), math.sin(theta)
        rot = np.array([[c, 0.0, sn], [0.0, 1.0, 0.0], [-sn, 0.0, c]])
        levels = np.diag([0.0, gap, 2.0 * gap * (1.0 + s)])
        gen = np.array([[0.0, 0.0, 1.0], [0.0, 0.0, 0.0], [-1.0, 0.0, 0.0]])
        core = rot @ levels @ rot.T
        swirl = (1.0 + s) * (gen @ core - core @ gen)
        climb = 2.0 * gap * np.outer(rot[:, 2], rot[:, 2])
        return (swirl + climb).astype(complex)

    def batch(s: np.ndarray) -> np.ndarray:
        return _three_level_batch(s, gap)

    return HamiltonianPath(
        dim=3, s_min=0.0, s_max=None, kind="three_level",
        params={"gap": gap, "tau": tau, "natural_tau": tau},
        _eval=evaluate, _eval_deriv=derivative, _eval_batch=batch,
    )


def _three_level_batch(s: np.ndarray, gap: float) -> np.ndarray:
    theta = s + 0.5 * s * s
    c, sn = np.cos(theta), np.sin(theta)
    top = 2.0 * gap * (1.0 + s)
    out = np.zeros((len(s), 3, 3), dtype=complex)
    out[:, 0, 0] = top * sn * sn
    out[:, 0, 2] = top * c * sn
    out[:, 2, 0] = out[:, 0, 2]
    out[:, 2, 2] = top * c * c
    out[:, 1, 1] = gap
    # middle level mixes in through the rotation's fixed axis only; the
    # gap-energy eigenvector is the rotation axis itself
    return out


def rotating_two_level_path(gap: float = 1.0, tau: float = 2.0 * math.pi) -> HamiltonianPath:
    """Two-level family whose eigenbasis rotates uniformly with period tau.

    H(t) = (gap/2) * (cos(2 pi t / tau) sigma_z + sin(2 pi t / tau) sigma_x).
    The parameter is the family's own clock t; traversing [0, n*tau] covers
    n full cycles. Norm and spectral gap are constant. A zero gap is
    accepted (the family is then degenerate everywhere) so that validation
    probes, not the constructor, report the degeneracy.
    """
    if gap < 0 or tau <= 0:
        raise PathSpecError(f"need gap >= 0 and tau > 0, got {gap}, {tau}")
    w = 2.0 * math.pi / tau

    def evaluate(t: float) -> np.ndarray:
        angle = w * t
        return 0.5 * gap * np.array(
            [[math.cos(angle), math.sin(angle)], [math.sin(angle), -math.cos(angle)]],
            dtype=complex,
        )

    def derivative(t: float) -> np.ndarray:
        angle = w * t
        return 0.5 * gap * w * np.array(
            [[-math.sin(angle), math.cos(angle)], [math.cos(angle), math.sin(angle)]],
            dtype=complex,
        )

    def batch(t: np.ndarray) -> np.ndarray:
        angle = w * t
        out = np.empty((len(t), 2, 2), dtype=complex)
        c, sn = 0.5 * gap * np.cos(angle), 0.5 * gap * np.sin(angle)
        out[:, 0, 0] = c
        out[:, 1, 1] = -c
        out[:, 0, 1] = sn
        out[:, 1, 0] = sn
        return out

    # the parameter is already the family's clock, so the unslowed natural
    # traversal is s(t) = t regardless of the rotation period
    return HamiltonianPath(
        dim=2, s_min=0.0, s_max=None, kind="rotating_two_level",
        params={"gap": gap, "tau": tau, "natural_tau": 1.0},
        _eval=evaluate, _eval_deriv=derivative, _eval_batch=batch,
    )


# ============================================================
# Composite constructions
# ============================================================

def direct_sum_path(*parts: HamiltonianPath) -> HamiltonianPath:
    """Block-diagonal join of paths on the intersection of their domains."""
    if len(parts) < 2:
        raise PathSpecError("direct sum needs at least two parts")
    dim = sum(p.dim for p in parts)
    if dim > MAX_DENSE_DIM:
        raise PathSpecError(f"direct sum dimension {dim} exceeds {MAX_DENSE_DIM}")
    s_min = max(p.s_min for p in parts)
    bounded = [p.s_max for p in parts if p.s_max is not None]
    s_max = min(bounded) if bounded else None
    if s_max is not None and s_max <= s_min:
        raise PathSpecError("parts have no common parameter interval")

    def evaluate(s: float) -> np.ndarray:
        out = np.zeros((dim, dim), dtype=complex)
        at = 0
        for p in parts:
            out[at : at + p.dim, at : at + p.dim] = p.hamiltonian(s)
            at += p.dim
        return out

    def derivative(s: float) -> np.ndarray:
        out = np.zeros((dim, dim), dtype=complex)
        at = 0
        for p in parts:
            out[at : at + p.dim, at : at + p.dim] = p.hamiltonian_deriv(s)
            at += p.dim
        return out

    def batch(s: np.ndarray) -> np.ndarray:
        out = np.zeros((len(s), dim, dim), dtype=complex)
        at = 0
        for p in parts:
            out[:, at : at + p.dim, at : at + p.dim] = p.hamiltonian_batch(s)
            at += p.dim
        return out

    return HamiltonianPath(
        dim=dim, s_min=s_min, s_max=s_max, kind="direct_sum",
        params={"parts": [p.params | {"kind": p.kind} for p in parts]},
        _eval=evaluate, _eval_deriv=derivative, _eval_batch=batch,
    )


def constant_block_path(energies: Sequence[float]) -> HamiltonianPath:
    """Static diagonal family, useful as a pinning block in direct sums."""
    levels = np.asarray(energies, dtype=float)
    if levels.ndim != 1 or len(levels) < 1:
        raise PathSpecError("energies must be a nonempty 1-d sequence")
    if len(levels) > MAX_DENSE_DIM:
        raise PathSpecError(f"dimension {len(levels)} exceeds {MAX_DENSE_DIM}")
    mat = np.diag(levels).astype(complex)
    zero = np.zeros_like(mat)
    d = len(levels)
    return HamiltonianPath(
        dim=d, s_min=-math.inf, s_max=None, kind="constant_block",
        params={"energies": [float(e) for e in levels]},
        _eval=lambda s: mat,
        _eval_deriv=lambda s: zero,
        _eval_batch=lambda s: np.broadcast_to(mat, (len(s), d, d)).copy(),
    )


def sampled_path(s_nodes: Sequence[float], samples: np.ndarray) -> HamiltonianPath:
    """Entrywise cubic-spline interpolation through Hermitian samples.

    Parameters
    ----------
    s_nodes : sequence of float
        Strictly increasing parameter values, at least 4 of them.
    samples : array (n, d, d)
        Hermitian matrices at the nodes. Hermiticity is enforced on
        evaluation by symmetrizing the interpolant.
    """
    s_nodes = np.asarray(s_nodes, dtype=float)
    samples = np.asarray(samples, dtype=complex)
    if s_nodes.ndim != 1 or len(s_nodes) < 4:
        raise PathSpecError("sampled path needs at least 4 nodes")
    if np.any(np.diff(s_nodes) <= 0):
        raise PathSpecError("sample parameters must be strictly increasing")
    if samples.shape != (len(s_nodes), samples.shape[1], samples.shape[1]):
        raise PathSpecError(f"samples shape {samples.shape} does not match nodes")
    d = samples.shape[1]
    if d > MAX_DENSE_DIM:
        raise PathSpecError(f"dimension {d} exceeds {MAX_DENSE_DIM}")
    herm_defect = np.abs(samples - samples.conj().transpose(0, 2, 1)).max()
    if herm_defect > 1e-9 * max(1.0, np.abs(samples).max()):
        raise PathSpecError(f"samples are not Hermitian (defect {herm_defect:.3e})")

    spline = CubicSpline(s_nodes, samples, axis=0)
    dspline = spline.derivative()

    def evaluate(s: float) -> np.ndarray:
        m = spline(s)
        return 0.5 * (m + m.conj().T)

    def derivative(s: float) -> np.ndarray:
        m = dspline(s)
        return 0.5 * (m + m.conj().T)

    def batch(s: np.ndarray) -> np.ndarray:
        m = spline(s)
        return 0.5 * (m + m.conj().transpose(0, 2, 1))

    return HamiltonianPath(
        dim=d, s_min=float(s_nodes[0]), s_max=float(s_nodes[-1]), kind="sampled",
        params={"s": s_nodes.tolist(), "n_nodes": len(s_nodes)},
        _eval=evaluate, _eval_deriv=derivative, _eval_batch=batch,
    )


def reparameterize(
    path: HamiltonianPath,
    fn: Callable[[float], float],
    dfn: Callable[[float], float],
    u_min: float,
    u_max: float | None,
) -> HamiltonianPath:
    """Same matrix family viewed through a monotone parameter change s = fn(u)."""

    def evaluate(u: float) -> np.ndarray:
        return path.hamiltonian(fn(u))

    def derivative(u: float) -> np.ndarray:
        return path.hamiltonian_deriv(fn(u)) * dfn(u)

    def batch(u: np.ndarray) -> np.ndarray:
        return path.hamiltonian_batch(np.array([fn(x) for x in u]))

    return HamiltonianPath(
        dim=path.dim, s_min=u_min, s_max=u_max, kind="reparameterized",
        params={"base": path.params | {"kind": path.kind}},
        _eval=evaluate, _eval_deriv=derivative, _eval_batch=batch,
    )


# ============================================================
# JSON / CSV descriptions
# ============================================================

_SPEC_KINDS = ("three_level", "rotating_two_level", "direct_sum", "sampled", "rescaled")


def _require_params(params: dict, allowed: set[str], kind: str) -> None:
    unknown = set(params) - allowed
    if unknown:
        raise PathSpecError(f"unknown parameter(s) {sorted(unknown)} for kind '{kind}'")


def path_from_spec(spec: dict) -> HamiltonianPath:
    """Build a path from its JSON description {"kind": ..., "params": {...}}."""
    if not isinstance(spec, dict):
        raise PathSpecError(f"path spec must be an object, got {type(spec).__name__}")
    unknown = set(spec) - {"kind", "params"}
    if unknown:
        raise PathSpecError(f"unknown path spec field(s) {sorted(unknown)}")
    kind = spec.get("kind")
    params = spec.get("params", {})
    if not isinstance(params, dict):
        raise PathSpecError("path spec 'params' must be an object")

    if kind == "three_level":
        _require_params(params, {"gap", "tau"}, kind)
        return three_level_path(**params)
    if kind == "rotating_two_level":
        _require_params(params, {"gap", "tau"}, kind)
        return rotating_two_level_path(**params)
    if kind == "direct_sum":
        _require_params(params, {"parts"}, kind)
        parts = params.get("parts")
        if not isinstance(parts, list) or len(parts) < 2:
            raise PathSpecError("direct_sum needs a list of at least two part specs")
        return direct_sum_path(*[path_from_spec(p) for p in parts])
    if kind == "sampled":
        _require_params(params, {"s", "entries", "csv"}, kind)
        if "csv" in params:
            if "s" in params or "entries" in params:
                raise PathSpecError("sampled spec takes either inline data or a csv, not both")
            return sampled_path_from_csv(params["csv"])
        return sampled_path(params["s"], _entries_to_matrices(params["entries"]))
    if kind == "rescaled":
        _require_params(params, {"base", "arc_span", "factor", "n_nodes"}, kind)
        from . import nogo  # deferred: nogo builds on this module

        return nogo.rescaled_path_from_spec(params)
    raise PathSpecError(f"unknown path kind '{kind}'; expected one of {_SPEC_KINDS}")


def _entries_to_matrices(rows: Sequence[Sequence[float]]) -> np.ndarray:
    """Decode row-major re/im interleaved flat rows into (n, d, d) matrices."""
    rows = [list(map(float, r)) for r in rows]
    if not rows:
        raise PathSpecError("no sample rows")
    width = len(rows[0])
    d = math.isqrt(width // 2)
    if 2 * d * d != width:
        raise PathSpecError(f"row width {width} is not 2*d^2 for integer d")
    out = np.empty((len(rows), d, d), dtype=complex)
    for i, row in enumerate(rows):
        if len(row) != width:
            raise PathSpecError(f"row {i} has width {len(row)}, expected {width}")
        flat = np.asarray(row).reshape(d * d, 2)
        out[i] = (flat[:, 0] + 1j * flat[:, 1]).reshape(d, d)
    return out


def sampled_path_from_csv(filename: str) -> HamiltonianPath:
    """Load a sampled path from CSV: header, then rows `s, re00, im00, re01, ...`."""
    with open(filename, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise PathSpecError(f"{filename}: empty file")
        rows = [row for row in reader if row]
    if not rows:
        raise PathSpecError(f"{filename}: no data rows")
    s_nodes = [float(r[0]) for r in rows]
    return sampled_path(s_nodes, _entries_to_matrices([r[1:] for r in rows]))


def write_sampled_csv(filename: str, s_nodes: Sequence[float], samples: np.ndarray) -> None:
    samples = np.asarray(samples, dtype=complex)
    d = samples.shape[1]
    header = ["s"]
    for i in range(d):
        for j in range(d):
            header += [f"re{i}{j}", f"im{i}{j}"]
    with open(filename, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for s, mat in zip(s_nodes, samples):
            flat = mat.reshape(-1)
            row = [repr(float(s))]
            for z in flat:
                row += [repr(float(z.real)), repr(float(z.imag))]
            writer.writerow(row)


def degeneracy_probe(path: HamiltonianPath, s_lo: float, s_hi: float, n: int = 16) -> list[str]:
    """Sample the ground gap on a grid; report near-degeneracies as diagnostics."""
    out = []
    for s in np.linspace(s_lo, s_hi, n):
        h = path.hamiltonian(float(s))
        evals = np.linalg.eigvalsh(h)
        scale = max(1.0, float(np.abs(evals).max()))
        if evals[1] - evals[0] <= 1e-10 * scale:
            out.append(
                f"degenerate spectrum at s={float(s):.6g}: "
                f"ground gap {evals[1] - evals[0]:.3e}"
            )
    return out
