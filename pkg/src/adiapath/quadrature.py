"""
Adaptive quadrature shared by the geometry and cost modules
===========================================================

A small, deterministic adaptive Simpson rule. scipy.integrate.quad would
work, but the experiment artifacts must be reproducible bit-for-bit across
runs and the refinement decisions easy to audit, so the recursion is spelled
out here and cross-checked against scipy in the tests.
"""

from __future__ import annotations

import math
from typing import Callable


class QuadratureError(RuntimeError):
    """Raised when the recursion depth cap is hit before convergence."""


def adaptive_simpson(
    f: Callable[[float], float],
    a: float,
    b: float,
    rel_tol: float = 1e-8,
    abs_tol: float = 0.0,
    max_depth: int = 30,
) -> float:
    """Integrate ``f`` over [a, b] by adaptive Simpson with Richardson update.

    Tolerances are applied per subinterval against the local Richardson
    error estimate |S_fine - S_coarse| / 15, which keeps the global error
    well below the requested tolerance for smooth integrands.
    """
    if not b > a:
        if b == a:
            return 0.0
        raise ValueError(f"empty or reversed interval [{a}, {b}]")
    fa, fb = f(a), f(b)
    m = 0.5 * (a + b)
    fm = f(m)
    whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb)
    return _refine(f, a, b, fa, fm, fb, whole, rel_tol, abs_tol, max_depth)


def _refine(f, a, b, fa, fm, fb, whole, rel_tol, abs_tol, depth):
    m = 0.5 * (a + b)
    lm, rm = 0.5 * (a + m), 0.5 * (m + b)
    flm, frm = f(lm), f(rm)
    left = (m - a) / 6.0 * (fa + 4.0 * flm + fm)
    right = (b - m) / 6.0 * (fm + 4.0 * frm + fb)
    delta = left + right - whole
    tol = max(abs_tol, rel_tol * abs(left + right))
    if abs(delta) <= 15.0 * tol or abs(delta) == 0.0:
        return left + right + delta / 15.0
    if depth <= 0:
        raise QuadratureError(
            f"Simpson recursion did not converge on [{a}, {b}] "
            f"(residual {abs(delta) / 15.0:.3e}, tolerance {tol:.3e})"
        )
    return _refine(f, a, m, fa, flm, fm, left, rel_tol, abs_tol / 2.0, depth - 1) + _refine(
        f, m, b, fm, frm, fb, right, rel_tol, abs_tol / 2.0, depth - 1
    )


def cumulative_simpson(f: Callable[[float], float], grid) -> list[float]:
    """Cumulative integral of ``f`` at the points of an increasing grid.

    Each cell is integrated with a single three-point Simpson rule, so the
    grid must already resolve the integrand. Returns values aligned with
    ``grid``, starting at 0.
    """
    out = [0.0]
    total = 0.0
    for a, b in zip(grid[:-1], grid[1:]):
        m = 0.5 * (a + b)
        total += (b - a) / 6.0 * (f(a) + 4.0 * f(m) + f(b))
        out.append(total)
    return out


def loglog_least_squares(xs, ys) -> tuple[float, float]:
    """Slope and intercept of a least-squares line through (log x, log y)."""
    n = len(xs)
    lx = [math.log(x) for x in xs]
    ly = [math.log(y) for y in ys]
    mx = sum(lx) / n
    my = sum(ly) / n
    sxx = sum((x - mx) ** 2 for x in lx)
    sxy = sum((x - mx) * (y - my) for x, y in zip(lx, ly))
    slope = sxy / sxx
    return slope, my - slope * mx
