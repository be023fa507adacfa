"""Kernel backend selection.

Prefers the compiled extension; falls back to the NumPy implementation when
the extension is missing or ADIAPATH_PURE=1 is set. All callers go through
propagate/propagate_unitary here, which also normalizes argument layout.
"""

from __future__ import annotations

import os

import numpy as np

from . import _pure

if os.environ.get("ADIAPATH_PURE") == "1":
    _compiled = None
else:
    try:
        from . import _kernels as _compiled
    except ImportError:
        _compiled = None

BACKEND = "compiled" if _compiled is not None else "pure"


def _normalize(gens, h):
    gens = np.ascontiguousarray(gens, dtype=np.complex128)
    h = np.ascontiguousarray(h, dtype=np.float64)
    if gens.ndim != 3 or gens.shape[1] != gens.shape[2]:
        raise ValueError(f"generators must be (n, d, d), got {gens.shape}")
    if h.shape != (gens.shape[0],):
        raise ValueError(f"step sizes {h.shape} do not match {gens.shape[0]} steps")
    return gens, h


def propagate(psi, gens, h, sample_stride=0):
    gens, h = _normalize(gens, h)
    impl = _pure if _compiled is None or gens.shape[1] > _kernel_limit() else _compiled
    return impl.propagate(psi, gens, h, sample_stride)


def propagate_unitary(u, gens, h):
    gens, h = _normalize(gens, h)
    impl = _pure if _compiled is None or gens.shape[1] > _kernel_limit() else _compiled
    return impl.propagate_unitary(u, gens, h)


def _kernel_limit() -> int:
    return _compiled.MAX_DENSE if _compiled is not None else 0
