"""NumPy propagation kernels; fallback when the compiled extension is absent.

Same contract as the compiled module: apply exp(-i*h[j]*gens[j]) for
j = 0..n-1 in order to a state or unitary. Implemented with batched step
exponentials and a log-depth pairwise product so the step loop never runs
in Python.
"""

from __future__ import annotations

import numpy as np


def step_unitaries(gens: np.ndarray, h: np.ndarray) -> np.ndarray:
    """exp(-i*h[j]*gens[j]) for every step, shape (n, d, d)."""
    n, d = gens.shape[0], gens.shape[-1]
    if d == 2:
        # Pauli split: G = tc*I + [[z, b], [conj(b), -z]], rotation rate |(x,y,z)|
        a = gens[:, 0, 0].real
        c = gens[:, 1, 1].real
        b = gens[:, 0, 1]
        tc = 0.5 * (a + c)
        z = 0.5 * (a - c)
        r = np.sqrt(z * z + b.real * b.real + b.imag * b.imag)
        hr = h * r
        cosf = np.cos(hr)
        sfac = h * np.sinc(hr / np.pi)  # sin(h*r)/r, smooth through r = 0
        phase = np.exp(-1j * h * tc)
        us = np.empty((n, 2, 2), dtype=np.complex128)
        us[:, 0, 0] = phase * (cosf - 1j * sfac * z)
        us[:, 0, 1] = phase * (-1j * sfac * b)
        us[:, 1, 0] = phase * (-1j * sfac * b.conj())
        us[:, 1, 1] = phase * (cosf + 1j * sfac * z)
        return us
    w, v = np.linalg.eigh(gens)
    phases = np.exp(-1j * h[:, None] * w)
    return (v * phases[:, None, :]) @ np.conjugate(np.swapaxes(v, -1, -2))


def _reduce_ordered(us: np.ndarray) -> np.ndarray:
    """Time-ordered product us[-1] @ ... @ us[0] by pairwise halving."""
    while us.shape[-3] > 1:
        m = us.shape[-3]
        even = us[..., : m - (m % 2), :, :]
        pair = even[..., 1::2, :, :] @ even[..., 0::2, :, :]
        if m % 2:
            us = np.concatenate([pair, us[..., -1:, :, :]], axis=-3)
        else:
            us = pair
    return us[..., 0, :, :]


def propagate(psi, gens, h, sample_stride=0):
    """Evolve a state through all steps; optionally record every stride-th state.

    Returns (psi_final, samples) where samples[m] is the state after
    (m+1)*sample_stride steps; samples is empty for sample_stride <= 0.
    """
    gens = np.asarray(gens, dtype=np.complex128)
    h = np.asarray(h, dtype=np.float64)
    n, d = gens.shape[0], gens.shape[-1]
    psi = np.array(psi, dtype=np.complex128, copy=True)
    us = step_unitaries(gens, h)
    if sample_stride <= 0:
        if n:
            psi = _reduce_ordered(us) @ psi
        return psi, np.zeros((0, d), dtype=np.complex128)

    stride = int(sample_stride)
    groups = n // stride
    samples = np.empty((groups, d), dtype=np.complex128)
    if groups:
        block = us[: groups * stride].reshape(groups, stride, d, d)
        group_us = _reduce_ordered(block)
        for m in range(groups):
            psi = group_us[m] @ psi
            samples[m] = psi
    if n % stride:
        psi = _reduce_ordered(us[groups * stride :]) @ psi
    return psi, samples


def propagate_unitary(u, gens, h):
    """Left-multiply a unitary by the full time-ordered product."""
    gens = np.asarray(gens, dtype=np.complex128)
    h = np.asarray(h, dtype=np.float64)
    u = np.array(u, dtype=np.complex128, copy=True)
    if gens.shape[0]:
        u = _reduce_ordered(step_unitaries(gens, h)) @ u
    return u
