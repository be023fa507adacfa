# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled propagation kernels.

Sequential step loop in C: closed-form 2x2 rotations, LAPACK zheevd for
larger blocks (decomposed once per step, applied per column). Mirrors the
contract of _pure exactly; _backend picks whichever is available.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport cos, sin, sqrt
from libc.stdlib cimport free, malloc
from scipy.linalg.cython_lapack cimport zheevd

cnp.import_array()

MAX_DENSE = 64


cdef inline void _step2(double complex* psi, double complex g00,
                        double complex g01, double complex g11,
                        double h) noexcept nogil:
    cdef double tc = 0.5 * (g00.real + g11.real)
    cdef double z = 0.5 * (g00.real - g11.real)
    cdef double r = sqrt(z * z + g01.real * g01.real + g01.imag * g01.imag)
    cdef double hr = h * r
    cdef double cosf = cos(hr)
    cdef double sfac
    if hr > 1e-8 or hr < -1e-8:
        sfac = sin(hr) / r
    else:
        sfac = h * (1.0 - hr * hr / 6.0)
    cdef double complex phase = cos(h * tc) - 1j * sin(h * tc)
    cdef double complex u00 = phase * (cosf - 1j * sfac * z)
    cdef double complex u01 = phase * (-1j * sfac * g01)
    cdef double complex u10 = phase * (-1j * sfac * g01.conjugate())
    cdef double complex u11 = phase * (cosf + 1j * sfac * z)
    cdef double complex p0 = u00 * psi[0] + u01 * psi[1]
    cdef double complex p1 = u10 * psi[0] + u11 * psi[1]
    psi[0] = p0
    psi[1] = p1


cdef inline int _decompose(double complex* a, double* w, int d,
                           double complex* work, int lwork, double* rwork,
                           int lrwork, int* iwork, int liwork) noexcept nogil:
    # a holds the generator row-major; LAPACK sees its conjugate, so row k
    # of a on exit is the k-th eigenvector conjugated.
    cdef int info = 0
    cdef char jobz = b'V'
    cdef char uplo = b'L'
    zheevd(&jobz, &uplo, &d, a, &d, w, work, &lwork, rwork, &lrwork,
           iwork, &liwork, &info)
    return info


cdef inline void _apply_dense(double complex* vec, double complex* a,
                              double* w, double h, int d,
                              double complex* coef) noexcept nogil:
    # vec <- V exp(-i*h*W) V^H vec, with conj(V^T) stored row-wise in a
    cdef int i, k
    cdef double complex acc, ph
    for k in range(d):
        acc = 0
        for i in range(d):
            acc = acc + a[k * d + i] * vec[i]
        ph = cos(h * w[k]) - 1j * sin(h * w[k])
        coef[k] = ph * acc
    for i in range(d):
        acc = 0
        for k in range(d):
            acc = acc + a[k * d + i].conjugate() * coef[k]
        vec[i] = acc


cdef class _Workspace:
    cdef double complex* a
    cdef double complex* coef
    cdef double complex* col
    cdef double complex* work
    cdef double* w
    cdef double* rwork
    cdef int* iwork
    cdef int lwork, lrwork, liwork

    def __cinit__(self, int d):
        self.lwork = 2 * d + d * d
        self.lrwork = 1 + 5 * d + 2 * d * d
        self.liwork = 3 + 5 * d
        self.a = <double complex*> malloc(d * d * sizeof(double complex))
        self.coef = <double complex*> malloc(d * sizeof(double complex))
        self.col = <double complex*> malloc(d * sizeof(double complex))
        self.work = <double complex*> malloc(self.lwork * sizeof(double complex))
        self.w = <double*> malloc(d * sizeof(double))
        self.rwork = <double*> malloc(self.lrwork * sizeof(double))
        self.iwork = <int*> malloc(self.liwork * sizeof(int))
        if not (self.a and self.coef and self.col and self.work
                and self.w and self.rwork and self.iwork):
            raise MemoryError()

    def __dealloc__(self):
        free(self.a); free(self.coef); free(self.col); free(self.work)
        free(self.w); free(self.rwork); free(self.iwork)


def propagate(psi, gens, h, sample_stride=0):
    """Evolve a state through all steps; optionally record every stride-th state.

    Returns (psi_final, samples) where samples[m] is the state after
    (m+1)*sample_stride steps; samples is empty for sample_stride <= 0.
    """
    cdef cnp.ndarray[cnp.complex128_t, ndim=3, mode="c"] g = \
        np.ascontiguousarray(gens, dtype=np.complex128)
    cdef cnp.ndarray[cnp.float64_t, ndim=1, mode="c"] hh = \
        np.ascontiguousarray(h, dtype=np.float64)
    cdef cnp.ndarray[cnp.complex128_t, ndim=1, mode="c"] p = \
        np.array(psi, dtype=np.complex128, copy=True)
    cdef Py_ssize_t n = g.shape[0]
    cdef int d = <int> g.shape[1]
    if d > MAX_DENSE:
        raise ValueError(f"compiled kernel handles dim <= {MAX_DENSE}, got {d}")
    if g.shape[2] != d or p.shape[0] != d or hh.shape[0] != n:
        raise ValueError("inconsistent kernel argument shapes")

    cdef Py_ssize_t stride = sample_stride if sample_stride > 0 else 0
    cdef Py_ssize_t n_samp = n // stride if stride else 0
    cdef cnp.ndarray[cnp.complex128_t, ndim=2, mode="c"] samples = \
        np.empty((n_samp, d), dtype=np.complex128)

    cdef _Workspace ws = None
    if d != 2 and n > 0:
        ws = _Workspace(d)

    cdef Py_ssize_t j, m, i
    cdef int info = 0
    with nogil:
        for j in range(n):
            if d == 2:
                _step2(&p[0], g[j, 0, 0], g[j, 0, 1], g[j, 1, 1], hh[j])
            else:
                for i in range(d * d):
                    ws.a[i] = (<double complex*> &g[j, 0, 0])[i]
                info = _decompose(ws.a, ws.w, d, ws.work, ws.lwork,
                                  ws.rwork, ws.lrwork, ws.iwork, ws.liwork)
                if info != 0:
                    break
                _apply_dense(&p[0], ws.a, ws.w, hh[j], d, ws.coef)
            if stride and (j + 1) % stride == 0:
                m = (j + 1) // stride - 1
                for i in range(d):
                    samples[m, i] = p[i]

    if info != 0:
        raise RuntimeError(f"zheevd failed with info={info}")
    return p, samples


def propagate_unitary(u, gens, h):
    """Left-multiply a unitary by the full time-ordered product."""
    cdef cnp.ndarray[cnp.complex128_t, ndim=3, mode="c"] g = \
        np.ascontiguousarray(gens, dtype=np.complex128)
    cdef cnp.ndarray[cnp.float64_t, ndim=1, mode="c"] hh = \
        np.ascontiguousarray(h, dtype=np.float64)
    cdef cnp.ndarray[cnp.complex128_t, ndim=2, mode="c"] uu = \
        np.array(u, dtype=np.complex128, copy=True)
    cdef Py_ssize_t n = g.shape[0]
    cdef int d = <int> g.shape[1]
    if d > MAX_DENSE:
        raise ValueError(f"compiled kernel handles dim <= {MAX_DENSE}, got {d}")
    if g.shape[2] != d or uu.shape[0] != d or uu.shape[1] != d or hh.shape[0] != n:
        raise ValueError("inconsistent kernel argument shapes")
    if n == 0:
        return uu

    cdef _Workspace ws = None
    if d != 2:
        ws = _Workspace(d)

    cdef Py_ssize_t j, c
    cdef int info = 0, i
    cdef double complex pair[2]
    with nogil:
        for j in range(n):
            if d == 2:
                for c in range(2):
                    pair[0] = uu[0, c]
                    pair[1] = uu[1, c]
                    _step2(pair, g[j, 0, 0], g[j, 0, 1], g[j, 1, 1], hh[j])
                    uu[0, c] = pair[0]
                    uu[1, c] = pair[1]
            else:
                for i in range(d * d):
                    ws.a[i] = (<double complex*> &g[j, 0, 0])[i]
                info = _decompose(ws.a, ws.w, d, ws.work, ws.lwork,
                                  ws.rwork, ws.lrwork, ws.iwork, ws.liwork)
                if info != 0:
                    break
                for c in range(d):
                    for i in range(d):
                        ws.col[i] = uu[i, c]
                    _apply_dense(ws.col, ws.a, ws.w, hh[j], d, ws.coef)
                    for i in range(d):
                        uu[i, c] = ws.col[i]

    if info != 0:
        raise RuntimeError(f"zheevd failed with info={info}")
    return uu
