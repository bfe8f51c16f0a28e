# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled lattice scan for the projected image-dimension test.

Each lattice point ``w`` defines ``E(w) = sum_m w_m A_m`` with ``A_m`` the
(r x p) evaluations of basis difference ``m``. The caller passes the
projected evaluations ``EV[m] = P A_m`` and the Gram of traces
``TU[a, b] = tr(A_a A_b^T)``. The image dimension is

* 0 if ``||P E||_F < tau ||E||_F``,
* otherwise the count of eigenvalues of ``P E E^T P`` at least ``tau**2``
  times the largest and at least ``floor * ||w||^2`` (0 if there are none).

``floor`` is an absolute noise floor for estimated scores; pass 0 for exact ones.

``first_rank_one`` skips the eigensolve when a 2 x 2 principal block already
certifies a second eigenvalue above threshold: by interlacing its smaller
eigenvalue bounds the second one of the full Gram from below, and the trace
bounds the largest from above.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt
from libc.stdlib cimport malloc, free
from scipy.linalg.cython_lapack cimport dsyev

cnp.import_array()


cdef int _combine(const double* ev, const double* tu, const double* w, int n, int r, int p,
                  double tau2, double floor, double* m, double* sp_out, double* ww_out) noexcept nogil:
    """Fill ``m = sum_a w_a EV[a]``; returns 0 when the prefilter rules the point out, else 1."""
    cdef int a, b, i, rp = r * p
    cdef double su = 0.0, sp = 0.0, ww = 0.0, wa
    for a in range(n):
        wa = w[a]
        ww += wa * wa
        for b in range(n):
            su += wa * w[b] * tu[a * n + b]
    if su <= 0.0:
        return 0
    for i in range(rp):
        m[i] = 0.0
    for a in range(n):
        wa = w[a]
        if wa == 0.0:
            continue
        for i in range(rp):
            m[i] += wa * ev[a * rp + i]
    for i in range(rp):
        sp += m[i] * m[i]
    sp_out[0] = sp
    ww_out[0] = ww
    if sp <= tau2 * su or sp < floor * ww:
        return 0
    return 1


cdef bint _two_certified(const double* m, int r, int p, double sp, double thr_floor,
                         double tau2) noexcept nogil:
    """True when the block on the two largest diagonal entries proves dimension >= 2."""
    cdef int i, k, i1 = -1, i2 = -1
    cdef double d, d1 = -1.0, d2 = -1.0, off = 0.0, half, lam2
    if r < 2:
        return False
    for i in range(r):
        d = 0.0
        for k in range(p):
            d += m[i * p + k] * m[i * p + k]
        if d > d1:
            d2, i2 = d1, i1
            d1, i1 = d, i
        elif d > d2:
            d2, i2 = d, i
    for k in range(p):
        off += m[i1 * p + k] * m[i2 * p + k]
    half = 0.5 * (d1 - d2)
    lam2 = 0.5 * (d1 + d2) - sqrt(half * half + off * off)
    return lam2 >= tau2 * sp and lam2 >= thr_floor


cdef int _dim_one(const double* ev, const double* tu, const double* w, int n, int r, int p,
                  double tau2, double floor, bint rank_one_only,
                  double* m, double* g, double* eig, double* work, int lwork) noexcept nogil:
    cdef int i, j, k, info = 0, count
    cdef double c, sp = 0.0, ww = 0.0, top, thr
    cdef char jobz = b'N'
    cdef char uplo = b'L'
    if not _combine(ev, tu, w, n, r, p, tau2, floor, m, &sp, &ww):
        return 0
    if rank_one_only and _two_certified(m, r, p, sp, floor * ww, tau2):
        return 2
    # lower triangle of M M^T in column-major order is the upper one in row-major
    for i in range(r):
        for j in range(i + 1):
            c = 0.0
            for k in range(p):
                c += m[i * p + k] * m[j * p + k]
            g[j * r + i] = c
    dsyev(&jobz, &uplo, &r, g, &r, eig, work, &lwork, &info)
    if info != 0:
        return -1
    top = eig[r - 1]
    if top <= 0.0 or top < floor * ww:
        return 0
    thr = tau2 * top
    if floor * ww > thr:
        thr = floor * ww
    count = 0
    for i in range(r):
        if eig[i] >= thr:
            count += 1
    return count


cdef class _Scratch:
    cdef double* m
    cdef double* g
    cdef double* eig
    cdef double* work
    cdef int lwork

    def __cinit__(self, int r, int p):
        self.lwork = max(1, 3 * r)
        self.m = <double*> malloc(max(1, r * p) * sizeof(double))
        self.g = <double*> malloc(max(1, r * r) * sizeof(double))
        self.eig = <double*> malloc(max(1, r) * sizeof(double))
        self.work = <double*> malloc(self.lwork * sizeof(double))
        if not (self.m and self.g and self.eig and self.work):
            raise MemoryError()

    def __dealloc__(self):
        free(self.m)
        free(self.g)
        free(self.eig)
        free(self.work)


def _check(ev, tu, points):
    n = ev.shape[0]
    if tu.shape[0] != n or tu.shape[1] != n or points.shape[1] != n:
        raise ValueError("ev, tu and points disagree on the basis size")


def lattice_dims(const double[:, :, ::1] ev, const double[:, ::1] tu, const double[:, ::1] points,
                 double tau, double floor=0.0):
    """Image dimension for every row of ``points``."""
    _check(ev, tu, points)
    cdef Py_ssize_t L = points.shape[0], k
    cdef int n = ev.shape[0], r = ev.shape[1], p = ev.shape[2]
    cdef double tau2 = tau * tau
    cdef _Scratch s = _Scratch(r, p)
    out = np.zeros(L, dtype=np.int64)
    if L == 0 or r == 0 or p == 0:
        return out
    cdef long long[::1] res = out
    with nogil:
        for k in range(L):
            res[k] = _dim_one(&ev[0, 0, 0], &tu[0, 0], &points[k, 0], n, r, p, tau2, floor, False,
                              s.m, s.g, s.eig, s.work, s.lwork)
    return out


def first_rank_one(const double[:, :, ::1] ev, const double[:, ::1] tu, const double[:, ::1] points,
                   double tau, double floor=0.0):
    """Index of the first row of ``points`` with image dimension 1, or -1."""
    _check(ev, tu, points)
    cdef Py_ssize_t L = points.shape[0], k, hit = -1
    cdef int n = ev.shape[0], r = ev.shape[1], p = ev.shape[2]
    cdef double tau2 = tau * tau
    cdef _Scratch s = _Scratch(r, p)
    if L == 0 or r == 0 or p == 0:
        return -1
    with nogil:
        for k in range(L):
            if _dim_one(&ev[0, 0, 0], &tu[0, 0], &points[k, 0], n, r, p, tau2, floor, True,
                        s.m, s.g, s.eig, s.work, s.lwork) == 1:
                hit = k
                break
    return hit
