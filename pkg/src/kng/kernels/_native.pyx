# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled implementations of the hot kernels.

Mirrors kng.kernels.numpy_backend: same distance expansion, tie rules,
padding and lerp formulas, so the two backends agree to rounding error
(and exactly, for assignment indices on non-degenerate data).
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, INFINITY
from scipy.linalg.cython_blas cimport dgemm


def nearest_two(x, centers):
    """Two nearest centers per row; returns (s1, s2, d1, d2)."""
    cdef cnp.ndarray[double, ndim=2, mode="c"] xa = np.ascontiguousarray(x, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=2, mode="c"] ca = np.ascontiguousarray(centers, dtype=np.float64)
    cdef int n = xa.shape[0]
    cdef int k = ca.shape[0]
    cdef int d = xa.shape[1]
    if k < 2:
        raise ValueError("need at least 2 centers")
    if ca.shape[1] != d:
        raise ValueError(f"dim mismatch: x has {d}, centers have {ca.shape[1]}")

    cdef cnp.ndarray[double, ndim=2, mode="c"] g = np.empty((n, k), dtype=np.float64)
    cdef cnp.ndarray[double, ndim=1] cn = np.empty(k, dtype=np.float64)
    cdef cnp.ndarray[cnp.int64_t, ndim=1] s1 = np.empty(n, dtype=np.int64)
    cdef cnp.ndarray[cnp.int64_t, ndim=1] s2 = np.empty(n, dtype=np.int64)
    cdef cnp.ndarray[double, ndim=1] d1 = np.empty(n, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=1] d2 = np.empty(n, dtype=np.float64)

    cdef double one = 1.0, zero = 0.0
    cdef double xn, v, b1, b2, acc
    cdef Py_ssize_t i, j, t, j1, j2
    cdef double* gp
    cdef double* xp

    with nogil:
        # g (row-major n x k) = x @ centers.T, via column-major dgemm on the
        # transposed view: g^T = centers @ x^T
        dgemm("T", "N", &k, &n, &d, &one, &ca[0, 0], &d, &xa[0, 0], &d,
              &zero, &g[0, 0], &k)
        for j in range(k):
            acc = 0.0
            for t in range(d):
                acc += ca[j, t] * ca[j, t]
            cn[j] = acc
        for i in range(n):
            xp = &xa[i, 0]
            xn = 0.0
            for t in range(d):
                xn += xp[t] * xp[t]
            gp = &g[i, 0]
            b1 = INFINITY
            b2 = INFINITY
            j1 = -1
            j2 = -1
            for j in range(k):
                v = xn + cn[j] - 2.0 * gp[j]
                if v < 0.0:
                    v = 0.0
                if v < b1:
                    b2 = b1
                    j2 = j1
                    b1 = v
                    j1 = j
                elif v < b2:
                    b2 = v
                    j2 = j
            s1[i] = j1
            s2[i] = j2
            d1[i] = sqrt(b1)
            d2[i] = sqrt(b2)
    return s1, s2, d1, d2


def quad_form(diffs, precision):
    """Row-wise quadratic form diffs[i] @ precision @ diffs[i]."""
    cdef cnp.ndarray[double, ndim=2, mode="c"] r = np.ascontiguousarray(diffs, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=2, mode="c"] p = np.ascontiguousarray(precision, dtype=np.float64)
    cdef int n = r.shape[0]
    cdef int d = r.shape[1]
    if p.shape[0] != d or p.shape[1] != d:
        raise ValueError("precision shape mismatch")
    cdef cnp.ndarray[double, ndim=1] q = np.empty(n, dtype=np.float64)
    if n == 0:
        return q
    cdef cnp.ndarray[double, ndim=2, mode="c"] y = np.empty((n, d), dtype=np.float64)
    cdef double one = 1.0, zero = 0.0
    cdef Py_ssize_t i, t
    cdef double acc
    cdef double* rp
    cdef double* yp
    with nogil:
        # y (row-major n x d) = r @ p; in column-major terms y^T = p^T @ r^T,
        # and the column-major views of the row-major buffers are exactly that
        dgemm("N", "N", &d, &n, &d, &one, &p[0, 0], &d, &r[0, 0], &d,
              &zero, &y[0, 0], &d)
        for i in range(n):
            rp = &r[i, 0]
            yp = &y[i, 0]
            acc = 0.0
            for t in range(d):
                acc += rp[t] * yp[t]
            q[i] = acc
    return q


cdef inline Py_ssize_t _reflect(Py_ssize_t p, Py_ssize_t n) nogil:
    # half-sample symmetric extension, repeated until in range
    while p < 0 or p >= n:
        if p < 0:
            p = -p - 1
        if p >= n:
            p = 2 * n - 1 - p
    return p


def gaussian_blur_2d(m, kernel):
    """Separable 2-d correlation with half-sample symmetric padding."""
    cdef cnp.ndarray[double, ndim=2, mode="c"] a = np.ascontiguousarray(m, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=1] kern = np.ascontiguousarray(kernel, dtype=np.float64)
    cdef Py_ssize_t size = kern.shape[0]
    if size % 2 != 1:
        raise ValueError("kernel length must be odd")
    cdef Py_ssize_t r = size // 2
    if r == 0:
        return np.asarray(a) * kern[0]
    cdef Py_ssize_t h = a.shape[0]
    cdef Py_ssize_t w = a.shape[1]
    cdef cnp.ndarray[double, ndim=2, mode="c"] tmp = np.empty((h, w), dtype=np.float64)
    cdef cnp.ndarray[double, ndim=2, mode="c"] out = np.empty((h, w), dtype=np.float64)
    cdef Py_ssize_t i, j, t
    cdef double acc
    with nogil:
        for i in range(h):
            for j in range(w):
                acc = 0.0
                for t in range(size):
                    acc += kern[t] * a[i, _reflect(j + t - r, w)]
                tmp[i, j] = acc
        for j in range(w):
            for i in range(h):
                acc = 0.0
                for t in range(size):
                    acc += kern[t] * tmp[_reflect(i + t - r, h), j]
                out[i, j] = acc
    return out


def bilinear_resize(m, out_h, out_w):
    """Corner-aligned bilinear resize of a 2-d map."""
    cdef cnp.ndarray[double, ndim=2, mode="c"] a = np.ascontiguousarray(m, dtype=np.float64)
    cdef Py_ssize_t h = a.shape[0]
    cdef Py_ssize_t w = a.shape[1]
    cdef Py_ssize_t oh = out_h
    cdef Py_ssize_t ow = out_w
    if oh < 1 or ow < 1:
        raise ValueError("output dims must be >= 1")
    cdef cnp.ndarray[double, ndim=2, mode="c"] out = np.empty((oh, ow), dtype=np.float64)
    cdef double scale_r = 0.0, scale_c = 0.0
    if oh > 1 and h > 1:
        scale_r = (h - 1.0) / (oh - 1.0)
    if ow > 1 and w > 1:
        scale_c = (w - 1.0) / (ow - 1.0)
    cdef Py_ssize_t i, j, r0, r1, c0, c1
    cdef double src, fr, fc, v0, v1
    with nogil:
        for i in range(oh):
            src = i * scale_r
            r0 = <Py_ssize_t>src
            if r0 > h - 1:
                r0 = h - 1
            r1 = r0 + 1
            if r1 > h - 1:
                r1 = h - 1
            fr = src - r0
            for j in range(ow):
                src = j * scale_c
                c0 = <Py_ssize_t>src
                if c0 > w - 1:
                    c0 = w - 1
                c1 = c0 + 1
                if c1 > w - 1:
                    c1 = w - 1
                fc = src - c0
                v0 = a[r0, c0] + (a[r1, c0] - a[r0, c0]) * fr
                v1 = a[r0, c1] + (a[r1, c1] - a[r0, c1]) * fr
                out[i, j] = v0 + (v1 - v0) * fc
    return out
