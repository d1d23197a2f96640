"""Numpy implementations of the hot kernels.

This is the fallback backend; `kng.kernels._native` implements the same four
functions in Cython. Semantics the two must share:

  * distances use the expansion |x|^2 - 2 x.c + |c|^2 clamped at 0,
  * argmin ties resolve to the lowest index,
  * bilinear uses corner-aligned source coords and a + (b - a) * f lerps,
  * blur padding is half-sample symmetric (numpy's mode="symmetric").
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


def nearest_two(x: np.ndarray, centers: np.ndarray):
    """Two nearest centers for each row of x.

    Returns (s1, s2, d1, d2): int64 indices and float64 euclidean distances,
    d1 <= d2, s1 != s2. Requires at least 2 centers.
    """
    x = np.ascontiguousarray(x, dtype=np.float64)
    c = np.ascontiguousarray(centers, dtype=np.float64)
    n, d = x.shape
    k = c.shape[0]
    if k < 2:
        raise ValueError("need at least 2 centers")
    if c.shape[1] != d:
        raise ValueError(f"dim mismatch: x has {d}, centers have {c.shape[1]}")
    cn = np.einsum("ij,ij->i", c, c)
    s1 = np.empty(n, dtype=np.int64)
    s2 = np.empty(n, dtype=np.int64)
    d1 = np.empty(n, dtype=np.float64)
    d2 = np.empty(n, dtype=np.float64)
    step = max(1, (1 << 22) // k)  # cap the distance block at ~32 MB
    for lo in range(0, n, step):
        xb = x[lo:lo + step]
        dsq = xb @ c.T
        dsq *= -2.0
        dsq += cn[None, :]
        dsq += np.einsum("ij,ij->i", xb, xb)[:, None]
        np.maximum(dsq, 0.0, out=dsq)
        j1 = np.argmin(dsq, axis=1)
        rows = np.arange(xb.shape[0])
        v1 = dsq[rows, j1].copy()
        dsq[rows, j1] = np.inf
        j2 = np.argmin(dsq, axis=1)
        v2 = dsq[rows, j2]
        s1[lo:lo + step] = j1
        s2[lo:lo + step] = j2
        d1[lo:lo + step] = np.sqrt(v1)
        d2[lo:lo + step] = np.sqrt(v2)
    return s1, s2, d1, d2


def quad_form(diffs: np.ndarray, precision: np.ndarray) -> np.ndarray:
    """Row-wise quadratic form diffs[i] @ precision @ diffs[i]."""
    diffs = np.ascontiguousarray(diffs, dtype=np.float64)
    p = np.ascontiguousarray(precision, dtype=np.float64)
    return np.einsum("ij,ij->i", diffs @ p, diffs)


def gaussian_blur_2d(m: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    """Separable 2-d correlation with half-sample symmetric padding."""
    m = np.ascontiguousarray(m, dtype=np.float64)
    kernel = np.ascontiguousarray(kernel, dtype=np.float64)
    size = kernel.shape[0]
    if size % 2 != 1:
        raise ValueError("kernel length must be odd")
    r = size // 2
    if r == 0:
        return m * kernel[0]
    pad = np.pad(m, ((0, 0), (r, r)), mode="symmetric")
    m = sliding_window_view(pad, size, axis=1) @ kernel
    pad = np.pad(m, ((r, r), (0, 0)), mode="symmetric")
    return sliding_window_view(pad, size, axis=0) @ kernel


def bilinear_resize(m: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Corner-aligned bilinear resize of a 2-d map."""
    m = np.ascontiguousarray(m, dtype=np.float64)
    h, w = m.shape
    if out_h < 1 or out_w < 1:
        raise ValueError("output dims must be >= 1")

    def axis_coords(n_in, n_out):
        if n_out == 1 or n_in == 1:
            src = np.zeros(n_out, dtype=np.float64)
        else:
            scale = (n_in - 1) / (n_out - 1)
            src = np.arange(n_out, dtype=np.float64) * scale
        i0 = np.minimum(src.astype(np.int64), n_in - 1)
        i1 = np.minimum(i0 + 1, n_in - 1)
        return i0, i1, src - i0

    r0, r1, fr = axis_coords(h, out_h)
    c0, c1, fc = axis_coords(w, out_w)
    tmp = m[r0]
    tmp = tmp + (m[r1] - tmp) * fr[:, None]
    out = tmp[:, c0]
    out = out + (tmp[:, c1] - out) * fc[None, :]
    return out
