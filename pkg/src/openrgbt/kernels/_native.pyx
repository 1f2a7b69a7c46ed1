# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled twins of the kernels in ``_fallback``; see that module for the
shared semantics notes."""

import numpy as np

cimport numpy as cnp

cnp.import_array()

DEF VOID_LABEL = 255


def fuse_rgbt(const unsigned char[:, :, ::1] rgb,
              const unsigned char[:, ::1] thermal,
              const double[:, ::1] weights):
    cdef Py_ssize_t h = rgb.shape[0]
    cdef Py_ssize_t w = rgb.shape[1]
    out_arr = np.empty((h, w, 3), dtype=np.uint8)
    cdef unsigned char[:, :, ::1] out = out_arr
    cdef Py_ssize_t i, j, c
    cdef double wt, t, v
    with nogil:
        for i in range(h):
            for j in range(w):
                wt = weights[i, j]
                t = <double> thermal[i, j]
                for c in range(3):
                    v = wt * <double> rgb[i, j, c] + (1.0 - wt) * t + 0.5
                    if v < 0.0:
                        v = 0.0
                    elif v > 255.0:
                        v = 255.0
                    out[i, j, c] = <unsigned char> v
    return out_arr


def window_variance(const double[:, ::1] img, Py_ssize_t radius):
    cdef Py_ssize_t h = img.shape[0]
    cdef Py_ssize_t w = img.shape[1]
    out_arr = np.empty((h, w), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t i, j, y0, y1, x0, x1, y, x
    cdef double s, s2, v, n, mean, var
    with nogil:
        for i in range(h):
            y0 = i - radius
            if y0 < 0:
                y0 = 0
            y1 = i + radius
            if y1 > h - 1:
                y1 = h - 1
            for j in range(w):
                x0 = j - radius
                if x0 < 0:
                    x0 = 0
                x1 = j + radius
                if x1 > w - 1:
                    x1 = w - 1
                s = 0.0
                s2 = 0.0
                for y in range(y0, y1 + 1):
                    for x in range(x0, x1 + 1):
                        v = img[y, x]
                        s += v
                        s2 += v * v
                n = <double> ((y1 - y0 + 1) * (x1 - x0 + 1))
                mean = s / n
                var = s2 / n - mean * mean
                out[i, j] = var if var > 0.0 else 0.0
    return out_arr


def rle_encode(const unsigned char[::1] flat):
    cdef Py_ssize_t n = flat.shape[0]
    if n == 0:
        return np.zeros(1, dtype=np.int64)
    # Worst case alternates every pixel: n runs plus the leading zero.
    buf_arr = np.empty(n + 1, dtype=np.int64)
    cdef long long[::1] buf = buf_arr
    cdef Py_ssize_t i, m
    cdef unsigned char current
    cdef long long run
    with nogil:
        m = 0
        current = 0
        run = 0
        for i in range(n):
            if (flat[i] != 0) == (current != 0):
                run += 1
            else:
                buf[m] = run
                m += 1
                current = 1 - current
                run = 1
        buf[m] = run
        m += 1
    return buf_arr[:m].copy()


def rle_decode(const long long[::1] runs, Py_ssize_t n):
    out_arr = np.empty(n, dtype=np.uint8)
    cdef unsigned char[::1] out = out_arr
    cdef Py_ssize_t k, i, pos
    cdef long long total = 0
    cdef unsigned char value
    for k in range(runs.shape[0]):
        total += runs[k]
    if total != n:
        raise ValueError(f"run lengths sum to {total}, expected {n}")
    with nogil:
        pos = 0
        value = 0
        for k in range(runs.shape[0]):
            for i in range(runs[k]):
                out[pos] = value
                pos += 1
            value = 1 - value
    return out_arr


def confusion_tally(const long long[::1] gt, const long long[::1] pred,
                    Py_ssize_t n_classes, long long ignore_index):
    counts_arr = np.zeros((n_classes, n_classes + 1), dtype=np.int64)
    cdef long long[:, ::1] counts = counts_arr
    cdef Py_ssize_t i
    cdef long long g, p
    with nogil:
        for i in range(gt.shape[0]):
            g = gt[i]
            if ignore_index >= 0 and g == ignore_index:
                continue
            p = pred[i]
            if p == VOID_LABEL:
                counts[g, n_classes] += 1
            else:
                counts[g, p] += 1
    return counts_arr
