# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled implementations of the hot kernels (see _purepy for the contracts)."""

import numpy as np

cimport numpy as cnp
from libc.math cimport INFINITY, log

cnp.import_array()

cdef double _EPS = 1e-12


def iou_matrix(a, b):
    cdef cnp.float64_t[:, ::1] A = np.ascontiguousarray(a, dtype=np.float64).reshape(-1, 4)
    cdef cnp.float64_t[:, ::1] B = np.ascontiguousarray(b, dtype=np.float64).reshape(-1, 4)
    cdef Py_ssize_t n = A.shape[0], m = B.shape[0], i, j
    out_arr = np.zeros((n, m), dtype=np.float64)
    cdef cnp.float64_t[:, ::1] out = out_arr
    cdef double ix, iy, inter, area_a, union
    for i in range(n):
        area_a = (A[i, 2] - A[i, 0]) * (A[i, 3] - A[i, 1])
        for j in range(m):
            ix = min(A[i, 2], B[j, 2]) - max(A[i, 0], B[j, 0])
            if ix <= 0.0:
                continue
            iy = min(A[i, 3], B[j, 3]) - max(A[i, 1], B[j, 1])
            if iy <= 0.0:
                continue
            inter = ix * iy
            union = area_a + (B[j, 2] - B[j, 0]) * (B[j, 3] - B[j, 1]) - inter
            if union > 0.0:
                out[i, j] = inter / union
    return out_arr


def scan_split(values, labels, weights, int n_classes, int min_leaf):
    cdef cnp.float64_t[::1] v = np.ascontiguousarray(values, dtype=np.float64)
    cdef cnp.int32_t[::1] y = np.ascontiguousarray(labels, dtype=np.int32)
    cdef cnp.float64_t[::1] w = np.ascontiguousarray(weights, dtype=np.float64)
    cdef Py_ssize_t n = v.shape[0], k, c
    if n < 2 * min_leaf:
        return -1, INFINITY
    total_arr = np.zeros(n_classes, dtype=np.float64)
    left_arr = np.zeros(n_classes, dtype=np.float64)
    cdef cnp.float64_t[::1] total = total_arr
    cdef cnp.float64_t[::1] left = left_arr
    cdef double w_total = 0.0, wl = 0.0, wr, sl, sr, gini_l, gini_r, score
    cdef double best_score = INFINITY
    cdef Py_ssize_t best_k = -1
    for k in range(n):
        total[y[k]] += w[k]
    for c in range(n_classes):
        w_total += total[c]
    for k in range(1, n - min_leaf + 1):
        left[y[k - 1]] += w[k - 1]
        wl += w[k - 1]
        if k < min_leaf or v[k - 1] >= v[k]:
            continue
        sl = 0.0
        sr = 0.0
        for c in range(n_classes):
            sl += left[c] * left[c]
            sr += (total[c] - left[c]) * (total[c] - left[c])
        wr = w_total - wl
        gini_l = 1.0 - sl / (wl * wl)
        gini_r = 1.0 - sr / (wr * wr)
        score = (wl * gini_l + wr * gini_r) / w_total
        if score < best_score:
            best_score = score
            best_k = k
    if best_k < 0:
        return -1, INFINITY
    return best_k, best_score


def sq_dist_matrix(x):
    cdef cnp.float64_t[:, ::1] X = np.ascontiguousarray(x, dtype=np.float64)
    cdef Py_ssize_t n = X.shape[0], d = X.shape[1], i, j, k
    out_arr = np.zeros((n, n), dtype=np.float64)
    cdef cnp.float64_t[:, ::1] out = out_arr
    cdef double acc, diff
    for i in range(n):
        for j in range(i + 1, n):
            acc = 0.0
            for k in range(d):
                diff = X[i, k] - X[j, k]
                acc += diff * diff
            out[i, j] = acc
            out[j, i] = acc
    return out_arr


def student_t_terms(y):
    cdef cnp.float64_t[:, ::1] Y = np.ascontiguousarray(y, dtype=np.float64)
    cdef Py_ssize_t n = Y.shape[0], d = Y.shape[1], i, j, k
    num_arr = np.zeros((n, n), dtype=np.float64)
    cdef cnp.float64_t[:, ::1] num = num_arr
    cdef double acc, diff, value, qsum = 0.0
    for i in range(n):
        for j in range(i + 1, n):
            acc = 0.0
            for k in range(d):
                diff = Y[i, k] - Y[j, k]
                acc += diff * diff
            value = 1.0 / (1.0 + acc)
            num[i, j] = value
            num[j, i] = value
            qsum += 2.0 * value
    return num_arr, qsum


def tsne_grad(p, num, double qsum, y):
    cdef cnp.float64_t[:, ::1] P = np.ascontiguousarray(p, dtype=np.float64)
    cdef cnp.float64_t[:, ::1] NUM = np.ascontiguousarray(num, dtype=np.float64)
    cdef cnp.float64_t[:, ::1] Y = np.ascontiguousarray(y, dtype=np.float64)
    cdef Py_ssize_t n = Y.shape[0], d = Y.shape[1], i, j, k
    grad_arr = np.zeros((n, d), dtype=np.float64)
    cdef cnp.float64_t[:, ::1] grad = grad_arr
    cdef double coeff
    for i in range(n):
        for j in range(n):
            if i == j:
                continue
            coeff = (P[i, j] - NUM[i, j] / qsum) * NUM[i, j]
            for k in range(d):
                grad[i, k] += 4.0 * coeff * (Y[i, k] - Y[j, k])
    return grad_arr


def kl_from_terms(p, num, double qsum):
    cdef cnp.float64_t[:, ::1] P = np.ascontiguousarray(p, dtype=np.float64)
    cdef cnp.float64_t[:, ::1] NUM = np.ascontiguousarray(num, dtype=np.float64)
    cdef Py_ssize_t n = P.shape[0], i, j
    cdef double kl = 0.0, q
    for i in range(n):
        for j in range(P.shape[1]):
            if P[i, j] > 0.0:
                q = NUM[i, j] / qsum
                if q < _EPS:
                    q = _EPS
                kl += P[i, j] * log(P[i, j] / q)
    return kl
