# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels: CSR segment reductions, attention SpMM, closure counting."""
import numpy as np
cimport numpy as cnp

cnp.import_array()

ctypedef cnp.int64_t i64


def segment_max(x, indptr):
    cdef double[:, ::1] xv = np.ascontiguousarray(x, dtype=np.float64)
    cdef i64[::1] ip = np.ascontiguousarray(indptr, dtype=np.int64)
    cdef Py_ssize_t n = ip.shape[0] - 1, P = xv.shape[1], i, e, p
    out = np.empty((n, P))
    cdef double[:, ::1] ov = out
    cdef double m
    for i in range(n):
        for p in range(P):
            m = -np.inf
            for e in range(ip[i], ip[i + 1]):
                if xv[e, p] > m:
                    m = xv[e, p]
            ov[i, p] = m
    return out


def segment_sum(x, indptr):
    cdef double[:, ::1] xv = np.ascontiguousarray(x, dtype=np.float64)
    cdef i64[::1] ip = np.ascontiguousarray(indptr, dtype=np.int64)
    cdef Py_ssize_t n = ip.shape[0] - 1, P = xv.shape[1], i, e, p
    out = np.zeros((n, P))
    cdef double[:, ::1] ov = out
    for i in range(n):
        for e in range(ip[i], ip[i + 1]):
            for p in range(P):
                ov[i, p] += xv[e, p]
    return out


def csr_spmm(indptr, indices, w, X):
    cdef i64[::1] ip = np.ascontiguousarray(indptr, dtype=np.int64)
    cdef i64[::1] ix = np.ascontiguousarray(indices, dtype=np.int64)
    cdef double[:, ::1] wv = np.ascontiguousarray(w, dtype=np.float64)
    cdef double[:, ::1] xv = np.ascontiguousarray(X, dtype=np.float64)
    cdef Py_ssize_t n = ip.shape[0] - 1, P = wv.shape[1], D = xv.shape[1]
    cdef Py_ssize_t F = D // P, i, e, p, f, j
    cdef double a
    out = np.zeros((n, D))
    cdef double[:, ::1] ov = out
    for i in range(n):
        for e in range(ip[i], ip[i + 1]):
            j = ix[e]
            for p in range(P):
                a = wv[e, p]
                for f in range(p * F, (p + 1) * F):
                    ov[i, f] += a * xv[j, f]
    return out


def csr_spmm_backward(indptr, indices, w, X, G):
    cdef i64[::1] ip = np.ascontiguousarray(indptr, dtype=np.int64)
    cdef i64[::1] ix = np.ascontiguousarray(indices, dtype=np.int64)
    cdef double[:, ::1] wv = np.ascontiguousarray(w, dtype=np.float64)
    cdef double[:, ::1] xv = np.ascontiguousarray(X, dtype=np.float64)
    cdef double[:, ::1] gv = np.ascontiguousarray(G, dtype=np.float64)
    cdef Py_ssize_t n = ip.shape[0] - 1, P = wv.shape[1], D = xv.shape[1]
    cdef Py_ssize_t F = D // P, i, e, p, f, j
    cdef double a, acc
    gw = np.zeros((wv.shape[0], P))
    gX = np.zeros((xv.shape[0], D))
    cdef double[:, ::1] gwv = gw
    cdef double[:, ::1] gxv = gX
    for i in range(n):
        for e in range(ip[i], ip[i + 1]):
            j = ix[e]
            for p in range(P):
                a = wv[e, p]
                acc = 0.0
                for f in range(p * F, (p + 1) * F):
                    acc += gv[i, f] * xv[j, f]
                    gxv[j, f] += a * gv[i, f]
                gwv[e, p] = acc
    return gw, gX


def scatter_add_rows(x, index, Py_ssize_t n):
    cdef double[:, ::1] xv = np.ascontiguousarray(x, dtype=np.float64)
    cdef i64[::1] idx = np.ascontiguousarray(index, dtype=np.int64)
    cdef Py_ssize_t r, c, C = xv.shape[1]
    out = np.zeros((n, C))
    cdef double[:, ::1] ov = out
    for r in range(xv.shape[0]):
        for c in range(C):
            ov[idx[r], c] += xv[r, c]
    return out


def closure_sizes(cands, t2h_indptr, t2h_indices, h2t_indptr, h2t_indices, i64 eps, i64 cap):
    cdef i64[:, ::1] cv = np.ascontiguousarray(cands, dtype=np.int64)
    cdef i64[::1] tp = np.ascontiguousarray(t2h_indptr, dtype=np.int64)
    cdef i64[::1] tx = np.ascontiguousarray(t2h_indices, dtype=np.int64)
    cdef i64[::1] hp = np.ascontiguousarray(h2t_indptr, dtype=np.int64)
    cdef i64[::1] hx = np.ascontiguousarray(h2t_indices, dtype=np.int64)
    cdef Py_ssize_t m = cv.shape[0], s = cv.shape[1], T = tp.shape[0] - 1
    cdef Py_ssize_t i, a, b, e, h, t, q, nh, ntouched, k
    cdef i64 size
    common_arr = np.zeros(m, dtype=np.int64)
    ext_arr = np.zeros(m, dtype=np.int64)
    cdef i64[::1] common = common_arr
    cdef i64[::1] ext = ext_arr
    counter_arr = np.zeros(T, dtype=np.int64)
    cdef i64[::1] counter = counter_arr
    member_arr = np.zeros(T, dtype=np.uint8)
    cdef cnp.uint8_t[::1] member = member_arr
    hubs_arr = np.empty(max(1, tx.shape[0]), dtype=np.int64)
    cdef i64[::1] hubs = hubs_arr
    touched_arr = np.empty(max(1, T), dtype=np.int64)
    cdef i64[::1] touched = touched_arr
    cdef bint found
    for i in range(m):
        # hub intersection: membership test against each other member's sorted list
        nh = 0
        for e in range(tp[cv[i, 0]], tp[cv[i, 0] + 1]):
            h = tx[e]
            found = True
            for k in range(1, s):
                a = tp[cv[i, k]]
                b = tp[cv[i, k] + 1]
                while a < b:
                    q = (a + b) // 2
                    if tx[q] < h:
                        a = q + 1
                    else:
                        b = q
                if a == tp[cv[i, k] + 1] or tx[a] != h:
                    found = False
                    break
            if found:
                hubs[nh] = h
                nh += 1
        common[i] = nh
        if nh < eps:
            ext[i] = s
            continue
        for k in range(s):
            member[cv[i, k]] = 1
        size = s
        ntouched = 0
        for a in range(nh):
            h = hubs[a]
            for e in range(hp[h], hp[h + 1]):
                t = hx[e]
                if member[t]:
                    continue
                if counter[t] == 0:
                    touched[ntouched] = t
                    ntouched += 1
                counter[t] += 1
                if counter[t] == eps:
                    size += 1
            if size >= cap:
                break
        ext[i] = size if size < cap else cap
        for k in range(ntouched):
            counter[touched[k]] = 0
        for k in range(s):
            member[cv[i, k]] = 0
    return common_arr, ext_arr
