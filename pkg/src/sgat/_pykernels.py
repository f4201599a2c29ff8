"""Pure numpy implementations of the hot kernels.

Same signatures and results as the compiled ``_ckernels`` module; used when the
extension is unavailable or ``SGAT_PURE_PYTHON`` is set.
"""
import numpy as np


def _row_ids(indptr):
    return np.repeat(np.arange(len(indptr) - 1), np.diff(indptr))


def segment_max(x, indptr):
    x = np.ascontiguousarray(x, dtype=np.float64)
    if len(indptr) == 1:
        return np.empty((0, x.shape[1]))
    # reduceat requires non-empty segments; the callers guarantee it via self-loops
    return np.maximum.reduceat(x, indptr[:-1], axis=0)


def segment_sum(x, indptr):
    x = np.ascontiguousarray(x, dtype=np.float64)
    n = len(indptr) - 1
    out = np.zeros((n, x.shape[1]))
    nonempty = np.flatnonzero(np.diff(indptr) > 0)
    if len(nonempty):
        out[nonempty] = np.add.reduceat(x, indptr[:-1][nonempty], axis=0)
    return out


def csr_spmm(indptr, indices, w, X):
    n = len(indptr) - 1
    P = w.shape[1]
    F = X.shape[1] // P
    msg = X[indices].reshape(len(indices), P, F) * w[:, :, None]
    return segment_sum(msg.reshape(len(indices), P * F), indptr).reshape(n, P * F)


def csr_spmm_backward(indptr, indices, w, X, G):
    P = w.shape[1]
    F = X.shape[1] // P
    rows = _row_ids(indptr)
    Xc = X[indices].reshape(len(indices), P, F)
    Gr = G[rows].reshape(len(indices), P, F)
    gw = np.einsum("epf,epf->ep", Gr, Xc)
    gX = np.zeros_like(X)
    np.add.at(gX, indices, (Gr * w[:, :, None]).reshape(len(indices), P * F))
    return gw, gX


def scatter_add_rows(x, index, n):
    out = np.zeros((n, x.shape[1]))
    np.add.at(out, index, x)
    return out


def closure_sizes(cands, t2h_indptr, t2h_indices, h2t_indptr, h2t_indices, eps, cap):
    """Common-hub counts and capped extension-closure sizes for candidate sets.

    For each row ``S`` of ``cands``: ``common[i] = |C(S)|`` where ``C(S)`` is the
    intersection of the members' hub lists, and ``ext[i] = min(cap, |S| + #{t not
    in S : |C(S) & N(t)| >= eps})``.
    """
    m, s = cands.shape
    common = np.zeros(m, dtype=np.int64)
    ext = np.zeros(m, dtype=np.int64)
    for i in range(m):
        members = cands[i]
        hubs = t2h_indices[t2h_indptr[members[0]]:t2h_indptr[members[0] + 1]]
        for v in members[1:]:
            hubs = np.intersect1d(hubs, t2h_indices[t2h_indptr[v]:t2h_indptr[v + 1]], assume_unique=True)
        common[i] = len(hubs)
        if len(hubs) < eps:
            ext[i] = s
            continue
        reached = np.concatenate([h2t_indices[h2t_indptr[h]:h2t_indptr[h + 1]] for h in hubs])
        ts, counts = np.unique(reached, return_counts=True)
        outside = ~np.isin(ts, members)
        ext[i] = min(cap, s + int(np.count_nonzero(counts[outside] >= eps)))
    return common, ext
