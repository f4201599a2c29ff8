"""Lifting heterogeneous graphs into feature-bearing simplicial complexes.

For every hop scale ``eta`` the target nodes become 0-simplices, and a set of
``k + 1`` targets becomes a k-simplex when the targets share enough non-target
nodes at shortest-path distance exactly ``eta`` (their *hubs*). Oversized
sharing groups are suppressed by the group-size cap ``lam``.
"""
from __future__ import annotations

import json
import os
from collections import defaultdict
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from . import kernels
from .data import HeteroGraph, build_edge_features


class LiftError(RuntimeError):
    """Raised when a lifted complex violates its construction rules."""


@dataclass(frozen=True)
class LiftConfig:
    """Lifting hyperparameters.

    ``epsilon[k - 1][eta - 1]`` is the minimum number of shared ``eta``-hop
    hubs for a k-simplex. Use :meth:`from_level1` to give only the level-1
    thresholds and reuse them for every higher level.
    """

    K: int = 2
    eta_max: int = 1
    epsilon: tuple = ((1,), (1,))
    lam: int = 10
    ef_enabled: bool = False

    def __post_init__(self):
        if self.K < 1:
            raise ValueError(f"K must be >= 1, got {self.K}")
        if self.eta_max < 1:
            raise ValueError(f"eta_max must be >= 1, got {self.eta_max}")
        if self.lam <= self.K:
            raise ValueError(f"lam must exceed K ({self.lam} <= {self.K})")
        eps = tuple(tuple(int(e) for e in row) for row in self.epsilon)
        if len(eps) != self.K or any(len(row) != self.eta_max for row in eps):
            raise ValueError(f"epsilon must be {self.K} x {self.eta_max}, got {eps}")
        if any(e < 1 for row in eps for e in row):
            raise ValueError("every epsilon must be a positive integer")
        object.__setattr__(self, "epsilon", eps)

    @classmethod
    def from_level1(cls, K=2, eps=(1,), lam=10, ef_enabled=False) -> "LiftConfig":
        eps = tuple(int(e) for e in eps)
        return cls(K=K, eta_max=len(eps), epsilon=(eps,) * K, lam=lam, ef_enabled=ef_enabled)

    def eps(self, k: int, eta: int) -> int:
        return self.epsilon[k - 1][eta - 1]


@dataclass
class UpperAdjacency:
    """Upper adjacency of one level in CSR form, self-loops included.

    ``conn[e]`` is the index of the (k+1)-simplex bounding the pair stored at
    entry ``e``; on the diagonal it is the row's own k-simplex index.
    """

    indptr: np.ndarray
    indices: np.ndarray
    conn: np.ndarray

    @property
    def n(self) -> int:
        return len(self.indptr) - 1

    @property
    def nnz(self) -> int:
        return len(self.indices)

    @property
    def rows(self) -> np.ndarray:
        return np.repeat(np.arange(self.n), np.diff(self.indptr))

    @property
    def is_self(self) -> np.ndarray:
        return self.rows == self.indices

    def connecting(self, i: int, j: int) -> int:
        lo, hi = self.indptr[i], self.indptr[i + 1]
        pos = lo + np.searchsorted(self.indices[lo:hi], j)
        if pos >= hi or self.indices[pos] != j:
            raise KeyError(f"simplices {i} and {j} are not upper-adjacent")
        return int(self.conn[pos])

    def to_dense(self) -> np.ndarray:
        out = np.zeros((self.n, self.n))
        out[self.rows, self.indices] = 1.0
        return out


@dataclass
class EtaComplex:
    """The complex lifted at one hop scale.

    ``simplices[k]`` is an ``(n_k, k + 1)`` array of target node ids sorted
    lexicographically; ``global_index[k]`` maps each row to its position in the
    bundle-wide ordering of k-simplices.
    """

    eta: int
    simplices: list
    features: list
    adjacency: list
    global_index: list = field(default_factory=list)

    def counts(self) -> list[int]:
        return [len(s) for s in self.simplices]


@dataclass
class SimplicialComplexBundle:
    config: LiftConfig
    targets: np.ndarray
    complexes: list
    global_simplices: list

    @property
    def K(self) -> int:
        return self.config.K

    def counts(self) -> dict:
        return {c.eta: c.counts() for c in self.complexes}

    def gammas(self) -> dict:
        return {c.eta: gamma_ratio(c.simplices) for c in self.complexes}

    def adjacency_nnz(self) -> dict:
        return {c.eta: [a.nnz for a in c.adjacency] for c in self.complexes}


def _hop_matrix(g: HeteroGraph, eta: int) -> sp.csr_matrix:
    """Boolean (targets x nodes) matrix of nodes at distance exactly ``eta``."""
    n = g.node_count
    targets = g.target_nodes
    if len(g.edges):
        adj = sp.coo_matrix(
            (np.ones(len(g.edges)), (g.edges[:, 0], g.edges[:, 1])), shape=(n, n)
        ).tocsr()
        adj = ((adj + adj.T) > 0).astype(np.int8).tocsr()
    else:
        adj = sp.csr_matrix((n, n), dtype=np.int8)
    frontier = sp.csr_matrix(
        (np.ones(len(targets), dtype=np.int8), (np.arange(len(targets)), targets)),
        shape=(len(targets), n),
    )
    visited = frontier.copy()
    for _ in range(eta):
        reach = (frontier @ adj) > 0
        frontier = (reach > (visited > 0)).astype(np.int8).tocsr()
        visited = ((visited + frontier) > 0).astype(np.int8).tocsr()
    frontier.eliminate_zeros()
    frontier.sort_indices()
    return frontier


def _hub_incidence(g: HeteroGraph, eta: int):
    """Target x hub incidence: (CSR over targets, CSC-as-CSR over hubs, hub node ids)."""
    hop = _hop_matrix(g, eta)
    hubs = np.flatnonzero(g.node_type != g.target_type)
    inc = hop[:, hubs].astype(np.int64).tocsr()
    inc.sum_duplicates()
    inc.sort_indices()
    inc_t = inc.T.tocsr()
    inc_t.sort_indices()
    return inc, inc_t, hubs


def eta_hop_neighbor_map(g: HeteroGraph, eta: int) -> dict:
    """Map each target node to the non-target nodes exactly ``eta`` hops away."""
    if eta < 1:
        raise ValueError("eta must be >= 1")
    inc, _, hubs = _hub_incidence(g, eta)
    return {
        int(t): frozenset(int(h) for h in hubs[inc.indices[inc.indptr[i]:inc.indptr[i + 1]]])
        for i, t in enumerate(g.target_nodes)
    }


def _candidate_pairs(inc: sp.csr_matrix, eps: int) -> np.ndarray:
    shared = (inc @ inc.T).tocoo()
    keep = (shared.row < shared.col) & (shared.data >= eps)
    pairs = np.stack([shared.row[keep], shared.col[keep]], axis=1).astype(np.int64)
    if len(pairs):
        pairs = pairs[np.lexsort((pairs[:, 1], pairs[:, 0]))]
    return pairs.reshape(-1, 2)


def _join(survivors: np.ndarray) -> np.ndarray:
    """Apriori join: (k+1)-sets all of whose k-faces are in ``survivors``."""
    if len(survivors) < 2:
        return np.empty((0, survivors.shape[1] + 1), dtype=np.int64)
    present = set(map(tuple, survivors.tolist()))
    by_prefix = defaultdict(list)
    for row in survivors.tolist():
        by_prefix[tuple(row[:-1])].append(row[-1])
    out = []
    for prefix, tails in by_prefix.items():
        tails.sort()
        for a in range(len(tails)):
            for b in range(a + 1, len(tails)):
                cand = prefix + (tails[a], tails[b])
                # faces dropping the last two vertices are guaranteed by the join
                if all(cand[:j] + cand[j + 1:] in present for j in range(len(cand) - 2)):
                    out.append(cand)
    if not out:
        return np.empty((0, survivors.shape[1] + 1), dtype=np.int64)
    out.sort()
    return np.asarray(out, dtype=np.int64)


def _enumerate_local(inc, inc_t, cfg: LiftConfig, eta: int) -> list:
    """Simplices as rows of target-local indices, one array per level."""
    T = inc.shape[0]
    levels = [np.arange(T, dtype=np.int64).reshape(-1, 1)]
    for k in range(1, cfg.K + 1):
        eps = cfg.eps(k, eta)
        cands = _candidate_pairs(inc, eps) if k == 1 else _join(levels[-1])
        if len(cands) == 0:
            levels.append(np.empty((0, k + 1), dtype=np.int64))
            continue
        common, ext = kernels.closure_sizes(
            cands, inc.indptr.astype(np.int64), inc.indices.astype(np.int64),
            inc_t.indptr.astype(np.int64), inc_t.indices.astype(np.int64), eps, cfg.lam,
        )
        levels.append(cands[(common >= eps) & (ext < cfg.lam)])
    return levels


def enumerate_complex(g: HeteroGraph, cfg: LiftConfig, eta: int) -> list:
    """Simplices of the ``eta``-complex as lists of sorted node-id tuples per level."""
    inc, inc_t, _ = _hub_incidence(g, eta)
    targets = g.target_nodes
    return [
        [tuple(int(v) for v in targets[row]) for row in level]
        for level in _enumerate_local(inc, inc_t, cfg, eta)
    ]


def _geodesic_sums(g, nbrs, v, eta, edge_index, edge_feats):
    """Per-hub aggregates over length-``eta`` geodesics from ``v``.

    Only walks whose intermediate nodes are non-target are counted. Returns
    ``{u: (count, sum of intermediate features, sum of edge features)}`` for
    nodes ``u`` at distance exactly ``eta``.
    """
    d = g.feature_dim
    de = edge_feats.shape[1] if edge_feats is not None else 0
    dist = {v: 0}
    frontier = [v]
    acc = {v: [1, np.zeros(d), np.zeros(de)]}
    for depth in range(1, eta + 1):
        nxt_nodes = []
        nxt = {}
        for y in frontier:
            for x in nbrs[y]:
                x = int(x)
                if x not in dist:
                    dist[x] = depth
                    nxt_nodes.append(x)
        for y in frontier:
            if y not in acc:
                continue
            if y != v and g.node_type[y] == g.target_type:
                continue
            n, s, es = acc[y]
            s_out = s + (n * g.features[y] if y != v else 0.0)
            for x in nbrs[y]:
                x = int(x)
                if dist[x] != depth:
                    continue
                slot = nxt.setdefault(x, [0, np.zeros(d), np.zeros(de)])
                slot[0] += n
                slot[1] += s_out
                if edge_feats is not None:
                    slot[2] += es + n * edge_feats[edge_index[(min(x, y), max(x, y))]]
        frontier = nxt_nodes
        acc = nxt
    return {u: vals for u, vals in acc.items() if g.node_type[u] != g.target_type}


def _edge_index(g: HeteroGraph) -> dict:
    index = {}
    for e, (s, t, _) in enumerate(g.edges.tolist()):
        index.setdefault((min(s, t), max(s, t)), e)
    return index


def _one_simplex_features(g, pairs, eta, hubmap, edge_feats=None):
    """Node-path and edge-path features of 1-simplices.

    The path set of a pair is every walk of length ``2 eta`` made of a geodesic
    from each endpoint to a shared hub, with only non-target intermediates.
    """
    nbrs = g.neighbors()
    eidx = _edge_index(g) if edge_feats is not None else None
    cache = {}

    def sums(v):
        if v not in cache:
            cache[v] = _geodesic_sums(g, nbrs, v, eta, eidx, edge_feats)
        return cache[v]

    de = edge_feats.shape[1] if edge_feats is not None else 0
    node_part = np.zeros((len(pairs), g.feature_dim))
    edge_part = np.zeros((len(pairs), de))
    for row, (v, w) in enumerate(pairs):
        sv, sw = sums(v), sums(w)
        total = 0
        theta = np.zeros(g.feature_dim)
        phi = np.zeros(de)
        for u in sorted(hubmap[v] & hubmap[w]):
            if u not in sv or u not in sw:
                continue
            nv, s_v, e_v = sv[u]
            nw, s_w, e_w = sw[u]
            total += nv * nw
            theta += nw * s_v + nv * nw * g.features[u] + nv * s_w
            phi += nw * e_v + nv * e_w
        if total == 0:
            raise LiftError(f"1-simplex {(v, w)} has no qualifying path at eta={eta}")
        node_part[row] = theta / total
        edge_part[row] = phi / (2 * eta * total)
    return node_part, edge_part


def assign_simplex_features(g: HeteroGraph, levels: list, eta: int, hubmap=None) -> list:
    """Feature matrix per level for simplices given as node-id tuples."""
    if hubmap is None:
        hubmap = eta_hop_neighbor_map(g, eta)
    feats = [g.features[[s[0] for s in levels[0]]].reshape(len(levels[0]), g.feature_dim)]
    for k in range(1, len(levels)):
        if k == 1:
            feats.append(_one_simplex_features(g, levels[1], eta, hubmap)[0])
            continue
        mat = np.zeros((len(levels[k]), g.feature_dim))
        for row, simplex in enumerate(levels[k]):
            shared = frozenset.intersection(*(hubmap[v] for v in simplex))
            mat[row] = g.features[sorted(shared)].mean(axis=0)
        feats.append(mat)
    return feats


def augment_edge_features(g: HeteroGraph, edge_features: np.ndarray, level1, level1_features, eta, hubmap=None):
    """Append averaged path edge features to the 1-simplex features.

    Output rows are ``node_part || edge_part`` with width ``d + (2d + a)``.
    """
    if hubmap is None:
        hubmap = eta_hop_neighbor_map(g, eta)
    _, edge_part = _one_simplex_features(g, level1, eta, hubmap, edge_features)
    level1_features = np.asarray(level1_features).reshape(len(level1), -1)
    return np.hstack([level1_features, edge_part])


def build_upper_adjacency(levels: list) -> list:
    """Upper adjacency with connecting-simplex index for levels ``0..K-1``.

    ``levels[k]`` is a sequence of sorted vertex tuples; indices refer to
    positions in those sequences.
    """
    out = []
    for k in range(len(levels) - 1):
        lookup = {tuple(s): i for i, s in enumerate(levels[k])}
        rows, cols, conn = [], [], []
        n = len(levels[k])
        rows.extend(range(n))
        cols.extend(range(n))
        conn.extend(range(n))
        for ci, cof in enumerate(levels[k + 1]):
            cof = tuple(cof)
            faces = [lookup[cof[:j] + cof[j + 1:]] for j in range(len(cof))]
            for a in faces:
                for b in faces:
                    if a != b:
                        rows.append(a)
                        cols.append(b)
                        conn.append(ci)
        rows = np.asarray(rows, dtype=np.int64)
        cols = np.asarray(cols, dtype=np.int64)
        conn = np.asarray(conn, dtype=np.int64)
        order = np.lexsort((cols, rows))
        rows, cols, conn = rows[order], cols[order], conn[order]
        indptr = np.searchsorted(rows, np.arange(n + 1)).astype(np.int64)
        out.append(UpperAdjacency(indptr, cols, conn))
    return out


def gamma_ratio(levels) -> float:
    """Ratio of triangles to edges in a lifted complex (0 when there are no edges)."""
    if len(levels) < 3 or len(levels[1]) == 0:
        return 0.0
    return len(levels[2]) / len(levels[1])


def lift(g: HeteroGraph, cfg: LiftConfig) -> SimplicialComplexBundle:
    """Lift ``g`` at every hop scale ``1..cfg.eta_max``."""
    targets = g.target_nodes
    edge_feats = build_edge_features(g) if cfg.ef_enabled else None
    complexes = []
    for eta in range(1, cfg.eta_max + 1):
        inc, inc_t, hub_ids = _hub_incidence(g, eta)
        local = _enumerate_local(inc, inc_t, cfg, eta)
        simplices = [targets[level] for level in local]
        hubmap = {
            int(t): frozenset(int(h) for h in hub_ids[inc.indices[inc.indptr[i]:inc.indptr[i + 1]]])
            for i, t in enumerate(targets)
        }
        tuples = [[tuple(int(v) for v in row) for row in level] for level in simplices]
        feats = assign_simplex_features(g, tuples, eta, hubmap)
        if cfg.ef_enabled:
            feats[1] = augment_edge_features(g, edge_feats, tuples[1], feats[1], eta, hubmap)
        complexes.append(EtaComplex(eta, simplices, feats, build_upper_adjacency(tuples)))
    global_simplices = _assign_global_index(complexes, cfg.K)
    return SimplicialComplexBundle(cfg, targets, complexes, global_simplices)


def _assign_global_index(complexes, K):
    global_simplices = []
    for k in range(K + 1):
        union = sorted({tuple(row) for c in complexes for row in c.simplices[k].tolist()})
        arr = np.asarray(union, dtype=np.int64).reshape(-1, k + 1)
        lookup = {s: i for i, s in enumerate(union)}
        for c in complexes:
            if len(c.global_index) <= k:
                c.global_index.append(None)
            c.global_index[k] = np.asarray(
                [lookup[tuple(row)] for row in c.simplices[k].tolist()], dtype=np.int64
            )
        global_simplices.append(arr)
    return global_simplices


def _write_matrix(path, mat):
    mat = np.ascontiguousarray(mat, dtype="<f8")
    with open(path, "wb") as fh:
        fh.write(np.asarray(mat.shape, dtype="<i8").tobytes())
        fh.write(mat.tobytes())


def _read_matrix(path):
    with open(path, "rb") as fh:
        rows, cols = np.frombuffer(fh.read(16), dtype="<i8")
        data = np.frombuffer(fh.read(), dtype="<f8")
    return data.reshape(int(rows), int(cols)).copy()


def save_bundle(bundle: SimplicialComplexBundle, path: str) -> None:
    """Write one directory per hop scale plus ``bundle.json`` with the lift settings.

    Per level ``k``: ``simplices_k{k}.tsv`` (one vertex tuple per line),
    ``features_k{k}.bin`` (int64 rows, int64 cols, then row-major float64) and,
    for ``k < K``, ``upper_adj_k{k}.tsv`` (``i, j, connecting_id`` triples).
    """
    os.makedirs(path, exist_ok=True)
    cfg = bundle.config
    meta = {
        "K": cfg.K, "eta_max": cfg.eta_max, "epsilon": [list(r) for r in cfg.epsilon],
        "lam": cfg.lam, "ef_enabled": cfg.ef_enabled, "targets": bundle.targets.tolist(),
    }
    with open(os.path.join(path, "bundle.json"), "w", encoding="utf-8") as fh:
        json.dump(meta, fh)
    for c in bundle.complexes:
        sub = os.path.join(path, f"eta{c.eta}")
        os.makedirs(sub, exist_ok=True)
        for k, level in enumerate(c.simplices):
            with open(os.path.join(sub, f"simplices_k{k}.tsv"), "w", encoding="utf-8") as fh:
                for row in level.tolist():
                    fh.write("\t".join(map(str, row)) + "\n")
            _write_matrix(os.path.join(sub, f"features_k{k}.bin"), c.features[k])
        for k, adj in enumerate(c.adjacency):
            with open(os.path.join(sub, f"upper_adj_k{k}.tsv"), "w", encoding="utf-8") as fh:
                for i, j, cid in zip(adj.rows.tolist(), adj.indices.tolist(), adj.conn.tolist()):
                    fh.write(f"{i}\t{j}\t{cid}\n")


def load_bundle(path: str) -> SimplicialComplexBundle:
    with open(os.path.join(path, "bundle.json"), encoding="utf-8") as fh:
        meta = json.load(fh)
    cfg = LiftConfig(
        K=meta["K"], eta_max=meta["eta_max"], epsilon=tuple(map(tuple, meta["epsilon"])),
        lam=meta["lam"], ef_enabled=meta["ef_enabled"],
    )
    complexes = []
    for eta in range(1, cfg.eta_max + 1):
        sub = os.path.join(path, f"eta{eta}")
        simplices, feats, adjs = [], [], []
        for k in range(cfg.K + 1):
            with open(os.path.join(sub, f"simplices_k{k}.tsv"), encoding="utf-8") as fh:
                rows = [list(map(int, line.split("\t"))) for line in fh if line.strip()]
            simplices.append(np.asarray(rows, dtype=np.int64).reshape(-1, k + 1))
            feats.append(_read_matrix(os.path.join(sub, f"features_k{k}.bin")))
        for k in range(cfg.K):
            trip = np.loadtxt(os.path.join(sub, f"upper_adj_k{k}.tsv"), dtype=np.int64, ndmin=2).reshape(-1, 3)
            n = len(simplices[k])
            indptr = np.searchsorted(trip[:, 0], np.arange(n + 1)).astype(np.int64)
            adjs.append(UpperAdjacency(indptr, trip[:, 1].copy(), trip[:, 2].copy()))
        complexes.append(EtaComplex(eta, simplices, feats, adjs))
    global_simplices = _assign_global_index(complexes, cfg.K)
    return SimplicialComplexBundle(cfg, np.asarray(meta["targets"], dtype=np.int64), complexes, global_simplices)
