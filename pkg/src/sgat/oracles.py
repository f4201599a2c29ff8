"""Brute-force reference implementations used by the test-suite.

Nothing here calls into :mod:`sgat.lift`, :mod:`sgat.model` or
:mod:`sgat.autodiff`; every quantity is recomputed from definitions with plain
loops so the fast paths can be checked against an independent route.
"""
from __future__ import annotations

import itertools
import math
from collections import deque
from dataclasses import dataclass

import numpy as np

MAX_BRUTE_TARGETS = 30
MAX_DENSE_SIMPLICES = 10


def _adjacency_sets(g):
    nbrs = [set() for _ in range(g.node_count)]
    for s, t, _ in g.edges.tolist():
        if s != t:
            nbrs[s].add(t)
            nbrs[t].add(s)
    return nbrs


def _bfs(nbrs, src):
    dist = {src: 0}
    queue = deque([src])
    while queue:
        x = queue.popleft()
        for y in nbrs[x]:
            if y not in dist:
                dist[y] = dist[x] + 1
                queue.append(y)
    return dist


def exact_hop_hubs(g, eta):
    """Target -> set of non-target nodes at BFS distance exactly ``eta``."""
    nbrs = _adjacency_sets(g)
    out = {}
    for t in range(g.node_count):
        if g.node_type[t] != g.target_type:
            continue
        dist = _bfs(nbrs, t)
        out[t] = {u for u, d in dist.items() if d == eta and g.node_type[u] != g.target_type}
    return out


def brute_force_simplices(g, cfg, eta):
    """Every admitted simplex, found by testing all vertex subsets up to size K+1."""
    targets = [t for t in range(g.node_count) if g.node_type[t] == g.target_type]
    if len(targets) > MAX_BRUTE_TARGETS:
        raise ValueError(f"brute force limited to {MAX_BRUTE_TARGETS} targets, got {len(targets)}")
    hubs = exact_hop_hubs(g, eta)
    levels = [[(t,) for t in targets]]
    alive = {(t,) for t in targets}
    for k in range(1, cfg.K + 1):
        eps = cfg.epsilon[k - 1][eta - 1]
        level = []
        for subset in itertools.combinations(targets, k + 1):
            shared = set.intersection(*(hubs[v] for v in subset))
            if len(shared) < eps:
                continue
            closure = set(subset)
            for t in targets:
                if t not in closure and len(shared & hubs[t]) >= eps:
                    closure.add(t)
            if len(closure) >= cfg.lam:
                continue
            faces = [subset[:j] + subset[j + 1:] for j in range(k + 1)]
            if all(f in alive for f in faces):
                level.append(subset)
        alive.update(level)
        levels.append(sorted(level))
    return levels


def brute_force_path_features(g, pair, eta, edge_features=None):
    """Mean path feature and mean path edge feature of a 1-simplex by explicit walk listing.

    A qualifying walk runs ``v = x_0, ..., x_eta = u, ..., x_2eta = w`` with
    ``u`` a shared hub, each half a shortest path, and non-target intermediates.
    """
    v, w = pair
    nbrs = _adjacency_sets(g)
    dv, dw = _bfs(nbrs, v), _bfs(nbrs, w)
    hubs_v = exact_hop_hubs(g, eta)
    shared = hubs_v[v] & hubs_v[w]
    edge_of = {}
    for e, (s, t, _) in enumerate(g.edges.tolist()):
        edge_of.setdefault(frozenset((s, t)), e)
    walks = []

    def extend(walk):
        step = len(walk) - 1
        if step == 2 * eta:
            if walk[-1] == w:
                walks.append(list(walk))
            return
        for y in sorted(nbrs[walk[-1]]):
            nxt = step + 1
            if nxt < 2 * eta and g.node_type[y] == g.target_type:
                continue
            if nxt <= eta and dv.get(y) != nxt:
                continue
            if nxt >= eta and dw.get(y) != 2 * eta - nxt:
                continue
            if nxt == eta and y not in shared:
                continue
            extend(walk + [y])

    extend([v])
    if not walks:
        return None, None, 0
    theta = np.mean([sum(g.features[x] for x in wk[1:-1]) for wk in walks], axis=0)
    phi = None
    if edge_features is not None:
        phi = np.mean(
            [np.mean([edge_features[edge_of[frozenset((a, b))]] for a, b in zip(wk, wk[1:])], axis=0)
             for wk in walks],
            axis=0,
        )
    return theta, phi, len(walks)


@dataclass
class DenseComplex:
    """Explicit simplex lists, features and dense upper adjacency per scale."""

    simplices: list      # [eta][k] -> list of vertex tuples
    features: list       # [eta][k] -> (n, d) array
    adjacency: list      # [eta][k] -> (n, n) 0/1 array, k < K
    global_simplices: list  # [k] -> sorted union of vertex tuples


def dense_complex(bundle) -> DenseComplex:
    """Rebuild the bundle's complexes with adjacency recomputed from vertex unions."""
    K = bundle.K
    simplices, features, adjacency = [], [], []
    for c in bundle.complexes:
        lists = [[tuple(int(v) for v in row) for row in c.simplices[k]] for k in range(K + 1)]
        mats = []
        for k in range(K):
            upper = set(lists[k + 1])
            n = len(lists[k])
            A = np.zeros((n, n))
            for i in range(n):
                for j in range(n):
                    union = tuple(sorted(set(lists[k][i]) | set(lists[k][j])))
                    if i == j or union in upper:
                        A[i, j] = 1.0
            mats.append(A)
        simplices.append(lists)
        features.append([np.array(f) for f in c.features])
        adjacency.append(mats)
    union = [sorted({s for lists in simplices for s in lists[k]}) for k in range(K + 1)]
    return DenseComplex(simplices, features, adjacency, union)


def _act(name, x):
    if name == "elu":
        return np.where(x > 0, x, np.expm1(np.minimum(x, 0.0)))
    if name == "tanh":
        return np.tanh(x)
    return x


def _leaky(x, slope):
    return x if x > 0 else slope * x


def dense_forward_reference(dc: DenseComplex, params: dict, cfg) -> np.ndarray:
    """Logits computed with explicit loops over simplices, neighbors and heads."""
    if any(len(lst) > MAX_DENSE_SIMPLICES for lists in dc.simplices for lst in lists):
        raise ValueError(f"dense reference limited to {MAX_DENSE_SIMPLICES} simplices per level")
    P, H = cfg.heads, cfg.hidden
    F = H // P
    p = {name: np.asarray(getattr(t, "data", t)) for name, t in params.items()}
    n_eta = len(dc.simplices)
    raw = dc.features
    current = [[np.array(f) for f in raw[e]] for e in range(n_eta)]
    layer_outputs = []
    for layer in range(1, cfg.L + 1):
        live = [0] if layer == cfg.L else list(range(cfg.K))
        branch = [{} for _ in range(n_eta)]
        for e in range(n_eta):
            eta = e + 1
            for k in live:
                pre = f"l{layer}.e{eta}.k{k}"
                W, Wc, a = p[f"{pre}.W"], p[f"{pre}.Wc"], p[f"{pre}.a"]
                lst, upper = dc.simplices[e][k], dc.simplices[e][k + 1]
                A = dc.adjacency[e][k]
                n = len(lst)
                out = np.zeros((n, H))
                for head in range(P):
                    cols = slice(head * F, (head + 1) * F)
                    proj = [current[e][k][i] @ W[:, cols] for i in range(n)]
                    for i in range(n):
                        nbr, score = [], []
                        for j in range(n):
                            if A[i, j] == 0:
                                continue
                            if i == j:
                                third = proj[i]
                            else:
                                union = tuple(sorted(set(lst[i]) | set(lst[j])))
                                third = current[e][k + 1][upper.index(union)] @ Wc[:, cols]
                            s = a[0, cols] @ proj[i] + a[1, cols] @ proj[j] + a[2, cols] @ third
                            nbr.append(j)
                            score.append(_leaky(s, cfg.leaky_slope))
                        top = max(score)
                        weights = [math.exp(s - top) for s in score]
                        total = sum(weights)
                        acc = np.zeros(F)
                        for j, wgt in zip(nbr, weights):
                            acc += (wgt / total) * proj[j]
                        out[i, cols] = _act(cfg.activation, acc)
                branch[e][k] = out
        fused = {}
        for k in live:
            glist = dc.global_simplices[k]
            if n_eta == 1:
                fused[k] = branch[0][k]
                continue
            w = []
            for e in range(n_eta):
                pre = f"l{layer}.fuse.k{k}.e{e + 1}"
                q, Fm, b = p[f"{pre}.q"], p[f"{pre}.F"], p[f"{pre}.b"]
                rows = branch[e][k]
                if len(rows) == 0:
                    w.append(0.0)
                    continue
                w.append(sum(float(np.tanh(z @ Fm + b[0]) @ q[:, 0]) for z in rows) / len(rows))
            top = max(w)
            beta = [math.exp(x - top) for x in w]
            beta = [x / sum(beta) for x in beta]
            out = np.zeros((len(glist), H))
            for gi, simplex in enumerate(glist):
                for e in range(n_eta):
                    if simplex in dc.simplices[e][k]:
                        out[gi] += beta[e] * branch[e][k][dc.simplices[e][k].index(simplex)]
            fused[k] = out
        layer_outputs.append(fused[0])
        if layer < cfg.L:
            for e in range(n_eta):
                for k in range(cfg.K):
                    glist = dc.global_simplices[k]
                    current[e][k] = np.array(
                        [fused[k][glist.index(s)] for s in dc.simplices[e][k]]
                    ).reshape(len(dc.simplices[e][k]), H)
                current[e][cfg.K] = np.array(raw[e][cfg.K])
    stacked = np.hstack(layer_outputs)
    return stacked @ p["cls.W"] + p["cls.b"][0]


def gat_reference_scores(adjacency, h, W, a, heads, slope=0.2) -> np.ndarray:
    """Plain GAT attention weights, shape ``(n, n, heads)``, zero off the pattern.

    ``a`` holds the self and neighbor blocks as its first two rows.
    """
    adjacency = np.asarray(adjacency)
    n = adjacency.shape[0]
    F = W.shape[1] // heads
    out = np.zeros((n, n, heads))
    Wh = h @ W
    for head in range(heads):
        cols = slice(head * F, (head + 1) * F)
        for i in range(n):
            raw = {}
            for j in range(n):
                if adjacency[i, j]:
                    raw[j] = _leaky(a[0, cols] @ Wh[i, cols] + a[1, cols] @ Wh[j, cols], slope)
            top = max(raw.values())
            total = sum(math.exp(s - top) for s in raw.values())
            for j, s in raw.items():
                out[i, j, head] = math.exp(s - top) / total
    return out
