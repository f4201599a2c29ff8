"""Small synthetic heterogeneous graphs for tests, demos and timing runs."""
from __future__ import annotations

import numpy as np

from .data import HeteroGraph


def _splits(targets, rng, frac=(0.5, 0.25)):
    order = rng.permutation(targets)
    n_train = max(1, int(round(frac[0] * len(order))))
    n_val = int(round(frac[1] * len(order)))
    return {
        "train": np.sort(order[:n_train]),
        "val": np.sort(order[n_train:n_train + n_val]),
        "test": np.sort(order[n_train + n_val:]),
    }


def random_hetero_graph(rng, n_targets=12, n_hubs=10, n_far=4, p_hub=0.3, p_far=0.3,
                        dim=4, num_classes=2) -> HeteroGraph:
    """Targets (type 0) attach to hubs (type 1); hubs attach to far nodes (type 2).

    Targets never touch each other directly, so every shortest path leaving a
    target starts through a non-target node.
    """
    n = n_targets + n_hubs + n_far
    node_type = np.array([0] * n_targets + [1] * n_hubs + [2] * n_far, dtype=np.int64)
    hubs = np.arange(n_targets, n_targets + n_hubs)
    far = np.arange(n_targets + n_hubs, n)
    edges = []
    for t in range(n_targets):
        for h in hubs:
            if rng.random() < p_hub:
                edges.append((t, int(h), 0))
    for h in hubs:
        for f in far:
            if rng.random() < p_far:
                edges.append((int(h), int(f), 1))
    labels = np.full(n, -1, dtype=np.int64)
    labels[:n_targets] = rng.integers(0, num_classes, n_targets)
    return HeteroGraph(
        node_ids=tuple(str(i) for i in range(n)),
        node_type=node_type,
        type_names=("target", "hub", "far"),
        edges=np.asarray(edges, dtype=np.int64).reshape(-1, 3),
        edge_type_names=("t-h", "h-f"),
        features=rng.standard_normal((n, dim)),
        target_type=0,
        labels=labels,
        class_names=tuple(f"c{i}" for i in range(num_classes)),
        splits=_splits(np.arange(n_targets), rng),
    )


def hub_clique_graph(seed=0, per_class=6, hubs_per_class=3, dim=8, noise=0.5) -> HeteroGraph:
    """Two classes; each class's targets all share the same private hubs.

    Target features carry the class on separate coordinates plus Gaussian
    noise, so the two classes are linearly separable.
    """
    rng = np.random.default_rng(seed)
    n_targets = 2 * per_class
    n_hubs = 2 * hubs_per_class
    n = n_targets + n_hubs
    node_type = np.array([0] * n_targets + [1] * n_hubs, dtype=np.int64)
    labels = np.full(n, -1, dtype=np.int64)
    labels[:n_targets] = np.repeat([0, 1], per_class)
    edges = []
    for t in range(n_targets):
        c = labels[t]
        for h in range(hubs_per_class):
            edges.append((t, n_targets + c * hubs_per_class + h, 0))
    features = noise * rng.standard_normal((n, dim))
    features[np.arange(n_targets), labels[:n_targets]] += 1.0
    features[n_targets:, 2 + np.arange(n_hubs) % (dim - 2)] += 1.0
    return HeteroGraph(
        node_ids=tuple(f"n{i}" for i in range(n)),
        node_type=node_type,
        type_names=("target", "hub"),
        edges=np.asarray(edges, dtype=np.int64),
        edge_type_names=("t-h",),
        features=features,
        target_type=0,
        labels=labels,
        class_names=("a", "b"),
        splits=_splits(np.arange(n_targets), rng, frac=(0.5, 0.25)),
    )


def replicate(g: HeteroGraph, copies: int) -> HeteroGraph:
    """Disjoint union of ``copies`` relabeled copies of ``g``."""
    n = g.node_count
    edges = np.vstack([g.edges + np.array([c * n, c * n, 0]) for c in range(copies)])
    splits = {k: np.concatenate([v + c * n for c in range(copies)]) for k, v in g.splits.items()}
    return HeteroGraph(
        node_ids=tuple(f"{c}:{nid}" for c in range(copies) for nid in g.node_ids),
        node_type=np.tile(g.node_type, copies),
        type_names=g.type_names,
        edges=edges,
        edge_type_names=g.edge_type_names,
        features=np.tile(g.features, (copies, 1)),
        target_type=g.target_type,
        labels=np.tile(g.labels, copies),
        class_names=g.class_names,
        splits=splits,
    )


def generic_toy_graph(seed=0, n_targets=4, triples=((0, 1, 2), (1, 2, 3)), n_far=4, dim=4) -> HeteroGraph:
    """Targets where every pair and each listed triple share distinct hubs.

    Each pair owns a private hub and each triple one shared hub, so no two
    simplices of a level carry the same feature. Far nodes hang off random
    hubs to give a non-trivial 2-hop complex.
    """
    rng = np.random.default_rng(seed)
    pairs = [(a, b) for a in range(n_targets) for b in range(a + 1, n_targets)]
    groups = pairs + [tuple(t) for t in triples]
    n_hubs = len(groups)
    n = n_targets + n_hubs + n_far
    edges = []
    for h, group in enumerate(groups):
        edges += [(t, n_targets + h, 0) for t in group]
    for f in range(n_far):
        for h in rng.choice(n_hubs, size=2, replace=False):
            edges.append((n_targets + int(h), n_targets + n_hubs + f, 1))
    node_type = np.array([0] * n_targets + [1] * n_hubs + [2] * n_far, dtype=np.int64)
    labels = np.full(n, -1, dtype=np.int64)
    labels[:n_targets] = np.arange(n_targets) % 2
    return HeteroGraph(
        node_ids=tuple(str(i) for i in range(n)),
        node_type=node_type,
        type_names=("target", "hub", "far"),
        edges=np.asarray(edges, dtype=np.int64),
        edge_type_names=("t-h", "h-f"),
        features=rng.standard_normal((n, dim)),
        target_type=0,
        labels=labels,
        class_names=("a", "b"),
        splits={"train": np.arange(n_targets), "val": np.empty(0, dtype=np.int64),
                "test": np.empty(0, dtype=np.int64)},
    )
