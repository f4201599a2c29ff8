"""Heterogeneous graph datasets: loading, validation, feature alignment.

A dataset directory holds four files::

    nodes.tsv    node_id <TAB> type_name <TAB> f0,f1,...   (feature field may be empty)
    edges.tsv    src_id  <TAB> dst_id    <TAB> edge_type_name
    labels.tsv   node_id <TAB> class_name
    splits.json  {"train": [...], "val": [...], "test": [...]}

Node ids are arbitrary tokens; they are mapped to dense indices in file order.
"""
from __future__ import annotations

import dataclasses
import json
import os
from dataclasses import dataclass, field

import numpy as np

SPLIT_NAMES = ("train", "val", "test")


class DatasetError(ValueError):
    """Raised for malformed or inconsistent dataset files."""


@dataclass(frozen=True)
class HeteroGraph:
    """Typed, undirected multigraph with per-node features.

    ``edges`` is an ``(E, 3)`` integer array of ``(src, dst, edge_type)`` in
    stored orientation. ``labels`` has one entry per node, ``-1`` for nodes
    outside the target type.
    """

    node_ids: tuple
    node_type: np.ndarray
    type_names: tuple
    edges: np.ndarray
    edge_type_names: tuple
    features: np.ndarray
    target_type: int
    labels: np.ndarray
    class_names: tuple
    splits: dict = field(default_factory=dict)

    @property
    def node_count(self) -> int:
        return len(self.node_ids)

    @property
    def num_node_types(self) -> int:
        return len(self.type_names)

    @property
    def num_edge_types(self) -> int:
        return len(self.edge_type_names)

    @property
    def num_classes(self) -> int:
        return len(self.class_names)

    @property
    def feature_dim(self) -> int:
        return self.features.shape[1]

    @property
    def target_nodes(self) -> np.ndarray:
        return np.flatnonzero(self.node_type == self.target_type)

    def neighbors(self) -> list[np.ndarray]:
        """Sorted, de-duplicated undirected neighbor lists."""
        n = self.node_count
        if len(self.edges) == 0:
            return [np.empty(0, dtype=np.int64) for _ in range(n)]
        src = np.concatenate([self.edges[:, 0], self.edges[:, 1]])
        dst = np.concatenate([self.edges[:, 1], self.edges[:, 0]])
        keep = src != dst
        src, dst = src[keep], dst[keep]
        order = np.lexsort((dst, src))
        src, dst = src[order], dst[order]
        uniq = np.ones(len(src), dtype=bool)
        uniq[1:] = (src[1:] != src[:-1]) | (dst[1:] != dst[:-1])
        src, dst = src[uniq], dst[uniq]
        bounds = np.searchsorted(src, np.arange(n + 1))
        return [dst[bounds[i]:bounds[i + 1]] for i in range(n)]

    def validate(self) -> None:
        n = self.node_count
        if self.node_type.shape != (n,) or self.labels.shape != (n,):
            raise DatasetError("per-node arrays do not match node count")
        if self.features.ndim != 2 or self.features.shape[0] != n:
            raise DatasetError(f"feature matrix has shape {self.features.shape}, expected ({n}, d)")
        if len(self.edges):
            bad = (self.edges[:, :2] < 0) | (self.edges[:, :2] >= n)
            if bad.any():
                row = int(np.flatnonzero(bad.any(axis=1))[0])
                raise DatasetError(f"edge {row} has a dangling endpoint")
        targets = self.node_type == self.target_type
        unlabeled = np.flatnonzero(targets & (self.labels < 0))
        if len(unlabeled):
            raise DatasetError(f"target node {self.node_ids[unlabeled[0]]!r} has no label")
        if (self.labels[~targets] >= 0).any():
            bad = np.flatnonzero(~targets & (self.labels >= 0))[0]
            raise DatasetError(f"node {self.node_ids[bad]!r} is labeled but not of the target type")
        seen: dict[int, str] = {}
        for name in SPLIT_NAMES:
            for idx in self.splits.get(name, np.empty(0, dtype=np.int64)):
                idx = int(idx)
                if not targets[idx]:
                    raise DatasetError(f"split {name!r} contains non-target node {self.node_ids[idx]!r}")
                if idx in seen:
                    raise DatasetError(
                        f"node {self.node_ids[idx]!r} appears in both {seen[idx]!r} and {name!r} splits"
                    )
                seen[idx] = name


def pad_features(rows, node_type, num_types: int) -> np.ndarray:
    """Stack ragged per-node feature rows into one zero-padded matrix.

    Rows that are empty (or ``None``) receive a one-hot encoding of the node's
    type. The common width is the maximum width over all rows after that
    substitution; shorter rows are padded with trailing zeros.
    """
    node_type = np.asarray(node_type, dtype=np.int64)
    filled = []
    for vec, t in zip(rows, node_type):
        if vec is None or len(vec) == 0:
            vec = np.zeros(num_types)
            vec[t] = 1.0
        filled.append(np.asarray(vec, dtype=np.float64))
    d = max((len(v) for v in filled), default=0)
    out = np.zeros((len(filled), d))
    for i, v in enumerate(filled):
        out[i, :len(v)] = v
    return out


def build_edge_features(g: HeteroGraph) -> np.ndarray:
    """Edge features ``h_src || h_dst || onehot(edge_type)``, shape ``(E, 2d + a)``."""
    a = g.num_edge_types
    if len(g.edges) == 0:
        return np.zeros((0, 2 * g.feature_dim + a))
    onehot = np.zeros((len(g.edges), a))
    onehot[np.arange(len(g.edges)), g.edges[:, 2]] = 1.0
    return np.hstack([g.features[g.edges[:, 0]], g.features[g.edges[:, 1]], onehot])


def randomize_node_features(g: HeteroGraph, seed: int) -> HeteroGraph:
    """Replace every node feature with i.i.d. standard normal draws of the same shape."""
    rng = np.random.default_rng(seed)
    return dataclasses.replace(g, features=rng.standard_normal(g.features.shape))


def _read_tsv(path: str):
    if not os.path.exists(path):
        raise DatasetError(f"missing file: {path}")
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n").rstrip("\r")
            if not line.strip() or line.startswith("#"):
                continue
            yield lineno, line.split("\t")


def load_dataset(path: str, target_type: str | None = None) -> HeteroGraph:
    """Read and validate a dataset directory.

    The target type is the type shared by every labeled node unless given
    explicitly.
    """
    nodes_path = os.path.join(path, "nodes.tsv")
    ids: list[str] = []
    index: dict[str, int] = {}
    types: list[int] = []
    type_index: dict[str, int] = {}
    raw_rows = []
    for lineno, cols in _read_tsv(nodes_path):
        if len(cols) < 2:
            raise DatasetError(f"{nodes_path}:{lineno}: expected node_id, type_name, features")
        nid, tname = cols[0], cols[1]
        if nid in index:
            raise DatasetError(f"{nodes_path}:{lineno}: duplicate node id {nid!r}")
        field_ = cols[2].strip() if len(cols) > 2 else ""
        try:
            vec = [float(x) for x in field_.split(",")] if field_ else []
        except ValueError as exc:
            raise DatasetError(f"{nodes_path}:{lineno}: bad feature value ({exc})") from None
        index[nid] = len(ids)
        ids.append(nid)
        types.append(type_index.setdefault(tname, len(type_index)))
        raw_rows.append(vec)
    node_type = np.asarray(types, dtype=np.int64)

    edges_path = os.path.join(path, "edges.tsv")
    edge_rows = []
    etype_index: dict[str, int] = {}
    for lineno, cols in _read_tsv(edges_path):
        if len(cols) < 3:
            raise DatasetError(f"{edges_path}:{lineno}: expected src_id, dst_id, edge_type_name")
        for endpoint in cols[:2]:
            if endpoint not in index:
                raise DatasetError(f"{edges_path}:{lineno}: dangling edge endpoint {endpoint!r}")
        edge_rows.append((index[cols[0]], index[cols[1]], etype_index.setdefault(cols[2], len(etype_index))))
    edges = np.asarray(edge_rows, dtype=np.int64).reshape(-1, 3)

    labels_path = os.path.join(path, "labels.tsv")
    label_rows = []
    for lineno, cols in _read_tsv(labels_path):
        if len(cols) < 2:
            raise DatasetError(f"{labels_path}:{lineno}: expected node_id, class_name")
        if cols[0] not in index:
            raise DatasetError(f"{labels_path}:{lineno}: unknown node id {cols[0]!r}")
        label_rows.append((lineno, index[cols[0]], cols[1]))
    class_names = tuple(sorted({c for _, _, c in label_rows}))
    class_index = {c: i for i, c in enumerate(class_names)}
    labels = np.full(len(ids), -1, dtype=np.int64)
    for lineno, idx, cname in label_rows:
        if labels[idx] >= 0:
            raise DatasetError(f"{labels_path}:{lineno}: node {ids[idx]!r} labeled twice")
        labels[idx] = class_index[cname]

    type_names = tuple(type_index)
    if target_type is None:
        labeled_types = sorted({int(node_type[i]) for _, i, _ in label_rows})
        if len(labeled_types) != 1:
            names = [type_names[t] for t in labeled_types]
            raise DatasetError(f"labeled nodes must share one type, found {names}")
        target = labeled_types[0]
    else:
        if target_type not in type_index:
            raise DatasetError(f"unknown target type {target_type!r}")
        target = type_index[target_type]

    splits_path = os.path.join(path, "splits.json")
    if not os.path.exists(splits_path):
        raise DatasetError(f"missing file: {splits_path}")
    with open(splits_path, encoding="utf-8") as fh:
        raw_splits = json.load(fh)
    splits = {}
    for name in SPLIT_NAMES:
        members = []
        for nid in raw_splits.get(name, []):
            key = str(nid)
            if key not in index:
                raise DatasetError(f"{splits_path}: split {name!r} references unknown node {key!r}")
            members.append(index[key])
        splits[name] = np.asarray(members, dtype=np.int64)

    g = HeteroGraph(
        node_ids=tuple(ids),
        node_type=node_type,
        type_names=type_names,
        edges=edges,
        edge_type_names=tuple(etype_index),
        features=pad_features(raw_rows, node_type, len(type_names)),
        target_type=target,
        labels=labels,
        class_names=class_names,
        splits=splits,
    )
    g.validate()
    return g


def save_dataset(g: HeteroGraph, path: str) -> None:
    """Write ``g`` in the directory layout read by :func:`load_dataset`."""
    os.makedirs(path, exist_ok=True)
    with open(os.path.join(path, "nodes.tsv"), "w", encoding="utf-8") as fh:
        for i, nid in enumerate(g.node_ids):
            feats = ",".join(repr(float(x)) for x in g.features[i])
            fh.write(f"{nid}\t{g.type_names[g.node_type[i]]}\t{feats}\n")
    with open(os.path.join(path, "edges.tsv"), "w", encoding="utf-8") as fh:
        for s, d, t in g.edges:
            fh.write(f"{g.node_ids[s]}\t{g.node_ids[d]}\t{g.edge_type_names[t]}\n")
    with open(os.path.join(path, "labels.tsv"), "w", encoding="utf-8") as fh:
        for i in np.flatnonzero(g.labels >= 0):
            fh.write(f"{g.node_ids[i]}\t{g.class_names[g.labels[i]]}\n")
    with open(os.path.join(path, "splits.json"), "w", encoding="utf-8") as fh:
        json.dump({k: [g.node_ids[i] for i in v] for k, v in g.splits.items()}, fh)
