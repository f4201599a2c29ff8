"""Simplicial graph attention network over a lifted complex bundle."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .lift import SimplicialComplexBundle, UpperAdjacency

ACTIVATIONS = {"elu": ad.elu, "tanh": ad.tanh, "identity": lambda t: t}


@dataclass(frozen=True)
class ModelConfig:
    """Architecture settings.

    ``in_dims[k]`` is the raw feature width of level-k simplices and
    ``num_classes`` the classifier output width; both come from the data.
    """

    in_dims: tuple
    num_classes: int
    K: int = 2
    L: int = 2
    hidden: int = 64
    heads: int = 8
    eta_max: int = 1
    leaky_slope: float = 0.2
    activation: str = "elu"
    dropout: float = 0.0
    fusion_dim: int = 128

    def __post_init__(self):
        if self.hidden % self.heads:
            raise ValueError(f"hidden ({self.hidden}) must be divisible by heads ({self.heads})")
        if self.L < 1:
            raise ValueError("L must be >= 1")
        if len(self.in_dims) != self.K + 1:
            raise ValueError(f"need {self.K + 1} input widths, got {len(self.in_dims)}")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")

    @classmethod
    def for_bundle(cls, bundle: SimplicialComplexBundle, num_classes: int, **kw) -> "ModelConfig":
        dims = tuple(int(f.shape[1]) for f in bundle.complexes[0].features)
        return cls(in_dims=dims, num_classes=num_classes, K=bundle.K, eta_max=len(bundle.complexes), **kw)

    def levels_in_layer(self, layer: int) -> range:
        # the last layer only feeds the classifier, so only level 0 is live there
        return range(1) if layer == self.L else range(self.K)

    def input_dim(self, layer: int, k: int) -> int:
        if layer == 1 or k == self.K:
            return self.in_dims[k]
        return self.hidden


def _glorot(rng, fan_in, fan_out, shape):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


def init_params(cfg: ModelConfig, seed: int = 0) -> dict:
    """Glorot-uniform weights, zero biases, keyed by a stable parameter name."""
    rng = np.random.default_rng(seed)
    H, F = cfg.hidden, cfg.hidden // cfg.heads
    params = {}
    for layer in range(1, cfg.L + 1):
        for eta in range(1, cfg.eta_max + 1):
            for k in cfg.levels_in_layer(layer):
                din, dconn = cfg.input_dim(layer, k), cfg.input_dim(layer, k + 1)
                pre = f"l{layer}.e{eta}.k{k}"
                params[f"{pre}.W"] = _glorot(rng, din, H, (din, H))
                params[f"{pre}.Wc"] = _glorot(rng, dconn, H, (dconn, H))
                params[f"{pre}.a"] = _glorot(rng, 3 * F, 1, (3, H))
        if cfg.eta_max >= 2:
            for k in cfg.levels_in_layer(layer):
                for eta in range(1, cfg.eta_max + 1):
                    pre = f"l{layer}.fuse.k{k}.e{eta}"
                    params[f"{pre}.q"] = _glorot(rng, cfg.fusion_dim, 1, (cfg.fusion_dim, 1))
                    params[f"{pre}.F"] = _glorot(rng, H, cfg.fusion_dim, (H, cfg.fusion_dim))
                    params[f"{pre}.b"] = np.zeros((1, cfg.fusion_dim))
    params["cls.W"] = _glorot(rng, cfg.L * H, cfg.num_classes, (cfg.L * H, cfg.num_classes))
    params["cls.b"] = np.zeros((1, cfg.num_classes))
    return {name: Tensor(v, requires_grad=True, name=name) for name, v in params.items()}


def attention_scores(h: Tensor, h_conn: Tensor, adj: UpperAdjacency, W: Tensor, Wc: Tensor,
                     a: Tensor, heads: int, slope: float = 0.2):
    """Unnormalized per-entry, per-head scores over the upper adjacency.

    Each stored pair ``(i, j)`` scores ``a . [W h_i || W h_j || Wc h_c]`` where
    ``c`` is the connecting (k+1)-simplex; on the diagonal the third slot is
    ``W h_i``. ``a`` holds the three blocks as rows, heads along columns.
    Returns ``(scores, W h)``.
    """
    if h.shape[1] != W.shape[0] or h_conn.shape[1] != Wc.shape[0]:
        raise ValueError(
            f"feature widths {h.shape[1]}/{h_conn.shape[1]} do not match weights {W.shape}/{Wc.shape}"
        )
    n, n_up = h.shape[0], h_conn.shape[0]
    Wh = h @ W
    Wch = h_conn @ Wc
    s_self = ad.block_sum(ad.mul(Wh, ad.gather(a, [0])), heads)
    s_nbr = ad.block_sum(ad.mul(Wh, ad.gather(a, [1])), heads)
    s_conn = ad.concat(
        [ad.block_sum(ad.mul(Wch, ad.gather(a, [2])), heads),
         ad.block_sum(ad.mul(Wh, ad.gather(a, [2])), heads)],
        axis=0,
    )
    rows = adj.rows
    loop = rows == adj.indices
    conn = np.where(loop, n_up + rows, adj.conn)
    if (~loop).any() and (adj.conn[~loop].max() >= n_up or adj.conn[~loop].min() < 0):
        raise ValueError("connecting index refers to a missing (k+1)-simplex")
    if n and adj.n != n:
        raise ValueError(f"adjacency has {adj.n} rows, features {n}")
    raw = ad.gather(s_self, rows) + ad.gather(s_nbr, adj.indices) + ad.gather(s_conn, conn)
    return ad.leaky_relu(raw, slope), Wh


def attention_aggregate(scores: Tensor, Wh: Tensor, adj: UpperAdjacency, heads: int,
                        activation: str = "elu"):
    """Normalize scores per neighborhood and aggregate; returns ``(z, alpha)``.

    Head outputs stay concatenated along the columns of ``z``.
    """
    alpha = ad.segment_softmax(scores, adj.indptr)
    agg = ad.spmm(alpha, Wh, adj.indptr, adj.indices)
    return ACTIVATIONS[activation](agg), alpha


def fusion_weights(embeddings, q, F, b) -> Tensor:
    """Per-scale importance ``beta`` as an ``(eta_max, 1)`` tensor summing to one.

    Each scale's score averages ``q . tanh(F z + b)`` over that scale's
    simplices; a scale without simplices scores 0.
    """
    scores = [ad.matmul(ad.mean_rows(ad.tanh(z @ Fe + be)), qe) for z, qe, Fe, be in zip(embeddings, q, F, b)]
    return ad.segment_softmax(ad.concat(scores, axis=0), [0, len(scores)])


def fuse_embeddings(embeddings, beta: Tensor, global_index, tau: int) -> Tensor:
    """Beta-weighted sum of per-scale embeddings in the shared simplex order.

    Simplices absent from a scale receive nothing from it.
    """
    total = None
    for eta, (z, idx) in enumerate(zip(embeddings, global_index)):
        part = ad.scatter_sum(ad.mul(z, ad.gather(beta, [eta])), idx, tau)
        total = part if total is None else total + part
    return total


def model_forward(bundle: SimplicialComplexBundle, params: dict, cfg: ModelConfig, *,
                  training: bool = False, rng=None, trace: dict | None = None) -> Tensor:
    """Logits for every target node, in ``bundle.targets`` order.

    ``trace``, when given, collects attention weights under ``("alpha", layer,
    eta, k)`` and fusion weights under ``("beta", layer, k)``.
    """
    P = cfg.heads
    complexes = bundle.complexes
    taus = [len(s) for s in bundle.global_simplices]
    raw = [[Tensor(f) for f in c.features] for c in complexes]
    current = [list(r) for r in raw]
    drop = cfg.dropout if training else 0.0
    if drop and rng is None:
        rng = np.random.default_rng(0)
    zero_simplex_outputs = []
    for layer in range(1, cfg.L + 1):
        per_eta = []
        for e, c in enumerate(complexes):
            outs = {}
            for k in cfg.levels_in_layer(layer):
                pre = f"l{layer}.e{c.eta}.k{k}"
                h = ad.dropout(current[e][k], drop, rng)
                h_conn = ad.dropout(current[e][k + 1], drop, rng)
                scores, Wh = attention_scores(
                    h, h_conn, c.adjacency[k], params[f"{pre}.W"], params[f"{pre}.Wc"],
                    params[f"{pre}.a"], P, cfg.leaky_slope,
                )
                outs[k], alpha = attention_aggregate(scores, Wh, c.adjacency[k], P, cfg.activation)
                if trace is not None:
                    trace[("alpha", layer, c.eta, k)] = alpha.data
            per_eta.append(outs)
        fused = {}
        for k in cfg.levels_in_layer(layer):
            zs = [outs[k] for outs in per_eta]
            if cfg.eta_max == 1:
                fused[k] = zs[0]
                continue
            names = [f"l{layer}.fuse.k{k}.e{c.eta}" for c in complexes]
            beta = fusion_weights(
                zs, [params[f"{n}.q"] for n in names], [params[f"{n}.F"] for n in names],
                [params[f"{n}.b"] for n in names],
            )
            if trace is not None:
                trace[("beta", layer, k)] = beta.data
            fused[k] = fuse_embeddings(zs, beta, [c.global_index[k] for c in complexes], taus[k])
        zero_simplex_outputs.append(fused[0])
        if layer < cfg.L:
            for e, c in enumerate(complexes):
                for k in range(cfg.K):
                    current[e][k] = fused[k] if cfg.eta_max == 1 else ad.gather(fused[k], c.global_index[k])
                current[e][cfg.K] = raw[e][cfg.K]
    stacked = ad.concat(zero_simplex_outputs, axis=1)
    if stacked.shape[1] != params["cls.W"].shape[0]:
        raise ValueError(f"classifier expects {params['cls.W'].shape[0]} inputs, got {stacked.shape[1]}")
    return stacked @ params["cls.W"] + params["cls.b"]


def model_loss(logits: Tensor, labels, train_mask) -> Tensor:
    return ad.cross_entropy(logits, labels, train_mask)
