"""Training, evaluation, sensitivity sweeps and timing."""
from __future__ import annotations

import csv
import dataclasses
import itertools
import json
import logging
import os
import time
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .data import HeteroGraph, load_dataset, randomize_node_features
from .lift import LiftConfig, SimplicialComplexBundle, gamma_ratio, lift
from .model import ModelConfig, init_params, model_forward, model_loss

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

log = logging.getLogger(__name__)

VARIANTS = ("SGAT", "SGAT-EF")
MODEL_KEYS = ("L", "hidden", "heads", "leaky_slope", "activation", "dropout", "fusion_dim")
CURVE_COLUMNS = ("epoch", "loss", "train_acc", "val_macro_f1", "val_micro_f1",
                 "test_macro_f1", "test_micro_f1", "seconds")


class ConfigError(ValueError):
    pass


class TrainingDiverged(RuntimeError):
    def __init__(self, epoch: int, loss: float):
        super().__init__(f"non-finite loss {loss} at epoch {epoch}")
        self.epoch = epoch


@dataclass
class ExperimentConfig:
    data_path: str | None = None
    target_type: str | None = None
    random_features: bool = False
    lift: LiftConfig = field(default_factory=lambda: LiftConfig.from_level1(K=2, eps=(1,), lam=10))
    model: dict = field(default_factory=lambda: {"L": 2, "hidden": 64, "heads": 8})
    variant: str = "SGAT"
    lr: float = 0.005
    weight_decay: float = 5e-4
    epochs: int = 200
    patience: int = 100
    seed: int = 0
    repeats: int = 1
    out_dir: str = "."
    sweep_epsilon: list = field(default_factory=list)
    sweep_lambda: list = field(default_factory=list)

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ConfigError(f"variant must be one of {VARIANTS}, got {self.variant!r}")
        unknown = set(self.model) - set(MODEL_KEYS)
        if unknown:
            raise ConfigError(f"unknown [model] keys: {sorted(unknown)}")
        if self.lift.ef_enabled != (self.variant == "SGAT-EF"):
            self.lift = dataclasses.replace(self.lift, ef_enabled=self.variant == "SGAT-EF")

    @classmethod
    def from_dict(cls, raw: dict, base_dir: str = ".", seed: int | None = None) -> "ExperimentConfig":
        """Build from parsed TOML; ``seed`` overrides ``[train] seed``, one of them is required."""
        data = raw.get("data", {})
        lift_raw = dict(raw.get("lift", {}))
        model = dict(raw.get("model", {}))
        train = raw.get("train", {})
        sweep = raw.get("sweep", {})
        variant = model.pop("variant", train.get("variant", "SGAT"))
        K = int(lift_raw.get("K", 2))
        eps = lift_raw.get("epsilon", [1])
        if isinstance(eps, int):
            eps = [eps]
        levels = lift_raw.get("epsilon_levels")
        try:
            if levels is not None:
                lift_cfg = LiftConfig(K=K, eta_max=len(levels[0]), epsilon=tuple(map(tuple, levels)),
                                      lam=int(lift_raw.get("lambda", 10)))
            else:
                lift_cfg = LiftConfig.from_level1(K=K, eps=eps, lam=int(lift_raw.get("lambda", 10)))
        except ValueError as exc:
            raise ConfigError(f"[lift]: {exc}") from None
        path = data.get("path")
        if path is not None and not os.path.isabs(path):
            path = os.path.join(base_dir, path)
        seed = train.get("seed") if seed is None else seed
        if seed is None:
            raise ConfigError("a seed is required ([train] seed or --seed)")
        model.setdefault("L", 2)
        model.setdefault("hidden", 64)
        model.setdefault("heads", 8)
        return cls(
            data_path=path,
            target_type=data.get("target_type"),
            random_features=bool(data.get("random_features", False)),
            lift=lift_cfg,
            model=model,
            variant=variant,
            lr=float(train.get("lr", 0.005)),
            weight_decay=float(train.get("weight_decay", 5e-4)),
            epochs=int(train.get("epochs", 200)),
            patience=int(train.get("patience", 100)),
            seed=int(seed),
            repeats=int(train.get("repeats", 1)),
            sweep_epsilon=[list(x) if isinstance(x, list) else [x] for x in sweep.get("epsilon", [])],
            sweep_lambda=[int(x) for x in sweep.get("lambda", [])],
        )

    @classmethod
    def load(cls, path: str, seed: int | None = None) -> "ExperimentConfig":
        if not os.path.exists(path):
            raise FileNotFoundError(f"config file not found: {path}")
        with open(path, "rb") as fh:
            try:
                raw = tomllib.load(fh)
            except tomllib.TOMLDecodeError as exc:
                raise ConfigError(f"{path}: {exc}") from None
        return cls.from_dict(raw, base_dir=os.path.dirname(os.path.abspath(path)), seed=seed)


@dataclass
class RunReport:
    seed: int
    best_epoch: int
    test_macro_f1: float
    test_micro_f1: float
    val_macro_f1: float
    epochs_run: int
    initial: dict
    curves: list
    epoch_seconds: list
    gamma: dict
    simplex_counts: dict
    adjacency_nnz: dict

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


def f1_scores(y_true, y_pred, num_classes: int | None = None) -> tuple[float, float]:
    """(macro-F1, micro-F1) for single-label multiclass predictions.

    Macro averages per-class F1 over ``num_classes`` classes (default: one more
    than the largest id seen); a class absent from both truth and predictions
    scores 0.
    """
    y_true = np.asarray(y_true, dtype=np.int64)
    y_pred = np.asarray(y_pred, dtype=np.int64)
    if len(y_true) == 0:
        raise ValueError("f1_scores: empty node set")
    if num_classes is None:
        num_classes = int(max(y_true.max(), y_pred.max())) + 1
    micro = float(np.mean(y_true == y_pred))
    per_class = []
    for c in range(num_classes):
        tp = np.sum((y_pred == c) & (y_true == c))
        denom = np.sum(y_pred == c) + np.sum(y_true == c)
        per_class.append(2.0 * tp / denom if denom else 0.0)
    return float(np.mean(per_class)), micro


def evaluate_f1(logits, labels, nodes) -> tuple[float, float]:
    """Macro/micro F1 of ``argmax(logits)`` on the rows ``nodes``."""
    if isinstance(logits, ad.Tensor):
        logits = logits.data
    nodes = np.asarray(nodes, dtype=np.int64)
    preds = logits[nodes].argmax(axis=1)
    return f1_scores(np.asarray(labels)[nodes], preds, num_classes=logits.shape[1])


@dataclass
class PreparedData:
    graph: HeteroGraph
    bundle: SimplicialComplexBundle
    labels: np.ndarray
    masks: dict


def prepare(g: HeteroGraph, lift_cfg: LiftConfig) -> PreparedData:
    """Lift ``g`` and express labels and splits as rows of the target order."""
    bundle = lift(g, lift_cfg)
    labels = g.labels[bundle.targets]
    masks = {k: np.searchsorted(bundle.targets, v) for k, v in g.splits.items()}
    return PreparedData(g, bundle, labels, masks)


def load_graph(cfg: ExperimentConfig) -> HeteroGraph:
    if cfg.data_path is None:
        raise ConfigError("no dataset path given ([data] path or --data)")
    g = load_dataset(cfg.data_path, cfg.target_type)
    if cfg.random_features:
        g = randomize_node_features(g, cfg.seed)
    return g


def _metrics(logits, prep: PreparedData) -> dict:
    out = {}
    for split in ("train", "val", "test"):
        nodes = prep.masks.get(split, np.empty(0, dtype=np.int64))
        if len(nodes):
            out[f"{split}_macro_f1"], out[f"{split}_micro_f1"] = evaluate_f1(logits, prep.labels, nodes)
        else:
            out[f"{split}_macro_f1"] = out[f"{split}_micro_f1"] = float("nan")
    out["train_acc"] = out["train_micro_f1"]
    return out


def train(cfg: ExperimentConfig, prep: PreparedData | None = None, *, return_params: bool = False):
    """Train one model; the reported test scores come from the best validation epoch."""
    if prep is None:
        prep = prepare(load_graph(cfg), cfg.lift)
    g, bundle = prep.graph, prep.bundle
    mcfg = ModelConfig.for_bundle(bundle, g.num_classes, **cfg.model)
    params = init_params(mcfg, cfg.seed)
    state = ad.AdamState(params, lr=cfg.lr, weight_decay=cfg.weight_decay)
    rng = np.random.default_rng(cfg.seed + 1)
    train_mask = prep.masks["train"]

    initial = _metrics(model_forward(bundle, params, mcfg), prep)
    best = {"epoch": 0, "val": -np.inf, "metrics": initial,
            "params": {k: v.data.copy() for k, v in params.items()}}
    curves, seconds = [], []
    for epoch in range(1, cfg.epochs + 1):
        start = time.perf_counter()
        for p in params.values():
            p.zero_grad()
        with ad.Tape() as tape:
            logits = model_forward(bundle, params, mcfg, training=True, rng=rng)
            loss = model_loss(logits, prep.labels, train_mask)
        if not np.isfinite(loss.item()):
            raise TrainingDiverged(epoch, loss.item())
        tape.backward(loss)
        ad.adam_step(params, {k: v.grad for k, v in params.items()}, state)
        elapsed = time.perf_counter() - start
        seconds.append(elapsed)

        metrics = _metrics(model_forward(bundle, params, mcfg), prep)
        curves.append({"epoch": epoch, "loss": loss.item(), **{k: metrics[k] for k in CURVE_COLUMNS[2:-1]},
                       "seconds": elapsed})
        val = metrics["val_macro_f1"]
        if np.isnan(val):
            val = -loss.item()
        if val > best["val"]:
            best = {"epoch": epoch, "val": val, "metrics": metrics,
                    "params": {k: v.data.copy() for k, v in params.items()}}
        elif epoch - best["epoch"] >= cfg.patience:
            log.info("early stop at epoch %d (best %d)", epoch, best["epoch"])
            break
        log.debug("epoch %d loss %.4f val macro %.4f", epoch, loss.item(), metrics["val_macro_f1"])

    report = RunReport(
        seed=cfg.seed,
        best_epoch=best["epoch"],
        test_macro_f1=best["metrics"]["test_macro_f1"],
        test_micro_f1=best["metrics"]["test_micro_f1"],
        val_macro_f1=best["metrics"]["val_macro_f1"],
        epochs_run=len(curves),
        initial=initial,
        curves=curves,
        epoch_seconds=seconds,
        gamma={str(k): v for k, v in bundle.gammas().items()},
        simplex_counts={str(k): v for k, v in bundle.counts().items()},
        adjacency_nnz={str(k): v for k, v in bundle.adjacency_nnz().items()},
    )
    if return_params:
        return report, best["params"], mcfg
    return report


def train_repeats(cfg: ExperimentConfig, prep: PreparedData | None = None) -> dict:
    """Run ``cfg.repeats`` seeds (``seed, seed + 1, ...``) and summarize test scores."""
    if prep is None:
        prep = prepare(load_graph(cfg), cfg.lift)
    runs = [train(dataclasses.replace(cfg, seed=cfg.seed + r), prep) for r in range(cfg.repeats)]
    macro = np.array([r.test_macro_f1 for r in runs])
    micro = np.array([r.test_micro_f1 for r in runs])
    return {
        "runs": runs,
        "summary": {
            "macro_f1_mean": float(macro.mean()), "macro_f1_std": float(macro.std()),
            "micro_f1_mean": float(micro.mean()), "micro_f1_std": float(micro.std()),
            "mean_epoch_seconds": float(np.mean([np.mean(r.epoch_seconds) for r in runs])),
        },
    }


def sweep_grid(cfg: ExperimentConfig, eps_grid=None, lambdas=None) -> list:
    """Grid points as ``(eps_per_eta, lam)``; each ``eps_grid[e]`` lists values for scale ``e + 1``."""
    eps_grid = eps_grid or cfg.sweep_epsilon or [[e] for e in cfg.lift.epsilon[0]]
    lambdas = lambdas or cfg.sweep_lambda or [cfg.lift.lam]
    return [(tuple(combo), lam) for combo in itertools.product(*eps_grid) for lam in lambdas]


def sweep(cfg: ExperimentConfig, eps_grid=None, lambdas=None, graph: HeteroGraph | None = None) -> list:
    """One lift + train per grid point; failures are recorded and the sweep continues."""
    g = graph if graph is not None else load_graph(cfg)
    rows = []
    for point, (eps, lam) in enumerate(sweep_grid(cfg, eps_grid, lambdas)):
        row = {"point": point, "lambda": lam}
        row.update({f"eps_{e + 1}": v for e, v in enumerate(eps)})
        try:
            lift_cfg = LiftConfig.from_level1(K=cfg.lift.K, eps=eps, lam=lam,
                                              ef_enabled=cfg.variant == "SGAT-EF")
            prep = prepare(g, lift_cfg)
            report = train(dataclasses.replace(cfg, lift=lift_cfg), prep)
            for c in prep.bundle.complexes:
                row[f"gamma_{c.eta}"] = gamma_ratio(c.simplices)
                row[f"edges_{c.eta}"] = len(c.simplices[1])
                row[f"triangles_{c.eta}"] = len(c.simplices[2]) if cfg.lift.K >= 2 else 0
            row.update(macro_f1=report.test_macro_f1, micro_f1=report.test_micro_f1,
                       best_epoch=report.best_epoch, error="")
        except Exception as exc:  # noqa: BLE001 - a bad grid point must not end the sweep
            log.warning("sweep point %d failed: %s", point, exc)
            row["error"] = f"{type(exc).__name__}: {exc}"
        rows.append(row)
    return rows


def sweep_columns(rows: list) -> list:
    cols = []
    for row in rows:
        for key in row:
            if key not in cols:
                cols.append(key)
    head = ["point"] + sorted(c for c in cols if c.startswith("eps_")) + ["lambda"]
    mid = [c for prefix in ("gamma_", "edges_", "triangles_") for c in sorted(cols) if c.startswith(prefix)]
    tail = [c for c in ("macro_f1", "micro_f1", "best_epoch", "error") if c in cols]
    return head + mid + tail


def write_sweep_csv(rows: list, path: str) -> None:
    cols = sweep_columns(rows)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=cols, restval="")
        writer.writeheader()
        writer.writerows(rows)


def write_curves_csv(curves: list, path: str) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(CURVE_COLUMNS))
        writer.writeheader()
        writer.writerows(curves)


def write_report(obj, path: str) -> None:
    def default(o):
        if isinstance(o, RunReport):
            return o.to_dict()
        if isinstance(o, np.generic):
            return o.item()
        raise TypeError(type(o).__name__)

    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2, default=default)


def epoch_timing(prep: PreparedData, model: dict, epochs: int = 5, seed: int = 0) -> list:
    """Wall-clock seconds of ``epochs`` full training steps (forward, backward, update)."""
    mcfg = ModelConfig.for_bundle(prep.bundle, prep.graph.num_classes, **model)
    params = init_params(mcfg, seed)
    state = ad.AdamState(params)
    out = []
    for _ in range(epochs):
        start = time.perf_counter()
        for p in params.values():
            p.zero_grad()
        with ad.Tape() as tape:
            loss = model_loss(model_forward(prep.bundle, params, mcfg), prep.labels, prep.masks["train"])
        tape.backward(loss)
        ad.adam_step(params, {k: v.grad for k, v in params.items()}, state)
        out.append(time.perf_counter() - start)
    return out
