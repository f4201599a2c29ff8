"""Tape-based reverse-mode differentiation over dense 2-D float64 arrays.

Operations executed inside a ``with Tape() as tape:`` block are recorded;
outside any tape they only compute values. ``tape.backward(loss)`` walks the
record in reverse once, accumulating into ``Tensor.grad``.
"""
from __future__ import annotations

import struct

import numpy as np

from . import kernels

_ACTIVE: list = []


class Tensor:
    """A 2-D float64 array with an optional gradient buffer."""

    __slots__ = ("data", "grad", "requires_grad", "node", "name")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        data = np.asarray(data, dtype=np.float64)
        if data.ndim == 0:
            data = data.reshape(1, 1)
        elif data.ndim == 1:
            data = data.reshape(1, -1)
        elif data.ndim != 2:
            raise ValueError(f"tensors are 2-D, got shape {data.shape}")
        self.data = data
        self.grad = None
        self.requires_grad = requires_grad
        self.node = None
        self.name = name

    @property
    def shape(self) -> tuple:
        return self.data.shape

    def item(self) -> float:
        return float(self.data.reshape(-1)[0])

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self):
        label = f" {self.name!r}" if self.name else ""
        return f"Tensor{label}(shape={self.shape}, requires_grad={self.requires_grad})"

    def __add__(self, other):
        return add(self, _wrap(other))

    __radd__ = __add__

    def __sub__(self, other):
        return add(self, scale(_wrap(other), -1.0))

    def __mul__(self, other):
        if np.isscalar(other):
            return scale(self, float(other))
        return mul(self, other)

    __rmul__ = __mul__

    def __matmul__(self, other):
        return matmul(self, other)


def _wrap(x):
    return x if isinstance(x, Tensor) else Tensor(x)


class Tape:
    """Ordered record of operations; single-use."""

    def __init__(self):
        self.entries: list = []
        self._done = False

    def __enter__(self):
        _ACTIVE.append(self)
        return self

    def __exit__(self, *exc):
        _ACTIVE.remove(self)
        return False

    def record(self, out: Tensor, inputs: tuple, backward) -> None:
        out.node = len(self.entries)
        self.entries.append((out, inputs, backward))

    def backward(self, loss: Tensor) -> None:
        if self._done:
            raise RuntimeError("backward() already ran on this tape; record a new one")
        if loss.shape != (1, 1):
            raise ValueError(f"backward needs a scalar (1, 1) tensor, got {loss.shape}")
        self._done = True
        loss.grad = np.ones((1, 1))
        for out, inputs, backward in reversed(self.entries):
            if out.grad is None:
                continue
            for inp, g in zip(inputs, backward(out.grad)):
                if g is None or not inp.requires_grad:
                    continue
                inp.grad = g if inp.grad is None else inp.grad + g


def _result(data, inputs, backward) -> Tensor:
    requires = any(t.requires_grad for t in inputs)
    out = Tensor(data, requires_grad=requires)
    if requires and _ACTIVE:
        _ACTIVE[-1].record(out, inputs, backward)
    return out


def _unbroadcast(g, shape):
    if g.shape == shape:
        return g
    if shape[0] == 1 and g.shape[0] != 1:
        g = g.sum(axis=0, keepdims=True)
    if shape[1] == 1 and g.shape[1] != 1:
        g = g.sum(axis=1, keepdims=True)
    return g


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.shape[1] != b.shape[0]:
        raise ValueError(f"matmul shape mismatch: {a.shape} @ {b.shape}")
    return _result(a.data @ b.data, (a, b), lambda g: (g @ b.data.T, a.data.T @ g))


def add(a: Tensor, b: Tensor) -> Tensor:
    try:
        out = a.data + b.data
    except ValueError:
        raise ValueError(f"add shape mismatch: {a.shape} + {b.shape}") from None
    return _result(out, (a, b), lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)))


def mul(a: Tensor, b: Tensor) -> Tensor:
    try:
        out = a.data * b.data
    except ValueError:
        raise ValueError(f"mul shape mismatch: {a.shape} * {b.shape}") from None
    return _result(
        out, (a, b),
        lambda g: (_unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)),
    )


def scale(a: Tensor, c: float) -> Tensor:
    return _result(a.data * c, (a,), lambda g: (g * c,))


def concat(tensors, axis: int = 1) -> Tensor:
    tensors = tuple(tensors)
    other = 1 - axis
    if len({t.shape[other] for t in tensors}) > 1:
        raise ValueError(f"concat shape mismatch along axis {other}: {[t.shape for t in tensors]}")
    sizes = np.cumsum([t.shape[axis] for t in tensors])[:-1]
    return _result(
        np.concatenate([t.data for t in tensors], axis=axis), tensors,
        lambda g: tuple(np.split(g, sizes, axis=axis)),
    )


def gather(a: Tensor, index) -> Tensor:
    """Rows ``a[index]``."""
    index = np.asarray(index, dtype=np.int64)
    n = a.shape[0]
    return _result(a.data[index], (a,), lambda g: (kernels.scatter_add_rows(g, index, n),))


def scatter_sum(a: Tensor, index, n: int) -> Tensor:
    """``out[index[r]] += a[r]`` into ``n`` zero rows."""
    index = np.asarray(index, dtype=np.int64)
    if len(index) != a.shape[0]:
        raise ValueError(f"scatter_sum index length {len(index)} != rows {a.shape[0]}")
    return _result(kernels.scatter_add_rows(a.data, index, n), (a,), lambda g: (g[index],))


def leaky_relu(a: Tensor, slope: float = 0.2) -> Tensor:
    factor = np.where(a.data > 0, 1.0, slope)
    return _result(a.data * factor, (a,), lambda g: (g * factor,))


def elu(a: Tensor) -> Tensor:
    neg = np.expm1(np.minimum(a.data, 0.0))
    out = np.where(a.data > 0, a.data, neg)
    deriv = np.where(a.data > 0, 1.0, neg + 1.0)
    return _result(out, (a,), lambda g: (g * deriv,))


def tanh(a: Tensor) -> Tensor:
    out = np.tanh(a.data)
    return _result(out, (a,), lambda g: (g * (1.0 - out * out),))


def mean_rows(a: Tensor) -> Tensor:
    """Column means, shape ``(1, cols)``; zeros for an empty input."""
    n = a.shape[0]
    if n == 0:
        return _result(np.zeros((1, a.shape[1])), (a,), lambda g: (np.zeros(a.shape),))
    return _result(a.data.mean(axis=0, keepdims=True), (a,), lambda g: (np.repeat(g / n, n, axis=0),))


def block_sum(a: Tensor, blocks: int) -> Tensor:
    """Sum each run of ``cols / blocks`` consecutive columns: ``(n, P*F) -> (n, P)``."""
    n, cols = a.shape
    if cols % blocks:
        raise ValueError(f"block_sum: {cols} columns not divisible by {blocks}")
    width = cols // blocks
    return _result(
        a.data.reshape(n, blocks, width).sum(axis=2), (a,),
        lambda g: (np.repeat(g, width, axis=1),),
    )


def repeat_cols(a: Tensor, width: int) -> Tensor:
    """Repeat each column ``width`` times: ``(n, P) -> (n, P*width)``."""
    n, P = a.shape
    return _result(
        np.repeat(a.data, width, axis=1), (a,),
        lambda g: (g.reshape(n, P, width).sum(axis=2),),
    )


def segment_softmax(scores: Tensor, indptr) -> Tensor:
    """Softmax of each column within consecutive row segments given by ``indptr``."""
    indptr = np.asarray(indptr, dtype=np.int64)
    lengths = np.diff(indptr)
    assert (lengths > 0).all(), "segment_softmax: empty segment"
    if indptr[-1] != scores.shape[0]:
        raise ValueError(f"segments cover {indptr[-1]} rows, scores have {scores.shape[0]}")
    rows = np.repeat(np.arange(len(lengths)), lengths)
    peak = kernels.segment_max(scores.data, indptr)
    ex = np.exp(scores.data - peak[rows])
    out = ex / kernels.segment_sum(ex, indptr)[rows]

    def backward(g):
        dot = kernels.segment_sum(out * g, indptr)[rows]
        return (out * (g - dot),)

    return _result(out, (scores,), backward)


def spmm(weights: Tensor, x: Tensor, indptr, indices) -> Tensor:
    """Per-head weighted neighbor sum over a CSR pattern.

    ``weights`` is ``(nnz, P)``, ``x`` is ``(m, P*F)``; row ``i`` of the output
    is ``sum_e weights[e, p] * x[indices[e], head p]`` over the entries of row i.
    """
    indptr = np.asarray(indptr, dtype=np.int64)
    indices = np.asarray(indices, dtype=np.int64)
    if x.shape[1] % weights.shape[1]:
        raise ValueError(f"spmm: {x.shape[1]} columns not divisible by {weights.shape[1]} heads")
    out = kernels.csr_spmm(indptr, indices, weights.data, x.data)
    return _result(
        out, (weights, x),
        lambda g: kernels.csr_spmm_backward(indptr, indices, weights.data, x.data, g),
    )


def dropout(a: Tensor, rate: float, rng: np.random.Generator) -> Tensor:
    if rate <= 0.0:
        return a
    keep = (rng.random(a.shape) >= rate) / (1.0 - rate)
    return _result(a.data * keep, (a,), lambda g: (g * keep,))


def cross_entropy(logits: Tensor, labels, mask) -> Tensor:
    """Mean negative log-likelihood over the rows in ``mask``."""
    mask = np.asarray(mask, dtype=np.int64)
    if len(mask) == 0:
        raise ValueError("cross_entropy: empty mask")
    labels = np.asarray(labels, dtype=np.int64)
    z = logits.data[mask]
    z = z - z.max(axis=1, keepdims=True)
    logp = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
    picked = labels[mask]
    loss = -logp[np.arange(len(mask)), picked].mean()

    def backward(g):
        probs = np.exp(logp)
        probs[np.arange(len(mask)), picked] -= 1.0
        full = np.zeros(logits.shape)
        np.add.at(full, mask, probs * (g[0, 0] / len(mask)))
        return (full,)

    return _result(np.array([[loss]]), (logits,), backward)


class AdamState:
    """Moment buffers and hyperparameters for :func:`adam_step`."""

    def __init__(self, params: dict, lr=0.005, beta1=0.9, beta2=0.999, eps=1e-8,
                 weight_decay=0.0, decoupled=True):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.weight_decay = weight_decay
        self.decoupled = decoupled
        self.step = 0
        self.m = {k: np.zeros_like(_array(p)) for k, p in params.items()}
        self.v = {k: np.zeros_like(_array(p)) for k, p in params.items()}


def _array(p):
    return p.data if isinstance(p, Tensor) else p


def adam_step(params: dict, grads: dict, state: AdamState) -> None:
    """One bias-corrected Adam update, in place on ``params``.

    Missing gradients count as zero. With ``decoupled`` the weight decay
    shrinks parameters directly; otherwise it is added to the gradient.
    """
    for name, g in grads.items():
        if g is not None and not np.all(np.isfinite(g)):
            raise FloatingPointError(f"non-finite gradient for parameter {name!r}")
    state.step += 1
    t = state.step
    c1 = 1.0 - state.beta1 ** t
    c2 = 1.0 - state.beta2 ** t
    for name, p in params.items():
        w = _array(p)
        g = grads.get(name)
        g = np.zeros_like(w) if g is None else g
        if g.shape != w.shape:
            raise ValueError(f"gradient for {name!r} has shape {g.shape}, parameter {w.shape}")
        if state.weight_decay and not state.decoupled:
            g = g + state.weight_decay * w
        m = state.m[name]
        v = state.v[name]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * g * g
        if state.weight_decay and state.decoupled:
            w -= state.lr * state.weight_decay * w
        w -= state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)


def finite_difference_report(f, params, step: float = 1e-6):
    """Tape gradient and central difference for every parameter coordinate.

    ``f`` takes no arguments and returns a scalar tensor built from ``params``.
    Returns two flat arrays ``(tape, fd)`` in parameter order.
    """
    params = list(params.values()) if isinstance(params, dict) else list(params)
    for p in params:
        p.zero_grad()
    with Tape() as tape:
        loss = f()
    tape.backward(loss)
    analytic, numeric = [], []
    for p in params:
        g = np.zeros(p.shape) if p.grad is None else p.grad
        analytic.append(g.reshape(-1).copy())
        flat = p.data.reshape(-1)
        fd = np.empty(flat.size)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + step
            up = f().item()
            flat[i] = orig - step
            down = f().item()
            flat[i] = orig
            fd[i] = (up - down) / (2.0 * step)
        numeric.append(fd)
    if not analytic:
        return np.empty(0), np.empty(0)
    return np.concatenate(analytic), np.concatenate(numeric)


def grad_check(f, params, step: float = 1e-6) -> float:
    """Largest ``|fd - tape| / (|tape| + 1e-8)`` over every parameter coordinate.

    ``f`` takes no arguments and returns a scalar tensor built from ``params``.
    """
    g, fd = finite_difference_report(f, params, step)
    if g.size == 0:
        return 0.0
    return float(np.max(np.abs(fd - g) / (np.abs(g) + 1e-8)))


_MAGIC = b"SGATCKPT"


def save_checkpoint(path: str, params: dict) -> None:
    """Write named tensors.

    Layout (little-endian): 8-byte magic ``SGATCKPT``, uint32 version (1),
    uint32 count, then per tensor: uint32 name length, UTF-8 name, int64 rows,
    int64 cols, rows*cols float64 in row-major order.
    """
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<II", 1, len(params)))
        for name, p in params.items():
            arr = np.ascontiguousarray(_array(p), dtype="<f8")
            if arr.ndim != 2:
                arr = arr.reshape(1, -1)
            raw = name.encode("utf-8")
            fh.write(struct.pack("<I", len(raw)))
            fh.write(raw)
            fh.write(struct.pack("<qq", *arr.shape))
            fh.write(arr.tobytes())


def load_checkpoint(path: str) -> dict:
    with open(path, "rb") as fh:
        if fh.read(8) != _MAGIC:
            raise ValueError(f"{path}: not a checkpoint file")
        version, count = struct.unpack("<II", fh.read(8))
        if version != 1:
            raise ValueError(f"{path}: unsupported checkpoint version {version}")
        out = {}
        for _ in range(count):
            (length,) = struct.unpack("<I", fh.read(4))
            name = fh.read(length).decode("utf-8")
            rows, cols = struct.unpack("<qq", fh.read(16))
            out[name] = np.frombuffer(fh.read(8 * rows * cols), dtype="<f8").reshape(rows, cols).copy()
    return out
