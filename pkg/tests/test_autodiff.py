import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sgat import autodiff as ad
from sgat.autodiff import Tape, Tensor


def _param(rng, *shape, away_from_zero=False):
    x = rng.standard_normal(shape)
    if away_from_zero:
        x += np.sign(x) * 0.2
    return Tensor(x, requires_grad=True)


def _probe(out, seed=99):
    """Scalar ``sum(out * R)`` with a fixed random ``R`` so every output matters."""
    r = Tensor(np.random.default_rng(seed).standard_normal(out.shape))
    return ad.matmul(ad.mean_rows(ad.mul(out, r)), Tensor(np.ones((out.shape[1], 1))))


def _csr(rng, n, m, max_deg=4):
    lengths = rng.integers(1, max_deg + 1, n)
    indptr = np.concatenate([[0], np.cumsum(lengths)])
    indices = np.concatenate([np.sort(rng.choice(m, size=k, replace=k > m)) for k in lengths])
    return indptr, indices


OPS = {
    "matmul": lambda rng: ([_param(rng, 3, 4), _param(rng, 4, 2)], lambda a, b: a @ b),
    "add": lambda rng: ([_param(rng, 3, 4), _param(rng, 1, 4)], lambda a, b: a + b),
    "mul": lambda rng: ([_param(rng, 3, 4), _param(rng, 3, 1)], lambda a, b: ad.mul(a, b)),
    "scale": lambda rng: ([_param(rng, 2, 3)], lambda a: ad.scale(a, -2.5)),
    "concat0": lambda rng: ([_param(rng, 2, 3), _param(rng, 4, 3)], lambda a, b: ad.concat([a, b], axis=0)),
    "concat1": lambda rng: ([_param(rng, 2, 3), _param(rng, 2, 1)], lambda a, b: ad.concat([a, b], axis=1)),
    "gather": lambda rng: ([_param(rng, 4, 3)], lambda a: ad.gather(a, [3, 0, 0, 2, 1, 3])),
    "scatter_sum": lambda rng: ([_param(rng, 5, 2)], lambda a: ad.scatter_sum(a, [1, 0, 1, 3, 1], 4)),
    "leaky_relu": lambda rng: ([_param(rng, 4, 3, away_from_zero=True)], lambda a: ad.leaky_relu(a, 0.2)),
    "elu": lambda rng: ([_param(rng, 4, 3, away_from_zero=True)], ad.elu),
    "tanh": lambda rng: ([_param(rng, 4, 3)], ad.tanh),
    "mean_rows": lambda rng: ([_param(rng, 5, 3)], ad.mean_rows),
    "block_sum": lambda rng: ([_param(rng, 3, 6)], lambda a: ad.block_sum(a, 3)),
    "repeat_cols": lambda rng: ([_param(rng, 3, 2)], lambda a: ad.repeat_cols(a, 3)),
    "segment_softmax": lambda rng: (
        [_param(rng, 7, 2)], lambda a: ad.segment_softmax(a, [0, 3, 4, 7])),
    "spmm": lambda rng: (
        [_param(rng, 9, 2), _param(rng, 5, 6)],
        lambda w, x: ad.spmm(w, x, *_csr(np.random.default_rng(1), 4, 5)),
    ),
    "cross_entropy": lambda rng: (
        [_param(rng, 5, 3)], lambda z: ad.cross_entropy(z, [0, 2, 1, 1, 0], [0, 1, 3, 4])),
}


@pytest.mark.parametrize("seed", range(5))
@pytest.mark.parametrize("name", sorted(OPS))
def test_op_gradients(name, seed):
    params, fn = OPS[name](np.random.default_rng(seed))
    if name == "spmm":
        indptr, _ = _csr(np.random.default_rng(1), 4, 5)
        params[0] = _param(np.random.default_rng(seed), int(indptr[-1]), 2)

    def f():
        out = fn(*params)
        return out if out.shape == (1, 1) else _probe(out)

    assert ad.grad_check(f, params) < 1e-5


def test_matmul_rel_error_tight():
    rng = np.random.default_rng(0)
    a, b = _param(rng, 3, 4), _param(rng, 4, 2)
    assert ad.grad_check(lambda: _probe(a @ b), [a, b]) < 1e-6


def test_matmul_identity_and_scalar():
    b = Tensor(np.arange(6.0).reshape(2, 3), requires_grad=True)
    eye = Tensor(np.eye(2), requires_grad=True)
    with Tape() as tape:
        c = eye @ b
        loss = _probe(c)
    tape.backward(loss)
    np.testing.assert_array_equal(c.data, b.data)
    x, y = Tensor(3.0, requires_grad=True), Tensor(-2.0, requires_grad=True)
    with Tape() as tape:
        z = x @ y
    tape.backward(z)
    assert x.grad[0, 0] == -2.0 and y.grad[0, 0] == 3.0


def test_matmul_shape_error():
    with pytest.raises(ValueError, match=r"\(2, 3\) @ \(2, 3\)"):
        Tensor(np.ones((2, 3))) @ Tensor(np.ones((2, 3)))


def test_fan_out_accumulates():
    a = Tensor([[2.0]], requires_grad=True)
    with Tape() as tape:
        loss = ad.mul(a, a) + a
    tape.backward(loss)
    assert a.grad[0, 0] == 5.0


def test_backward_twice_rejected():
    a = Tensor([[1.0]], requires_grad=True)
    with Tape() as tape:
        loss = ad.scale(a, 2.0)
    tape.backward(loss)
    with pytest.raises(RuntimeError, match="already"):
        tape.backward(loss)


def test_ops_outside_tape_not_recorded():
    a = Tensor([[1.0]], requires_grad=True)
    ad.scale(a, 2.0)
    with Tape() as tape:
        pass
    assert tape.entries == []


def test_segment_softmax_examples():
    out = ad.segment_softmax(Tensor([[5.0], [0.0], [0.0], [0.0], [1000.0], [1001.0]]), [0, 1, 4, 6])
    np.testing.assert_allclose(out.data[:, 0], [1.0, 1 / 3, 1 / 3, 1 / 3, 0.2689414, 0.7310586], atol=1e-6)
    assert np.isfinite(out.data).all()


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 10_000))
def test_segment_softmax_sums_to_one(seed):
    rng = np.random.default_rng(seed)
    lengths = rng.integers(1, 6, rng.integers(1, 8))
    indptr = np.concatenate([[0], np.cumsum(lengths)])
    out = ad.segment_softmax(Tensor(50 * rng.standard_normal((indptr[-1], 3))), indptr)
    np.testing.assert_allclose(np.add.reduceat(out.data, indptr[:-1], axis=0), 1.0, atol=1e-12)


def test_cross_entropy_values():
    assert ad.cross_entropy(Tensor(np.zeros((4, 3))), [0, 1, 2, 0], [0, 1, 2, 3]).item() == pytest.approx(np.log(3))
    z = np.zeros((1, 3))
    z[0, 1] = 1e4
    assert ad.cross_entropy(Tensor(z), [1], [0]).item() == pytest.approx(0.0, abs=1e-12)
    with pytest.raises(ValueError, match="empty"):
        ad.cross_entropy(Tensor(z), [1], [])


def test_cross_entropy_gradient_only_on_mask():
    z = Tensor(np.random.default_rng(0).standard_normal((5, 3)), requires_grad=True)
    with Tape() as tape:
        loss = ad.cross_entropy(z, [0, 1, 2, 0, 1], [1, 3])
    tape.backward(loss)
    assert not z.grad[[0, 2, 4]].any() and z.grad[[1, 3]].any()


@settings(max_examples=50, deadline=None)
@given(st.permutations(list(range(7))))
def test_scatter_gather_permutation_is_identity(perm):
    x = Tensor(np.random.default_rng(0).standard_normal((7, 3)))
    back = ad.scatter_sum(ad.gather(x, perm), perm, 7)
    np.testing.assert_array_equal(back.data, x.data)


def test_dropout_scales_and_masks():
    x = Tensor(np.ones((200, 50)), requires_grad=True)
    y = ad.dropout(x, 0.5, np.random.default_rng(0))
    assert set(np.unique(y.data)) <= {0.0, 2.0}
    assert abs(y.data.mean() - 1.0) < 0.05
    assert ad.dropout(x, 0.0, None) is x


def test_grad_check_quadratic():
    theta = Tensor(np.random.default_rng(0).standard_normal((3, 2)), requires_grad=True)

    def f():
        sq = ad.mul(theta, theta)
        return ad.matmul(ad.matmul(Tensor(np.ones((1, 3))), sq), Tensor(np.ones((2, 1))))

    assert ad.grad_check(f, [theta]) < 1e-8


def test_grad_check_catches_corrupted_backward():
    a = Tensor(np.random.default_rng(0).standard_normal((3, 3)) + 3.0, requires_grad=True)

    def broken_square(t):
        return ad._result(t.data ** 2, (t,), lambda g: (g * t.data,))  # missing factor 2

    assert ad.grad_check(lambda: _probe(broken_square(a)), [a]) > 1e-2


def test_finite_difference_report_shapes():
    a = Tensor(np.ones((2, 3)), requires_grad=True)
    b = Tensor(np.ones((3, 1)), requires_grad=True)
    g, fd = ad.finite_difference_report(lambda: _probe(a @ b), {"a": a, "b": b})
    assert g.shape == fd.shape == (9,)


def test_adam_zero_gradient_no_decay():
    p = {"w": Tensor(np.arange(4.0).reshape(2, 2), requires_grad=True)}
    before = p["w"].data.copy()
    state = ad.AdamState(p, weight_decay=0.0)
    for _ in range(3):
        ad.adam_step(p, {"w": np.zeros((2, 2))}, state)
    np.testing.assert_array_equal(p["w"].data, before)


def test_adam_constant_gradient_step_is_lr():
    p = {"w": Tensor(np.zeros((1, 3)), requires_grad=True)}
    state = ad.AdamState(p, lr=0.01)
    g = np.array([[0.3, -5.0, 1e-3]])
    for _ in range(200):
        prev = p["w"].data.copy()
        ad.adam_step(p, {"w": g}, state)
    np.testing.assert_allclose(prev - p["w"].data, 0.01 * np.sign(g), rtol=1e-4)


def test_adam_weight_decay_modes():
    w0 = np.full((1, 1), 2.0)
    dec = {"w": Tensor(w0.copy())}
    coupled = {"w": Tensor(w0.copy())}
    ad.adam_step(dec, {"w": np.zeros((1, 1))}, ad.AdamState(dec, lr=0.1, weight_decay=0.5))
    ad.adam_step(coupled, {"w": np.zeros((1, 1))},
                 ad.AdamState(coupled, lr=0.1, weight_decay=0.5, decoupled=False))
    assert dec["w"].data[0, 0] == pytest.approx(2.0 - 0.1 * 0.5 * 2.0)
    # coupled decay enters the moments; the first step moves by lr
    assert coupled["w"].data[0, 0] == pytest.approx(2.0 - 0.1, rel=1e-6)


def test_adam_deterministic():
    runs = []
    for _ in range(2):
        rng = np.random.default_rng(4)
        p = {"w": Tensor(rng.standard_normal((3, 3)))}
        state = ad.AdamState(p, weight_decay=1e-3)
        for _ in range(10):
            ad.adam_step(p, {"w": rng.standard_normal((3, 3))}, state)
        runs.append(p["w"].data.copy())
    assert np.array_equal(runs[0], runs[1])


def test_adam_rejects_nonfinite():
    p = {"layer.W": Tensor(np.zeros((1, 2)))}
    with pytest.raises(FloatingPointError, match="layer.W"):
        ad.adam_step(p, {"layer.W": np.array([[np.nan, 0.0]])}, ad.AdamState(p))


def test_checkpoint_round_trip(tmp_path):
    params = {"a": np.arange(6.0).reshape(2, 3), "b.c": np.array([[np.pi]])}
    path = tmp_path / "p.ckpt"
    ad.save_checkpoint(str(path), params)
    back = ad.load_checkpoint(str(path))
    assert list(back) == ["a", "b.c"]
    for k in params:
        assert np.array_equal(back[k], params[k])


def test_checkpoint_byte_layout(tmp_path):
    path = tmp_path / "p.ckpt"
    ad.save_checkpoint(str(path), {"w": np.array([[1.5, -2.0]])})
    raw = path.read_bytes()
    assert raw[:8] == b"SGATCKPT"
    assert struct.unpack("<II", raw[8:16]) == (1, 1)
    assert struct.unpack("<I", raw[16:20]) == (1,) and raw[20:21] == b"w"
    assert struct.unpack("<qq", raw[21:37]) == (1, 2)
    assert struct.unpack("<2d", raw[37:]) == (1.5, -2.0)


def test_checkpoint_bad_magic(tmp_path):
    path = tmp_path / "x"
    path.write_bytes(b"NOTACKPT" + bytes(8))
    with pytest.raises(ValueError, match="not a checkpoint"):
        ad.load_checkpoint(str(path))
