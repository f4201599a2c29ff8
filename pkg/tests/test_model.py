import numpy as np
import pytest

from sgat import autodiff as ad
from sgat.autodiff import Tensor
from sgat.lift import LiftConfig, build_upper_adjacency, lift
from sgat.model import (
    ModelConfig, attention_aggregate, attention_scores, fuse_embeddings, fusion_weights, init_params,
    model_forward, model_loss,
)
from sgat.oracles import dense_complex, dense_forward_reference
from sgat.synthetic import generic_toy_graph, random_hetero_graph

TOY_TRIPLES = ((0, 1, 2), (1, 2, 3), (2, 3, 4), (0, 3, 4))


def _bundle(seed=0, eps=(1, 1), lam=8, K=2):
    g = random_hetero_graph(np.random.default_rng(seed), n_targets=10, n_hubs=8, n_far=4, p_hub=0.35, p_far=0.4)
    return g, lift(g, LiftConfig.from_level1(K=K, eps=eps, lam=lam))


def test_config_validation():
    with pytest.raises(ValueError, match="divisible"):
        ModelConfig(in_dims=(2, 2, 2), num_classes=2, hidden=5, heads=2)
    with pytest.raises(ValueError, match="input widths"):
        ModelConfig(in_dims=(2, 2), num_classes=2, K=2)
    with pytest.raises(ValueError, match="activation"):
        ModelConfig(in_dims=(2, 2, 2), num_classes=2, activation="relu6")


def test_parameter_names_and_shapes():
    g, bundle = _bundle()
    cfg = ModelConfig.for_bundle(bundle, 2, L=2, hidden=8, heads=2, fusion_dim=5)
    params = init_params(cfg, 0)
    d = g.feature_dim
    assert params["l1.e1.k0.W"].shape == (d, 8)
    assert params["l1.e2.k1.Wc"].shape == (d, 8)
    assert params["l2.e1.k0.W"].shape == (8, 8)
    assert params["l2.e1.k0.Wc"].shape == (8, 8)
    assert params["l1.e1.k0.a"].shape == (3, 8)
    assert params["l1.fuse.k1.e2.F"].shape == (8, 5)
    assert params["l1.fuse.k1.e2.q"].shape == (5, 1)
    assert params["cls.W"].shape == (16, 2)
    # the last layer only computes level 0
    assert "l2.e1.k1.W" not in params and "l2.fuse.k1.e1.q" not in params


def test_single_scale_has_no_fusion_params():
    _, bundle = _bundle(eps=(1,))
    params = init_params(ModelConfig.for_bundle(bundle, 2, hidden=4, heads=2), 0)
    assert not any(".fuse." in name for name in params)


def test_init_is_deterministic():
    _, bundle = _bundle()
    cfg = ModelConfig.for_bundle(bundle, 2, hidden=4, heads=2)
    a, b = init_params(cfg, 3), init_params(cfg, 3)
    assert all(np.array_equal(a[k].data, b[k].data) for k in a)


def test_attention_scores_triangle_by_hand():
    levels = [[(0,), (1,), (2,)], [(0, 1), (0, 2), (1, 2)], [(0, 1, 2)]]
    adj = build_upper_adjacency(levels)[0]
    rng = np.random.default_rng(0)
    h, hc = Tensor(rng.standard_normal((3, 2))), Tensor(rng.standard_normal((3, 2)))
    W, Wc, a = (Tensor(rng.standard_normal(s)) for s in [(2, 2), (2, 2), (3, 2)])
    scores, Wh = attention_scores(h, hc, adj, W, Wc, a, heads=1, slope=0.2)
    Whd, Wcd = h.data @ W.data, hc.data @ Wc.data
    for e, (i, j, c) in enumerate(zip(adj.rows, adj.indices, adj.conn)):
        third = Whd[i] if i == j else Wcd[c]
        raw = a.data[0] @ Whd[i] + a.data[1] @ Whd[j] + a.data[2] @ third
        assert scores.data[e, 0] == pytest.approx(raw if raw > 0 else 0.2 * raw, abs=1e-14)


def test_attention_width_mismatch():
    levels = [[(0,), (1,)], [(0, 1)]]
    adj = build_upper_adjacency(levels)[0]
    with pytest.raises(ValueError, match="do not match"):
        attention_scores(Tensor(np.ones((2, 3))), Tensor(np.ones((1, 2))), adj,
                         Tensor(np.ones((2, 2))), Tensor(np.ones((2, 2))), Tensor(np.ones((3, 2))), 1)


def test_self_loop_only_neighborhood_keeps_own_message():
    levels = [[(0,), (1,)], [], []]
    adj = build_upper_adjacency(levels)[0]
    h = Tensor(np.array([[1.0, -2.0], [0.5, 0.5]]))
    W = Tensor(np.eye(2))
    scores, Wh = attention_scores(h, Tensor(np.zeros((0, 2))), adj, W, Tensor(np.eye(2)),
                                  Tensor(np.ones((3, 2))), heads=2)
    z, alpha = attention_aggregate(scores, Wh, adj, heads=2, activation="identity")
    np.testing.assert_array_equal(alpha.data, np.ones((2, 2)))
    np.testing.assert_array_equal(z.data, h.data)


def test_fusion_weights_and_absent_simplices():
    z1 = Tensor(np.ones((2, 3)))
    z2 = Tensor(2 * np.ones((1, 3)))
    q = [Tensor(np.ones((4, 1)))] * 2
    F = [Tensor(np.zeros((3, 4)))] * 2
    b = [Tensor(np.zeros((1, 4)))] * 2
    beta = fusion_weights([z1, z2], q, F, b)
    np.testing.assert_allclose(beta.data, [[0.5], [0.5]])
    fused = fuse_embeddings([z1, z2], beta, [np.array([0, 2]), np.array([2])], 3)
    np.testing.assert_allclose(fused.data, [[0.5] * 3, [0.0] * 3, [1.5] * 3])


def test_forward_shapes_trace_and_determinism():
    g, bundle = _bundle()
    cfg = ModelConfig.for_bundle(bundle, 3, L=2, hidden=8, heads=4, fusion_dim=6)
    params = init_params(cfg, 1)
    trace = {}
    out = model_forward(bundle, params, cfg, trace=trace)
    assert out.shape == (len(bundle.targets), 3)
    assert np.array_equal(out.data, model_forward(bundle, params, cfg).data)
    assert {k for k in trace if k[0] == "alpha"} == {
        ("alpha", 1, e, k) for e in (1, 2) for k in (0, 1)} | {("alpha", 2, e, 0) for e in (1, 2)}
    assert {k for k in trace if k[0] == "beta"} == {("beta", 1, 0), ("beta", 1, 1), ("beta", 2, 0)}


def test_dropout_only_in_training():
    g, bundle = _bundle()
    cfg = ModelConfig.for_bundle(bundle, 2, hidden=4, heads=2, fusion_dim=4, dropout=0.5)
    params = init_params(cfg, 0)
    eval_a = model_forward(bundle, params, cfg).data
    eval_b = model_forward(bundle, params, cfg).data
    train_out = model_forward(bundle, params, cfg, training=True, rng=np.random.default_rng(0)).data
    assert np.array_equal(eval_a, eval_b)
    assert not np.allclose(eval_a, train_out)


@pytest.mark.parametrize("activation", ["elu", "tanh", "identity"])
@pytest.mark.parametrize("L", [1, 2, 3])
def test_matches_dense_reference(activation, L):
    g = generic_toy_graph(L, n_targets=5, triples=TOY_TRIPLES, n_far=3)
    bundle = lift(g, LiftConfig.from_level1(K=2, eps=(1, 2), lam=8))
    cfg = ModelConfig.for_bundle(bundle, 2, L=L, hidden=4, heads=2, fusion_dim=3, activation=activation)
    params = init_params(cfg, 7)
    ref = dense_forward_reference(dense_complex(bundle), params, cfg)
    np.testing.assert_allclose(model_forward(bundle, params, cfg).data, ref, rtol=0, atol=1e-12)


def test_two_layer_gradient_agrees_where_resolvable():
    """Finite differences resolve every coordinate except those at the roundoff floor.

    Some parameters of a two-layer model have (near-)zero derivative, e.g. a
    head's self block when every score of a segment is on one side of the
    leaky kink. There the central difference returns only float64 roundoff
    (about 1e-10), so a purely relative error is meaningless; the absolute
    error is still at that floor.
    """
    g = generic_toy_graph(0, n_targets=5, triples=TOY_TRIPLES, n_far=3)
    bundle = lift(g, LiftConfig.from_level1(K=2, eps=(1, 2), lam=8))
    cfg = ModelConfig.for_bundle(bundle, 2, L=2, hidden=4, heads=2, fusion_dim=4)
    params = init_params(cfg, 0)
    labels, mask = g.labels[bundle.targets], np.arange(len(bundle.targets))
    grad, fd = ad.finite_difference_report(lambda: model_loss(model_forward(bundle, params, cfg), labels, mask),
                                           params)
    resolvable = np.abs(grad) >= 1e-5
    assert resolvable.mean() > 0.9
    assert np.max(np.abs(fd - grad)[resolvable] / np.abs(grad[resolvable])) < 1e-4
    assert np.max(np.abs(fd - grad)) < 1e-9


def test_training_step_reduces_loss():
    g, bundle = _bundle()
    cfg = ModelConfig.for_bundle(bundle, g.num_classes, hidden=8, heads=2, fusion_dim=4)
    params = init_params(cfg, 0)
    labels, mask = g.labels[bundle.targets], np.arange(len(bundle.targets))
    state = ad.AdamState(params, lr=0.01)
    losses = []
    for _ in range(30):
        for p in params.values():
            p.zero_grad()
        with ad.Tape() as tape:
            loss = model_loss(model_forward(bundle, params, cfg), labels, mask)
        tape.backward(loss)
        ad.adam_step(params, {k: v.grad for k, v in params.items()}, state)
        losses.append(loss.item())
    assert losses[-1] < 0.5 * losses[0]
