import dataclasses

import numpy as np
import pytest

from sgat.lift import LiftConfig, lift
from sgat.oracles import (
    brute_force_path_features, brute_force_simplices, dense_complex, dense_forward_reference, exact_hop_hubs,
    gat_reference_scores,
)
from sgat.synthetic import generic_toy_graph, random_hetero_graph


def test_exact_hop_hubs_on_chain():
    # target 0 - hub 2 - far 3 - hub 4 - target 1
    g = random_hetero_graph(np.random.default_rng(0), n_targets=2, n_hubs=0, n_far=0)
    g = dataclasses.replace(
        g, node_ids=tuple("01234"), node_type=np.array([0, 0, 1, 1, 1]),
        edges=np.array([[0, 2, 0], [2, 3, 0], [3, 4, 0], [4, 1, 0]]), features=np.zeros((5, 1)),
        labels=np.array([0, 1, -1, -1, -1]),
    )
    assert exact_hop_hubs(g, 1) == {0: {2}, 1: {4}}
    assert exact_hop_hubs(g, 2) == {0: {3}, 1: {3}}
    assert exact_hop_hubs(g, 3) == {0: {4}, 1: {2}}


def test_brute_force_size_limit():
    g = random_hetero_graph(np.random.default_rng(0), n_targets=31, n_hubs=2, n_far=0)
    with pytest.raises(ValueError, match="30"):
        brute_force_simplices(g, LiftConfig.from_level1(K=1, eps=(1,), lam=5), 1)


def test_path_oracle_counts_walks():
    g = generic_toy_graph(0, n_targets=3, triples=((0, 1, 2),), n_far=0)
    # targets 0 and 1 share their private hub and the triple hub
    theta, _, count = brute_force_path_features(g, (0, 1), 1)
    assert count == 2
    hubs = [3, 6]  # pair (0, 1) hub and the triple hub
    np.testing.assert_allclose(theta, g.features[hubs].mean(axis=0))


def test_dense_complex_adjacency_symmetric():
    g = generic_toy_graph(1, n_targets=5, triples=((0, 1, 2), (2, 3, 4)), n_far=3)
    dc = dense_complex(lift(g, LiftConfig.from_level1(K=2, eps=(1, 1), lam=8)))
    for mats in dc.adjacency:
        for A in mats:
            np.testing.assert_array_equal(A, A.T)
            np.testing.assert_array_equal(np.diag(A), 1.0)


def test_dense_reference_size_limit():
    g = random_hetero_graph(np.random.default_rng(0), n_targets=12, n_hubs=4, n_far=0)
    dc = dense_complex(lift(g, LiftConfig.from_level1(K=1, eps=(1,), lam=13)))
    with pytest.raises(ValueError, match="10"):
        dense_forward_reference(dc, {}, None)


def test_gat_reference_rows_sum_to_one():
    rng = np.random.default_rng(0)
    A = (rng.random((6, 6)) < 0.4).astype(float)
    A = np.maximum(A, A.T)
    np.fill_diagonal(A, 1.0)
    out = gat_reference_scores(A, rng.standard_normal((6, 3)), rng.standard_normal((3, 4)),
                               rng.standard_normal((3, 4)), heads=2)
    np.testing.assert_allclose(out.sum(axis=1), 1.0, atol=1e-14)
    assert not out[A == 0].any()
