"""Knowledge encoder: propagation semantics, equivariance, gradients."""

import numpy as np
import pytest

from akgp.gnn import GnnParams, encode_knowledge, gnn_layer
from akgp.kg import KnowledgeGraph, build_graph
from akgp.tensor import Tensor, fd_check, from_array, mul, sum_all, uniform, xavier, zeros


def small_params(d_k, d_h, d_e, seed=0, trainable=False):
    p = GnnParams(
        w1=xavier([d_k, d_h], seed),
        b1=zeros([d_h]),
        w2=xavier([d_h, d_e], seed + 1),
        b2=zeros([d_e]),
    )
    if trainable:
        for _, t in p.named():
            t.requires_grad_(True)
    return p


def graph_with_features(triples, features):
    g = build_graph(triples, feature_dim=features.shape[1], seed=0)
    g.features = Tensor(np.asarray(features, dtype=np.float64))
    return g


def test_layer_identity_propagation():
    eye = from_array(np.eye(3))
    h = uniform([3, 4], -1, 1, 5)
    out = gnn_layer(eye, h, from_array(np.eye(4)), zeros([4]), "identity")
    assert np.allclose(out.data, h.data)


def test_layer_two_node_mean():
    a = from_array([[0.5, 0.5], [0.5, 0.5]])
    h = from_array([[2.0, 0.0], [0.0, 2.0]])
    out = gnn_layer(a, h, from_array(np.eye(2)), zeros([2]), "identity")
    assert np.allclose(out.data, [[1.0, 1.0], [1.0, 1.0]])


def test_layer_gradient_matches_fd():
    a = from_array([[0.5, 0.5], [0.5, 0.5]])
    h = uniform([2, 3], -1, 1, 2)
    b = zeros([4])

    def f(w):
        out = gnn_layer(a, h, w, b, "relu")
        return sum_all(mul(out, out))

    report = fd_check(f, uniform([3, 4], -1, 1, 3))
    assert report.passed, str(report)


def test_zero_features_give_equal_rows():
    triples = [("a", "r", "b"), ("b", "r", "c")]
    g = graph_with_features(triples, np.zeros((3, 4)))
    p = small_params(4, 5, 6, seed=2)
    p.b1 = uniform([5], -1, 1, 7)
    p.b2 = uniform([6], -1, 1, 8)
    out = encode_knowledge(g, p)
    expected = np.maximum(p.b1.data, 0.0) @ p.w2.data + p.b2.data
    for row in out.data:
        assert np.allclose(row, expected, atol=1e-12)


def test_permutation_equivariance():
    triples = [("a", "r", "b"), ("b", "r", "c"), ("c", "r", "d"), ("a", "r", "d")]
    g = build_graph(triples, feature_dim=5, seed=3)
    p = small_params(5, 6, 4, seed=4)
    base = encode_knowledge(g, p).data

    perm = np.array([2, 0, 3, 1])
    pm = np.eye(4)[perm]
    permuted = KnowledgeGraph(
        node_ids=[g.node_ids[i] for i in perm],
        node_index={g.node_ids[i]: row for row, i in enumerate(perm)},
        triples=g.triples,
        adjacency=Tensor(pm @ g.adjacency.data @ pm.T),
        features=Tensor(g.features.data[perm]),
    )
    assert np.allclose(encode_knowledge(permuted, p).data, base[perm], atol=1e-9)


def test_isolated_identical_nodes_match():
    g = build_graph([("a", "r", "a"), ("b", "r", "b")], feature_dim=3, seed=0)
    g.features = Tensor(np.tile(g.features.data[0], (2, 1)))
    out = encode_knowledge(g, small_params(3, 4, 5, seed=6))
    assert np.allclose(out.data[0], out.data[1], atol=1e-12)


def test_chain_matches_step_by_step_oracle():
    triples = [("a", "r", "b"), ("b", "r", "c")]
    g = build_graph(triples, feature_dim=4, seed=9)
    p = small_params(4, 5, 3, seed=10)

    a, x = g.adjacency.data, g.features.data
    h1 = np.maximum(a @ x @ p.w1.data + p.b1.data, 0.0)
    oracle = a @ h1 @ p.w2.data + p.b2.data
    assert np.allclose(encode_knowledge(g, p).data, oracle, atol=1e-12)


def test_full_gradient_paths_pass_fd():
    triples = [("a", "r", "b"), ("b", "r", "c")]
    g = build_graph(triples, feature_dim=3, seed=11)
    p = small_params(3, 4, 3, seed=12)

    def loss_wrt_features(x):
        probe = KnowledgeGraph(g.node_ids, g.node_index, g.triples, g.adjacency, x)
        out = encode_knowledge(probe, p)
        return sum_all(mul(out, out))

    assert fd_check(loss_wrt_features, Tensor(g.features.data.copy())).passed

    def loss_wrt_w2(w):
        probe = GnnParams(w1=p.w1, b1=p.b1, w2=w, b2=p.b2)
        out = encode_knowledge(g, probe)
        return sum_all(mul(out, out))

    assert fd_check(loss_wrt_w2, Tensor(p.w2.data.copy())).passed


def test_bad_activation_rejected():
    with pytest.raises(ValueError):
        gnn_layer(from_array(np.eye(2)), zeros([2, 2]), zeros([2, 2]), zeros([2]), "gelu")
