import numpy as np
import pytest

import oracles
from ndthash.checks import random_tree
from ndthash.data import CONTINUOUS, Dataset, gen_blobs, gen_two_moons, one_hot
from ndthash.errors import InvalidArgument, LabelKindMismatch
from ndthash.grad import gradcheck_fn
from ndthash.losses import hashing_classification_loss, node_gini_loss, node_split_stats
from ndthash.net import DenseLayer, Network
from ndthash.tree import (NDTNode, NDTree, TreeConfig, global_fine_tune, global_loss,
                          global_loss_and_grad, grow_greedy, hard_leaf_index,
                          leaf_memberships, predict, refit_leaves, tree_accuracy)


def _stump(w, b, d=2):
    net = Network([DenseLayer(np.atleast_2d(w), [b])])
    return NDTree(NDTNode((0, 0), net, NDTNode((1, 0)), NDTNode((1, 1))), "one_hot_class", 2, d)


def _bfs_phis(tree, x):
    """Per-sample node outputs in breadth-first order for a complete tree."""
    nodes = sorted(tree.internal_nodes(), key=lambda n: (2 ** n.node_id[0] + n.node_id[1]))
    return np.column_stack([n.split_net.forward(x)[:, 0] for n in nodes])


def test_depth_one_columns():
    tree = _stump([1.0, -2.0], 0.3)
    x = np.random.default_rng(0).normal(size=(5, 2))
    phi = tree.root.split_net.forward(x)[:, 0]
    np.testing.assert_array_equal(leaf_memberships(tree, x), np.column_stack([phi, 1 - phi]))


def test_all_half_depth_two():
    zero = lambda: Network([DenseLayer(np.zeros((1, 2)), [0.0])])
    root = NDTNode((0, 0), zero(),
                   NDTNode((1, 0), zero(), NDTNode((2, 0)), NDTNode((2, 1))),
                   NDTNode((1, 1), zero(), NDTNode((2, 2)), NDTNode((2, 3))))
    tree = NDTree(root, "one_hot_class", 2, 2)
    np.testing.assert_array_equal(leaf_memberships(tree, np.ones((3, 2))), 0.25)


def test_random_depth_three_matches_path_enumeration():
    rng = np.random.default_rng(1)
    tree = random_tree(rng, 3, 3)
    x = rng.normal(size=(8, 3))
    m = leaf_memberships(tree, x)
    np.testing.assert_allclose(m.sum(axis=1), 1.0, atol=1e-9)
    expect = np.array([oracles.tree_leaf_paths(row) for row in _bfs_phis(tree, x).tolist()])
    np.testing.assert_allclose(m, expect, atol=1e-12, rtol=0)


def test_separable_blobs_single_split():
    ds = gen_blobs([(-3, 0), (3, 0)], 30, 0.5, 0)
    tree = grow_greedy(ds, TreeConfig(max_depth=1))
    assert tree.depth == 1
    phi = tree.root.split_net.forward(ds.features)[:, 0]
    assert node_gini_loss(node_split_stats(phi, ds.labels)) <= 1e-3
    assert tree_accuracy(tree, ds) == 1.0


def test_depth_zero_predicts_global_mode_and_mean():
    ds = Dataset(np.zeros((5, 2)), one_hot([0, 1, 1, 1, 0], 2), "one_hot_class")
    tree = grow_greedy(ds, TreeConfig(max_depth=0))
    assert len(tree.leaves()) == 1 and tree.param_count() == 0
    np.testing.assert_array_equal(predict(tree, np.ones((2, 2))), [1, 1])
    reg = Dataset(np.zeros((4, 1)), np.array([1.0, 2.0, 3.0, 6.0]), CONTINUOUS)
    tree = grow_greedy(reg, TreeConfig(max_depth=0, criterion="variance"))
    np.testing.assert_allclose(predict(tree, np.zeros((1, 1))), [[3.0]])


def test_criterion_label_mismatch():
    with pytest.raises(LabelKindMismatch):
        grow_greedy(gen_two_moons(10, 0.1, 0), TreeConfig(criterion="variance"))
    with pytest.raises(InvalidArgument):
        TreeConfig(criterion="hinge")


def test_min_mass_and_pure_nodes_stop():
    ds = gen_blobs([(-3, 0), (3, 0)], 20, 0.3, 1)
    tree = grow_greedy(ds, TreeConfig(max_depth=4))
    # both children of the first split are pure, so growth stops at depth 1
    assert tree.depth == 1


def test_global_gradient_matches_finite_differences():
    rng = np.random.default_rng(2)
    tree = random_tree(rng, 2, 2)
    ds = Dataset(rng.normal(size=(9, 2)), one_hot(rng.integers(0, 3, 9), 3), "one_hot_class")
    for objective in ("gini", "info_gain"):
        _, g = global_loss_and_grad(tree, ds, objective)
        rep = gradcheck_fn(lambda v: global_loss(tree.unflatten(v), ds, objective), g,
                           tree.flatten())
        assert rep.max_rel_err <= 1e-5


def test_global_variance_gradient():
    rng = np.random.default_rng(3)
    tree = random_tree(rng, 2, 2)
    ds = Dataset(rng.normal(size=(7, 2)), rng.normal(size=(7, 2)), CONTINUOUS)
    _, g = global_loss_and_grad(tree, ds, "variance")
    rep = gradcheck_fn(lambda v: global_loss(tree.unflatten(v), ds, "variance"), g,
                       tree.flatten())
    assert rep.max_rel_err <= 1e-5


def test_global_loss_is_leaf_hashing_loss():
    rng = np.random.default_rng(4)
    tree = random_tree(rng, 2, 2)
    ds = Dataset(rng.normal(size=(6, 2)), one_hot([0, 1, 1, 0, 1, 0]), "one_hot_class")
    assert global_loss(tree, ds) == pytest.approx(
        hashing_classification_loss(leaf_memberships(tree, ds.features), ds.labels),
        abs=1e-15)


def test_fine_tune_stationary_on_optimal_tree():
    ds = gen_blobs([(-3, 0), (3, 0)], 20, 0.3, 1)
    tree = grow_greedy(ds, TreeConfig(max_depth=1))
    tuned, initial, final = global_fine_tune(tree, ds, max_iters=50)
    assert final <= initial + 1e-9
    assert abs(initial - final) <= 1e-9 + 1e-3 * initial


def test_fine_tune_recovers_corrupted_node():
    ds = gen_two_moons(200, 0.1, 0)
    good = grow_greedy(ds, TreeConfig(max_depth=2))
    good_loss = global_loss(good, ds)
    bad = good.copy()
    layer = bad.internal_nodes()[0].split_net.layers[0]
    rng = np.random.default_rng(0)
    layer.weights = layer.weights + rng.normal(size=layer.weights.shape) * np.abs(
        layer.weights).max()
    layer.biases = layer.biases + rng.normal(size=1)
    bad_loss = global_loss(bad, ds)
    assert bad_loss > good_loss
    _, initial, final = global_fine_tune(bad, ds, max_iters=300)
    assert initial == pytest.approx(bad_loss)
    assert (bad_loss - final) >= 0.5 * (bad_loss - good_loss)


def test_predict_modes():
    tree = _stump([50.0, 0.0], 0.0)
    x = np.array([[1.0, 0.0], [-1.0, 0.0], [2.0, 3.0]])
    tree.leaves()[0].value = np.array([0.9, 0.1])
    tree.leaves()[1].value = np.array([0.2, 0.8])
    np.testing.assert_array_equal(predict(tree, x, "hard_path"),
                                  predict(tree, x, "soft_mixture"))
    near = _stump([1.0, 0.0], np.log(9.0))          # phi = 0.9 at the origin
    assert hard_leaf_index(near, np.zeros((1, 2)))[0] == 0
    with pytest.raises(InvalidArgument):
        predict(tree, x, "vote")


def test_soft_mixture_oracle():
    rng = np.random.default_rng(5)
    tree = random_tree(rng, 2, 2)
    ds = Dataset(rng.normal(size=(10, 2)), rng.normal(size=(10, 1)), CONTINUOUS)
    tree.label_kind = CONTINUOUS
    refit_leaves(tree, ds)
    x = rng.normal(size=(4, 2))
    leaf_p = np.array([oracles.tree_leaf_paths(r) for r in _bfs_phis(tree, x).tolist()])
    expect = [[sum(p * leaf.value[0] for p, leaf in zip(row, tree.leaves()))] for row in leaf_p]
    np.testing.assert_allclose(predict(tree, x, "soft_mixture"), expect, atol=1e-12)


def test_saturated_leaf_memberships_equal_counting():
    tree = _stump([1e3, 0.0], 0.0)
    x = np.array([[0.5, 0.0], [-0.5, 1.0], [0.2, 0.0], [-0.9, 0.0]])
    m = leaf_memberships(tree, x)
    counts = np.zeros((4, 2))
    counts[np.arange(4), hard_leaf_index(tree, x)] = 1
    np.testing.assert_allclose(m, counts, atol=1e-4)


def test_tree_flatten_round_trip():
    tree = random_tree(np.random.default_rng(6), 2, 2)
    assert tree.param_count() == 9
    back = tree.unflatten(tree.flatten())
    np.testing.assert_array_equal(back.flatten(), tree.flatten())
    assert [n.node_id for n in back.internal_nodes()] == [(0, 0), (1, 0), (1, 1)]
