import json

import numpy as np
import pytest

from ndthash.checks import random_tree
from ndthash.data import gen_two_moons
from ndthash.errors import InvalidArgument
from ndthash.hashing import fit_region_table
from ndthash.net import init_autoencoder, init_network
from ndthash.serialize import (load_any, load_document, model_from_dict, model_to_dict,
                               save_document, tree_from_dict, tree_to_dict)
from ndthash.tree import TreeConfig, grow_greedy, leaf_memberships


def test_network_round_trip_exact(tmp_path):
    net = init_network([3, 4, 2], 7, "tanh")
    path = tmp_path / "m.json"
    save_document(model_to_dict(net, "hnn"), path)
    back, doc = load_any(path)
    assert back == net and doc["kind"] == "hnn"


def test_autoencoder_round_trip():
    ae = init_autoencoder([3, 2], [2, 3], 2, seed=1)
    assert model_from_dict(json.loads(json.dumps(model_to_dict(ae, "ae")))) == ae


def test_region_table_meta():
    ds = gen_two_moons(20, 0.1, 0)
    net = init_network([2, 2], 0)
    doc = model_to_dict(net, "hnn", region_table=fit_region_table(net, ds, "hard"))
    assert doc["region_table"]["k"] == 2


def test_tree_round_trip(tmp_path):
    tree = grow_greedy(gen_two_moons(60, 0.1, 0), TreeConfig(max_depth=2, node_iters=50))
    save_document(tree_to_dict(tree), tmp_path / "t.json")
    back, _ = load_any(tmp_path / "t.json")
    x = np.random.default_rng(0).normal(size=(5, 2))
    np.testing.assert_array_equal(leaf_memberships(back, x), leaf_memberships(tree, x))
    np.testing.assert_array_equal(back.leaf_values(), tree.leaf_values())
    assert back.config == tree.config


def test_untrained_tree_leaves_without_values():
    tree = random_tree(np.random.default_rng(0), 2, 1)
    back = tree_from_dict(json.loads(json.dumps(tree_to_dict(tree))))
    assert back.leaves()[0].value is None


def test_bad_documents(tmp_path):
    with pytest.raises(InvalidArgument):
        load_document(tmp_path / "missing.json")
    (tmp_path / "bad.json").write_text("{not json")
    with pytest.raises(InvalidArgument):
        load_document(tmp_path / "bad.json")
    with pytest.raises(InvalidArgument):
        model_from_dict({"version": "other/9"})
