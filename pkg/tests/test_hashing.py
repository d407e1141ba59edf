import numpy as np
import pytest
from scipy.spatial.distance import pdist
from scipy.stats import spearmanr

from ndthash.chains import hard_assign
from ndthash.data import CONTINUOUS, NONE, Dataset, one_hot
from ndthash.errors import InvalidArgument, LabelKindMismatch
from ndthash.hashing import (Predictor, accuracy, codes_to_strings, fit_region_table,
                             hash_codes, mean_squared_error, predict_with_confidence,
                             random_lsh_head, write_codes_csv)
from ndthash.net import DenseLayer, Network, init_network


def _axis_net(scale=1e4):
    """Two saturated units: bit0 = [x > 0], bit1 = [y > 0]."""
    return Network([DenseLayer(scale * np.eye(2), np.zeros(2))])


SIX = np.array([[-1, -1], [-2, -1], [-1, 1], [1, -1], [1, 1], [2, 2.0]])
SIX_IDS = [0, 0, 1, 1, 0, 1]


def test_hand_counted_table():
    ds = Dataset(SIX, one_hot(SIX_IDS, 2), "one_hot_class")
    table = fit_region_table(_axis_net(), ds, "hard")
    # regions: 00 -> two of class 0; 01 -> one of class 1; 10 -> one of class 1;
    # 11 -> one of each
    np.testing.assert_allclose(table.mass, [2 / 6, 1 / 6, 1 / 6, 2 / 6])
    np.testing.assert_allclose(table.stats, [[1, 0], [0, 1], [0, 1], [0.5, 0.5]])


def test_soft_equals_hard_when_saturated():
    rng = np.random.default_rng(0)
    x = rng.normal(size=(50, 2))
    x = x[np.all(np.abs(x) > 0.01, axis=1)]
    net = _axis_net(1e4)
    assert np.all(np.minimum(net.forward(x), 1 - net.forward(x)) < 1e-6)
    ds = Dataset(x, one_hot(rng.integers(0, 3, len(x)), 3), "one_hot_class")
    soft, hard = fit_region_table(net, ds, "soft"), fit_region_table(net, ds, "hard")
    np.testing.assert_allclose(soft.mass, hard.mass, atol=1e-4)
    np.testing.assert_allclose(soft.stats, hard.stats, atol=1e-4)


def test_policy_errors():
    unlabeled = Dataset(SIX, None, NONE)
    with pytest.raises(LabelKindMismatch):
        fit_region_table(_axis_net(), unlabeled, policy="mean")
    with pytest.raises(InvalidArgument):
        fit_region_table(init_network([2, 1]), Dataset(SIX, one_hot([0, 1, 2, 3, 0, 1]),
                                                       "one_hot_class"))
    with pytest.raises(InvalidArgument):
        fit_region_table(_axis_net(), Dataset(SIX, one_hot(SIX_IDS), "one_hot_class"), "fuzzy")


def test_confidence_rules():
    ds = Dataset(SIX, one_hot(SIX_IDS, 2), "one_hot_class")
    pred = Predictor.fit(_axis_net(), ds)
    p = predict_with_confidence(pred, np.array([[-3.0, -3.0], [3.0, 3.0]]), abstain_below=0.9)
    assert p.confidence.tolist() == [1.0, 0.5]
    assert p.abstained.tolist() == [False, True]
    assert accuracy(pred, ds) == pytest.approx(5 / 6)


def test_unseen_region_uses_default():
    ds = Dataset(SIX[[0, 1, 4, 5]], one_hot([0, 0, 1, 1], 2), "one_hot_class")
    pred = Predictor.fit(_axis_net(), ds)
    p = predict_with_confidence(pred, np.array([[-1.0, 1.0]]))
    assert p.unseen[0] and p.confidence[0] == 0.0
    assert p.value[0] == int(np.argmax(pred.table.default))


def test_batch_matches_single_calls():
    rng = np.random.default_rng(1)
    x = rng.normal(size=(20, 2))
    ds = Dataset(x, one_hot(rng.integers(0, 2, 20), 2), "one_hot_class")
    pred = Predictor.fit(init_network([2, 3], 1), ds)
    batch = predict_with_confidence(pred, x)
    for i in range(20):
        one = predict_with_confidence(pred, x[i:i + 1])
        assert one.value[0] == batch.value[i] and one.confidence[0] == batch.confidence[i]


def test_regression_mean_policy():
    x = SIX
    y = np.array([1.0, 3.0, 5.0, 7.0, 0.0, 2.0])
    ds = Dataset(x, y, CONTINUOUS)
    pred = Predictor.fit(_axis_net(), ds)
    np.testing.assert_allclose(pred.table.stats[:, 0], [2.0, 5.0, 7.0, 1.0])
    assert mean_squared_error(pred, ds) == pytest.approx((1 + 1 + 0 + 0 + 1 + 1) / 6)


def test_lsh_sign_symmetry_and_seed():
    head = random_lsh_head(5, 12, seed=3)
    x = np.random.default_rng(0).normal(size=(30, 5))
    np.testing.assert_array_equal(hash_codes(head, x), 1 - hash_codes(head, -x))
    assert random_lsh_head(5, 12, 3) == head and not random_lsh_head(5, 12, 4) == head


def test_lsh_hamming_tracks_angle():
    # zero-bias hyperplanes separate two points with probability angle / pi,
    # so the Hamming distance ranks pairs by angle (and only loosely by
    # Euclidean distance, which also depends on the norms)
    x = np.random.default_rng(0).standard_normal((500, 8))
    hamming = pdist(hash_codes(random_lsh_head(8, 16, 0), x), "hamming")
    angle = np.arccos(np.clip(1 - pdist(x, "cosine"), -1, 1))
    assert spearmanr(hamming, angle).statistic >= 0.6
    assert spearmanr(hamming, pdist(x)).statistic >= 0.4


def test_lsh_collision_rate_matches_angle():
    rng = np.random.default_rng(1)
    a, b = rng.standard_normal(6), rng.standard_normal(6)
    theta = np.arccos(a @ b / np.linalg.norm(a) / np.linalg.norm(b))
    codes = hash_codes(_wide_head(6, 4000, 2), np.vstack([a, b]))
    assert abs(np.mean(codes[0] != codes[1]) - theta / np.pi) < 0.03


def _wide_head(d, k, seed):
    # more hyperplanes than one head allows, drawn the same way in chunks of 20
    heads = [random_lsh_head(d, 20, seed * 1000 + j) for j in range(k // 20)]
    return _Concat(heads)


class _Concat:
    def __init__(self, heads):
        self.heads = heads

    def forward(self, x):
        return np.hstack([h.forward(x) for h in self.heads])


def test_hash_codes_definition_and_stability(tmp_path):
    net = _axis_net(1e4)
    x = np.array([[0.5, -0.5], [-2.0, 3.0]])
    np.testing.assert_array_equal(hash_codes(net, x), hard_assign(net.forward(x)))
    np.testing.assert_array_equal(hash_codes(net, x + 5e-7), hash_codes(net, x))
    assert codes_to_strings(hash_codes(net, x)) == ["10", "01"]
    write_codes_csv(hash_codes(net, x), tmp_path / "c.csv")
    assert (tmp_path / "c.csv").read_text() == "index,code\n0,10\n1,01\n"
