import numpy as np
import pytest
from hypothesis import given, strategies as st
from sklearn.linear_model import LogisticRegression

from ndthash.data import (CONTINUOUS, NONE, ONE_HOT, Dataset, check_one_hot, gen_blobs,
                          gen_two_circles, gen_two_moons, load_csv, one_hot,
                          train_test_split, write_csv)
from ndthash.errors import DataError, InvalidArgument


def test_moons_noise_free_four_points():
    ds = gen_two_moons(4, 0.0, 0)
    np.testing.assert_array_equal(ds.labels, [[1, 0], [1, 0], [0, 1], [0, 1]])
    # upper arc of the unit circle; lower arc of the unit circle about (1, 0.5)
    upper = ds.features[:2]
    lower = ds.features[2:] - np.array([1.0, 0.5])
    np.testing.assert_allclose(np.linalg.norm(upper, axis=1), 1.0, atol=1e-12)
    np.testing.assert_allclose(np.linalg.norm(lower, axis=1), 1.0, atol=1e-12)
    assert np.all(upper[:, 1] >= -1e-12) and np.all(lower[:, 1] <= 1e-12)


def test_moons_not_linearly_separable():
    ds = gen_two_moons(200, 0.1, 7)
    clf = LogisticRegression(C=1e6, max_iter=10000).fit(ds.features, ds.class_ids)
    assert clf.score(ds.features, ds.class_ids) < 1.0


def test_generators_are_deterministic():
    a, b = gen_two_moons(50, 0.2, 3), gen_two_moons(50, 0.2, 3)
    assert a.features.tobytes() == b.features.tobytes()
    c, d = gen_two_circles(40, seed=5), gen_two_circles(40, seed=5)
    assert c.features.tobytes() == d.features.tobytes()
    assert not np.array_equal(gen_two_moons(50, 0.2, 4).features, a.features)


def test_odd_moons_count():
    ds = gen_two_moons(5, 0.0, 0)
    assert ds.n_samples == 5 and ds.labels[:, 0].sum() == 3


def test_circles_radii():
    ds = gen_two_circles(4, 1.0, 2.0, 0.0, 0)
    r = np.linalg.norm(ds.features, axis=1)
    np.testing.assert_allclose(r[ds.class_ids == 0], 1.0)
    np.testing.assert_allclose(r[ds.class_ids == 1], 2.0)


def test_circles_separable_in_polar_coordinates():
    ds = gen_two_circles(400, 1.0, 2.0, 0.0, 0)
    r = np.linalg.norm(ds.features, axis=1)
    assert r[ds.class_ids == 0].max() < 1.5 < r[ds.class_ids == 1].min()


def test_circles_invalid_radii():
    with pytest.raises(InvalidArgument):
        gen_two_circles(10, 2.0, 1.0)


def test_blobs_shape():
    ds = gen_blobs([(0, 0), (6, 0), (3, 6)], 10, 1.0, 0)
    assert ds.n_samples == 30 and ds.n_classes == 3
    assert np.bincount(ds.class_ids).tolist() == [10, 10, 10]


def test_load_csv_class_example(tmp_path):
    p = tmp_path / "d.csv"
    p.write_text("0,0,0\n1,1,1\n2,2,0\n")
    ds = load_csv(p, "class")
    assert ds.n_samples == 3 and ds.n_dims == 2 and ds.n_classes == 2
    np.testing.assert_array_equal(ds.labels, [[1, 0], [0, 1], [1, 0]])


def test_load_csv_none_and_continuous(tmp_path):
    p = tmp_path / "d.csv"
    p.write_text("x,y,t1,t2\n0,1,2,3\n4,5,6,7\n")
    ds = load_csv(p, "none")
    assert ds.labels is None and ds.label_kind == NONE and ds.n_dims == 4
    assert ds.columns == ["x", "y", "t1", "t2"]
    ds = load_csv(p, ("continuous", 2))
    assert ds.label_kind == CONTINUOUS
    np.testing.assert_array_equal(ds.labels, [[2, 3], [6, 7]])


def test_load_csv_ragged_row_named(tmp_path):
    p = tmp_path / "d.csv"
    p.write_text("0,0,0\n1,1\n2,2,0\n")
    with pytest.raises(DataError, match="row 2"):
        load_csv(p)


@pytest.mark.parametrize("text,match", [("", "empty"), ("a,b\n", "no data"),
                                         ("0,1,1\n0,x,1\n", "row 2, column 2"), ("0,1,-1\n", "class code"),
                                         ("0,1,0.5\n", "class code"), ("0,nan,1\n", "non-finite")])
def test_load_csv_errors(tmp_path, text, match):
    p = tmp_path / "d.csv"
    p.write_text(text)
    with pytest.raises(DataError, match=match):
        load_csv(p)


def test_load_csv_missing_file(tmp_path):
    with pytest.raises(DataError):
        load_csv(tmp_path / "nope.csv")


def test_csv_round_trip(tmp_path):
    for ds in (gen_two_moons(30, 0.1, 1),
               Dataset(np.random.default_rng(0).normal(size=(7, 3)),
                       np.random.default_rng(1).normal(size=(7, 2)), CONTINUOUS)):
        p = tmp_path / "rt.csv"
        write_csv(ds, p)
        spec = "class" if ds.label_kind == ONE_HOT else ("continuous", 2)
        back = load_csv(p, spec)
        np.testing.assert_array_equal(back.features, ds.features)
        np.testing.assert_array_equal(back.labels, ds.labels)


def test_dataset_invariants():
    with pytest.raises(InvalidArgument):
        Dataset(np.array([[np.inf, 0.0]]))
    with pytest.raises(InvalidArgument):
        Dataset(np.zeros((2, 2)), np.array([[1, 0]]), ONE_HOT)
    with pytest.raises(InvalidArgument):
        Dataset(np.zeros((1, 2)), np.array([[0.5, 0.5]]), ONE_HOT)
    with pytest.raises(InvalidArgument):
        Dataset(np.zeros((1, 2)), np.array([[1.0, 0.0]]), NONE)
    with pytest.raises(InvalidArgument):
        check_one_hot(np.array([[1.0, 1.0]]))


@given(st.lists(st.integers(0, 4), min_size=1, max_size=30))
def test_one_hot_rows_valid(codes):
    y = one_hot(codes)
    assert y.shape == (len(codes), max(codes) + 1)
    np.testing.assert_array_equal(y.argmax(axis=1), codes)
    check_one_hot(y)


def test_train_test_split_partition():
    ds = gen_two_moons(40, 0.1, 0)
    tr, te = train_test_split(ds, 0.25, 0)
    assert tr.n_samples == 30 and te.n_samples == 10
    both = np.vstack([tr.features, te.features])
    assert sorted(map(tuple, both)) == sorted(map(tuple, ds.features))
