import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mutualknn import dataset as D
from mutualknn.dataset import DataError, LabeledDataset


# --- LabeledDataset --------------------------------------------------------

def test_dataset_validates_labels():
    with pytest.raises(DataError):
        LabeledDataset(np.zeros((3, 1)), [1, 2, 3], 2)
    with pytest.raises(DataError):
        LabeledDataset(np.zeros((3, 1)), [1, 2], 2)
    with pytest.raises(DataError):
        LabeledDataset(np.zeros((2, 1)), [0, 1], 2)


def test_dataset_is_read_only():
    ds = LabeledDataset(np.zeros((2, 2)), [1, 2], 2)
    with pytest.raises(ValueError):
        ds.points[0, 0] = 1.0
    assert ds.n == 2 and ds.d == 2
    assert list(ds.labels0) == [0, 1]


# --- sinc and Sinc3C -------------------------------------------------------

def test_sinc_values():
    assert D.sinc(0.0) == 1.0
    assert D.sinc(0.5) == pytest.approx(2 / math.pi, abs=1e-15)
    # exact zeros at nonzero integers
    assert D.sinc(-5.0) == 0.0
    assert D.sinc(3.0) == 0.0
    assert D.sinc(1.5) == pytest.approx(math.sin(1.5 * math.pi) / (1.5 * math.pi), abs=1e-15)


def test_sinc3c_train_grid():
    tr = D.gen_sinc3c_train()
    x = tr.points[:, 0]
    assert tr.n == 59 and tr.d == 1 and tr.n_classes == 3
    assert x[0] == -5.0 and x[-1] == pytest.approx(4.86)
    assert np.allclose(np.diff(x), 0.17)
    assert x[-1] + 0.17 > 5.0


def test_sinc3c_test_grid():
    te = D.gen_sinc3c_test()
    x = te.points[:, 0]
    assert te.n == 201
    assert x[0] == -5.0 and x[-1] == 5.0 and x[100] == 0.0
    assert np.allclose(np.diff(x), 0.05)


def test_sinc3c_named_points():
    tr, te = D.gen_sinc3c_train(), D.gen_sinc3c_test()
    assert tr.labels[0] == 2        # x = -5, sinc 0 -> C2
    assert te.labels[100] == 3      # x = 0, sinc 1 -> C3
    assert te.labels[-1] == 2       # x = 5 -> C2


def test_sinc3c_labels_match_direct_formula():
    # oracle: sin(pi x)/(pi x) with the math module, away from the roots
    tr = D.gen_sinc3c_train()
    for x, y in zip(tr.points[:, 0], tr.labels):
        if abs(x - round(x)) < 1e-9:
            continue
        s = math.sin(math.pi * x) / (math.pi * x)
        want = 1 if s < 0 else (2 if s < 0.2 else 3)
        assert y == want, x
    # x = -4.83 explicitly
    s = math.sin(math.pi * -4.83) / (math.pi * -4.83)
    assert tr.labels[1] == (1 if s < 0 else (2 if s < 0.2 else 3))


def test_sinc3c_boundaries():
    assert list(D.sinc3c_label(np.array([0.0]))) == [3]
    # half-open intervals: exactly 0 -> C2
    assert list(D.sinc3c_label(np.array([3.0]), exact_roots=True)) == [2]
    assert list(D.sinc3c_label(np.array([2.0]), exact_roots=True)) == [2]
    # plain floating point puts even roots slightly below 0
    assert list(D.sinc3c_label(np.array([2.0, 3.0]))) == [1, 2]


def test_sinc3c_deterministic():
    a, b = D.gen_sinc3c_train(), D.gen_sinc3c_train()
    assert np.array_equal(a.points, b.points) and np.array_equal(a.labels, b.labels)


# --- encodings --------------------------------------------------------------

def test_encode_binary():
    ds = LabeledDataset(np.zeros((3, 1)), [1, 2, 1], 2)
    assert list(D.encode_binary(ds)) == [-1.0, 1.0, -1.0]
    allc1 = LabeledDataset(np.zeros((2, 1)), [1, 1], 2)
    assert list(D.encode_binary(allc1)) == [-1.0, -1.0]
    with pytest.raises(DataError):
        D.encode_binary(LabeledDataset(np.zeros((3, 1)), [1, 2, 3], 3))


def test_encode_onehot():
    ds = LabeledDataset(np.zeros((1, 1)), [2], 3)
    assert D.encode_onehot(ds).tolist() == [[0.0, 1.0, 0.0]]


@given(st.lists(st.integers(1, 2), min_size=1, max_size=30))
def test_onehot_difference_is_binary_encoding(labels):
    ds = LabeledDataset(np.zeros((len(labels), 1)), labels, 2)
    Y = D.encode_onehot(ds)
    assert np.array_equal(Y.sum(axis=1), np.ones(len(labels)))
    assert np.array_equal(Y[:, 1] - Y[:, 0], D.encode_binary(ds))


# --- CSV --------------------------------------------------------------------

def test_load_pima(pima_path):
    ds = D.load_csv(pima_path)
    assert (ds.n, ds.d, ds.n_classes) == (200, 7, 2)
    assert ds.class_names == ("No", "Yes")


def test_load_csv_errors(tmp_path):
    p = tmp_path / "e.csv"
    p.write_text("")
    with pytest.raises(DataError, match="empty"):
        D.load_csv(p)
    p.write_text("a,b,label\n1,2,x\n3,4\n")
    with pytest.raises(DataError, match="row 3"):
        D.load_csv(p)
    p.write_text("a,b,label\n1,2,x\n3,oops,y\n")
    with pytest.raises(DataError, match="row 3"):
        D.load_csv(p)
    with pytest.raises(DataError, match="no such file"):
        D.load_csv(tmp_path / "missing.csv")


def test_csv_roundtrip(tmp_path):
    rng = np.random.default_rng(3)
    ds = LabeledDataset(rng.normal(size=(12, 3)), rng.integers(1, 4, 12), 3, ("p", "q", "r"))
    D.write_csv(ds, tmp_path / "x.csv")
    back = D.load_csv(tmp_path / "x.csv", label_map={"p": 1, "q": 2, "r": 3})
    assert np.array_equal(back.points, ds.points)
    assert np.array_equal(back.labels, ds.labels)


def test_label_column_by_name_and_order(tmp_path):
    p = tmp_path / "c.csv"
    p.write_text("cls,f1,f2\nB,1,2\nA,3,4\nB,5,6\n")
    ds = D.load_csv(p, label_column="cls")
    assert ds.class_names == ("B", "A")
    assert list(ds.labels) == [1, 2, 1]
    assert ds.points.tolist() == [[1, 2], [3, 4], [5, 6]]


# --- standardization --------------------------------------------------------

def test_standardize_two_points_population_convention():
    tr = LabeledDataset(np.array([[0.0], [2.0]]), [1, 2], 2)
    out, _ = D.standardize(tr)
    assert out.points[:, 0].tolist() == [-1.0, 1.0]


def test_standardize_constant_feature_and_others():
    tr = LabeledDataset(np.array([[5.0, 0.0], [5.0, 2.0], [5.0, 4.0]]), [1, 1, 2], 2)
    te = LabeledDataset(np.array([[5.0, 2.0]]), [1], 2)
    a, (b,) = D.standardize(tr, [te])
    assert np.all(a.points[:, 0] == 0.0)
    assert abs(a.points.mean(axis=0)).max() < 1e-12
    assert b.points.tolist() == [[0.0, 0.0]]


# --- folds ------------------------------------------------------------------

def test_folds_deterministic_and_cover():
    rng = np.random.default_rng(0)
    ds = LabeledDataset(rng.normal(size=(37, 2)), rng.integers(1, 4, 37), 3)
    a, b = D.make_folds(ds, 5, seed=11), D.make_folds(ds, 5, seed=11)
    assert np.array_equal(a.assignment, b.assignment)
    sizes = np.bincount(a.assignment, minlength=5)
    assert sizes.min() >= 1 and sizes.max() - sizes.min() <= 1
    seen = np.concatenate([te for _, te in a])
    assert sorted(seen) == list(range(37))


def test_folds_one_point_each():
    ds = LabeledDataset(np.arange(10.0)[:, None], [1, 2] * 5, 2)
    plan = D.make_folds(ds, 10, seed=0)
    assert sorted(np.bincount(plan.assignment)) == [1] * 10


def test_folds_pima_stratified(pima_path):
    ds = D.load_csv(pima_path)
    plan = D.make_folds(ds, 10, seed=4)
    ratio = np.mean(ds.labels == 2)
    for _, te in plan:
        pos = np.sum(ds.labels[te] == 2)
        assert abs(pos - ratio * te.size) <= 1.0


def test_folds_range():
    ds = LabeledDataset(np.arange(4.0)[:, None], [1, 2, 1, 2], 2)
    with pytest.raises(DataError):
        D.make_folds(ds, 1)
    with pytest.raises(DataError):
        D.make_folds(ds, 5)


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 60), st.integers(2, 10), st.integers(1, 4), st.integers(0, 2**31 - 1))
def test_folds_properties(n, f, J, seed):
    f = min(f, n)
    labels = (np.arange(n) % J) + 1
    ds = LabeledDataset(np.zeros((n, 1)), labels, J)
    plan = D.make_folds(ds, f, seed)
    counts = np.bincount(plan.assignment, minlength=f)
    assert counts.min() >= 1
    assert counts.max() - counts.min() <= 1
    assert np.array_equal(plan.assignment, D.make_folds(ds, f, seed).assignment)
