import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra import numpy as hnp

from mutualknn import classic, classify as K, gp
from mutualknn.dataset import LabeledDataset
from mutualknn.neighbors import NeighborIndex

from conftest import random_dataset


# --- decision rules ---------------------------------------------------------

def test_decide_binary():
    assert K.decide_binary(np.array([-0.3, 0.0, 1e-300, 2.0])).tolist() == [1, 1, 2, 2]


def test_decide_mul2_hand():
    # g = [-0.3, -0.3]: C2 and C3 tie, the lower index wins
    assert K.decide_mul2(np.array([[0.2, 0.5, 0.5]])).tolist() == [2]
    # g = [0, 0.4]: nothing negative, so C1
    assert K.decide_mul2(np.array([[0.5, 0.5, 0.1]])).tolist() == [1]
    assert K.decide_mul2(np.array([[0.1, 0.2, 0.7]])).tolist() == [3]


def test_all_zero_means_go_to_class_one():
    z = np.zeros((3, 4))
    assert K.decide_mul1(z).tolist() == [1, 1, 1]
    assert K.decide_mul2(z).tolist() == [1, 1, 1]
    assert K.decide_binary(np.zeros(3)).tolist() == [1, 1, 1]


@settings(max_examples=300, deadline=None)
@given(hnp.arrays(np.float64, st.tuples(st.integers(1, 6), st.integers(2, 5)),
                  elements=st.integers(-3, 3).map(float)))
def test_mul1_and_mul2_agree(means):
    # small integers force many exact ties
    assert np.array_equal(K.decide_mul1(means), K.decide_mul2(means))


@settings(max_examples=200, deadline=None)
@given(hnp.arrays(np.float64, st.tuples(st.integers(1, 6), st.integers(2, 5)),
                  elements=st.floats(-1e3, 1e3)))
def test_mul1_and_mul2_agree_continuous(means):
    assert np.array_equal(K.decide_mul1(means), K.decide_mul2(means))


# --- Bayesian classifiers ---------------------------------------------------

@pytest.mark.parametrize("seed", range(6))
@pytest.mark.parametrize("variant", ["mknn", "sknn"])
def test_binary_reduction(seed, variant):
    rng = np.random.default_rng(seed)
    ds = random_dataset(rng, 20, 2, 2)
    qr = NeighborIndex(ds).query(rng.normal(size=(30, 2)))
    hp = gp.Hyperparams(int(rng.integers(1, 8)), rng.uniform(0.5, 3), rng.uniform(0.01, 1))
    b = K.bayes_decide(qr, ds, hp, variant, gp.BINARY)
    m1 = K.bayes_decide(qr, ds, hp, variant, gp.MUL1)
    m2 = K.bayes_decide(qr, ds, hp, variant, gp.MUL2)
    assert np.array_equal(m1.labels, m2.labels)
    # the -1/+1 mean is the difference of the two one-hot means
    assert np.allclose(b.means[:, 0], m1.means[:, 1] - m1.means[:, 0], atol=1e-14)
    clear = np.abs(b.means[:, 0]) > 1e-12
    assert np.array_equal(b.labels[clear], m1.labels[clear])


def test_empty_mutual_set_goes_to_class_one(line4):
    hp = gp.Hyperparams(1, 1.0, 0.5)
    for form in gp.FORMULATIONS:
        pred = K.bayes_decide(NeighborIndex(line4).query(np.array([[6.0]])), line4, hp, "mknn", form)
        assert pred.labels.tolist() == [1] and pred.fallback[0] and pred.mass[0] == 0
    # classic MkNN falls back to the nearest point (C2) instead
    assert classic.mknn_classify(6.0, line4, 1) == 2


@pytest.mark.parametrize("seed", range(8))
@pytest.mark.parametrize("variant", ["mknn", "sknn"])
def test_agrees_with_classic_when_untied(seed, variant):
    rng = np.random.default_rng(20 + seed)
    ds = random_dataset(rng, 25, 2, 3)
    qr = NeighborIndex(ds).query(rng.normal(size=(40, 2)))
    method = classic.MKNN if variant == "mknn" else classic.SKNN
    for k in (1, 3, 6):
        d = classic.decide(method, qr, ds.labels, 3, k)
        for s2 in (1e-6, 0.5, 50.0):
            for form in (gp.MUL1, gp.MUL2):
                p = K.bayes_decide(qr, ds, gp.Hyperparams(k, 1.0, s2), variant, form)
                ok = (d.tally.sum(axis=1) > 0) & ~d.tie
                assert np.array_equal(p.labels[ok], d.labels[ok])


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**31 - 1), st.floats(1e-3, 1e3), st.sampled_from(gp.FORMULATIONS),
       st.sampled_from(["mknn", "sknn"]))
def test_joint_scaling_invariance(seed, c, form, variant):
    rng = np.random.default_rng(seed)
    J = 2 if form == gp.BINARY else 3
    ds = random_dataset(rng, 15, 2, J)
    qr = NeighborIndex(ds).query(rng.normal(size=(10, 2)))
    a = K.bayes_decide(qr, ds, gp.Hyperparams(3, 1.3, 0.2), variant, form)
    b = K.bayes_decide(qr, ds, gp.Hyperparams(3, 1.3 * c, 0.2 * c), variant, form)
    assert np.allclose(a.means, b.means, rtol=1e-12, atol=1e-15)
    clear = ~a.tie & (np.abs(a.means).max(axis=1) > 1e-12)
    assert np.array_equal(a.labels[clear], b.labels[clear])


def test_single_query_helpers(line4):
    hp = gp.Hyperparams(1, 1.0, 0.01)
    assert K.classify_binary(1.5, line4, hp, "sknn") == 1
    assert K.classify_mul1(9.0, line4, hp, "sknn") == 2
    assert K.classify_mul2(9.0, line4, hp, "sknn") == 2
    three = LabeledDataset(line4.points, [1, 2, 3, 3], 3)
    with pytest.raises(ValueError):
        K.classify_binary(1.5, three, hp, "sknn")


def test_classic_with_bayes_k(line4):
    assert K.classic_with_bayes_k(6.0, line4, 1, "mknn") == classic.mknn_classify(6.0, line4, 1)
    assert K.classic_with_bayes_k(1.5, line4, 2, "sknn") == classic.sknn_classify(1.5, line4, 2)
    one = LabeledDataset(line4.points, [1, 1, 1, 1], 1)
    assert K.classic_with_bayes_k(3.0, one, 2, "mknn") == 1


# --- batch API and specs ----------------------------------------------------

def test_predict_api(line4):
    Q = np.array([[1.5], [6.0], [12.0]])
    pb = K.predict(line4, Q, K.ClassifierSpec("BSKNN", gp.MUL1), gp.Hyperparams(1, 1.0, 0.5))
    assert pb.labels.shape == (3,) and pb.means.shape == (3, 2) and pb.variance.shape == (3,)
    pc = K.predict(line4, Q, K.ClassifierSpec("MKNN"), 1)
    assert pc.tally.shape == (3, 2) and pc.means is None
    assert pc.labels[1] == 2 and pc.fallback[1]
    # held-out self: point 0 queried without itself
    pe = K.predict(line4, line4.points[:1], K.ClassifierSpec("KNN"), 1, exclude=np.array([0]))
    assert pe.labels.tolist() == [1]


def test_spec_names_and_validation():
    assert K.ClassifierSpec("knn").name == "kNN"
    assert K.ClassifierSpec("bmknn", "mul1").name == "BMkNN-I"
    assert K.ClassifierSpec("BSKNN", "mul2").name == "BSkNN-II"
    assert K.ClassifierSpec("SKNN_BK", "mul2").name == "SkNN (B-II k)"
    assert K.ClassifierSpec("MKNN_BK", "binary").name == "MkNN (B k)"
    assert K.ClassifierSpec("MKNN", "mul1").formulation is None
    for bad in (dict(method="nope"), dict(method="BMKNN"),
                dict(method="BMKNN", formulation="mul1", sigma2=0.0),
                dict(method="BMKNN", formulation="mul1", mode="grid")):
        with pytest.raises(ValueError):
            K.ClassifierSpec(**bad)
    with pytest.raises(ValueError):
        K.ClassifierSpec("BMKNN", "binary").check_classes(3)
