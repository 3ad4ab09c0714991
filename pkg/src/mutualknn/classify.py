"""Classifiers built on Bayesian mutual / symmetric k-NN regression.

Binary problems regress the -1/+1 encoding and take the sign. Multi-class
problems regress the one-hot encoding and either take the argmax of the
per-class means (formulation I) or compare the differences
``mean[C_1] - mean[C_l]`` (formulation II). Both multi-class rules make the
same decision for the same hyperparameters; they differ only in the
evidence used to pick those hyperparameters.

Class ties always go to the lowest class index: the regression means carry
no information about which tied neighbor is nearest.
"""

from dataclasses import dataclass, field

import numpy as np

from . import classic, gp
from .dataset import encode_binary, encode_onehot
from .neighbors import MKNN, SKNN, NeighborIndex, check_variant

# method tags
KNN = "KNN"
MKNN_CV = "MKNN"
SKNN_CV = "SKNN"
BMKNN = "BMKNN"
BSKNN = "BSKNN"
MKNN_BK = "MKNN_BK"
SKNN_BK = "SKNN_BK"
METHODS = (KNN, MKNN_CV, SKNN_CV, BMKNN, BSKNN, MKNN_BK, SKNN_BK)

_VARIANT = {MKNN_CV: MKNN, SKNN_CV: SKNN, BMKNN: MKNN, BSKNN: SKNN, MKNN_BK: MKNN, SKNN_BK: SKNN}
_SUFFIX = {gp.BINARY: "", gp.MUL1: "I", gp.MUL2: "II"}


@dataclass(frozen=True)
class ClassifierSpec:
    """One row of a results table.

    ``KNN``, ``MKNN`` and ``SKNN`` pick k by leave-one-out error. ``BMKNN`` /
    ``BSKNN`` pick (k, sigma0, sigma2) by evidence and classify with the
    regression means. ``MKNN_BK`` / ``SKNN_BK`` run the classic rule with the
    k chosen by the evidence of ``formulation``.
    """

    method: str
    formulation: str = None
    sigma0: float = 1.0
    sigma2: float = 1.0
    mode: str = gp.OPTIMIZE
    name: str = ""

    def __post_init__(self):
        m = str(self.method).upper()
        if m not in METHODS:
            raise ValueError(f"unknown method {self.method!r}; expected one of {METHODS}")
        object.__setattr__(self, "method", m)
        if m in (KNN, MKNN_CV, SKNN_CV):
            object.__setattr__(self, "formulation", None)
        else:
            if self.formulation is None:
                raise ValueError(f"{m} needs a formulation")
            object.__setattr__(self, "formulation", gp.check_formulation(self.formulation))
        if self.mode not in (gp.OPTIMIZE, gp.FIXED):
            raise ValueError(f"mode must be {gp.OPTIMIZE!r} or {gp.FIXED!r}")
        if not (self.sigma0 > 0 and self.sigma2 > 0):
            raise ValueError("sigma0 and sigma2 must be positive")
        if not self.name:
            object.__setattr__(self, "name", self.default_name())

    @property
    def variant(self):
        return _VARIANT.get(self.method)

    @property
    def uses_evidence(self):
        return self.method in (BMKNN, BSKNN, MKNN_BK, SKNN_BK)

    def default_name(self):
        sfx = _SUFFIX.get(self.formulation, "")
        if self.method == KNN:
            return "kNN"
        if self.method == MKNN_CV:
            return "MkNN"
        if self.method == SKNN_CV:
            return "SkNN"
        if self.method in (BMKNN, BSKNN):
            base = "BMkNN" if self.method == BMKNN else "BSkNN"
            return f"{base}-{sfx}" if sfx else f"{base} (binary)"
        base = "MkNN" if self.method == MKNN_BK else "SkNN"
        return f"{base} (B-{sfx} k)" if sfx else f"{base} (B k)"

    def check_classes(self, n_classes):
        if self.formulation == gp.BINARY and n_classes != 2:
            raise ValueError(f"{self.name}: binary formulation requires 2 classes, got {n_classes}")
        if self.formulation in (gp.MUL1, gp.MUL2) and n_classes < 2:
            raise ValueError(f"{self.name}: multi-class formulation requires at least 2 classes")


@dataclass
class Prediction:
    """Batch output: 1-based labels plus per-query diagnostics."""

    labels: np.ndarray
    mass: np.ndarray
    tie: np.ndarray
    fallback: np.ndarray
    means: np.ndarray = None
    variance: np.ndarray = None
    tally: np.ndarray = None
    extra: dict = field(default_factory=dict)


# ---------------------------------------------------------------------------
# Decision rules on batches
# ---------------------------------------------------------------------------

def _argmax_lowest(means):
    return np.argmax(means, axis=1) + 1


def _tie_flags(values):
    best = values.max(axis=1)
    return (values == best[:, None]).sum(axis=1) > 1


def decide_binary(mean):
    """Sign rule on -1/+1 regression means; a zero mean goes to C_1."""
    return np.where(np.asarray(mean) > 0, 2, 1)


def decide_mul1(means):
    """Argmax of per-class means, lowest index on ties."""
    return _argmax_lowest(np.asarray(means))


def decide_mul2(means):
    """Decision from the differences g^{1,l} = mean[C_1] - mean[C_l].

    C_1 when no difference is negative, otherwise the class minimizing the
    difference (lowest index on ties). Treating a zero difference as a win
    for C_1 keeps the lowest-index tie policy of :func:`decide_mul1`.
    """
    means = np.asarray(means)
    # compare the means directly: g < 0 iff mean[C_l] > mean[C_1], and the
    # smallest g belongs to the largest mean. Forming the differences in
    # floating point could merge distinct means into tied differences.
    rest = means[:, 1:]
    out = np.ones(means.shape[0], dtype=np.int64)
    lose = (rest > means[:, :1]).any(axis=1)
    out[lose] = np.argmax(rest[lose], axis=1) + 2
    return out


def bayes_decide(qr, ds, hp, variant, formulation):
    """Classify every query in ``qr`` with a Bayesian rule."""
    variant = check_variant(variant)
    formulation = gp.check_formulation(formulation)
    w = qr.weights(hp.k, variant, hp.sigma0)
    mass = w.sum(axis=1)
    empty = mass == 0
    if formulation == gp.BINARY:
        mean, var = gp.bayes_predict(qr, encode_binary(ds), hp, variant)
        return Prediction(decide_binary(mean), mass, mean == 0, empty, mean[:, None], var)
    means, var = gp.bayes_predict(qr, encode_onehot(ds), hp, variant)
    labels = decide_mul1(means) if formulation == gp.MUL1 else decide_mul2(means)
    return Prediction(labels, mass, _tie_flags(means), empty, means, var)


def classic_decide(qr, ds, method, k):
    c = {KNN: classic.KNN, MKNN_CV: classic.MKNN, SKNN_CV: classic.SKNN,
         MKNN_BK: classic.MKNN, SKNN_BK: classic.SKNN}[method]
    d = classic.decide(c, qr, ds.labels, ds.n_classes, k)
    mass = d.tally.sum(axis=1)
    return Prediction(d.labels, mass, d.tie, d.fallback, tally=d.tally)


def predict(ds, queries, spec, hp, index=None, exclude=None):
    """Batch prediction API: labels and diagnostics for a query matrix.

    ``hp`` is a :class:`gp.Hyperparams` for Bayesian methods; classic methods
    only read its ``k`` (a plain int is accepted too).
    """
    spec.check_classes(ds.n_classes)
    if index is None:
        index = NeighborIndex(ds)
    qr = index.query(queries, exclude=exclude)
    k = hp if isinstance(hp, (int, np.integer)) else hp.k
    if spec.method in (BMKNN, BSKNN):
        return bayes_decide(qr, ds, hp, spec.variant, spec.formulation)
    return classic_decide(qr, ds, spec.method, k)


# ---------------------------------------------------------------------------
# Single-query conveniences
# ---------------------------------------------------------------------------

def _qr(q, ds, index):
    if index is None:
        index = NeighborIndex(ds)
    return index.query(np.atleast_2d(np.asarray(q, dtype=float).ravel()))


def classify_binary(q, ds, hp, variant, index=None):
    if ds.n_classes != 2:
        raise ValueError(f"binary classification needs 2 classes, got {ds.n_classes}")
    return int(bayes_decide(_qr(q, ds, index), ds, hp, variant, gp.BINARY).labels[0])


def classify_mul1(q, ds, hp, variant, index=None):
    return int(bayes_decide(_qr(q, ds, index), ds, hp, variant, gp.MUL1).labels[0])


def classify_mul2(q, ds, hp, variant, index=None):
    return int(bayes_decide(_qr(q, ds, index), ds, hp, variant, gp.MUL2).labels[0])


def classic_with_bayes_k(q, ds, k, variant, index=None):
    """Classic MkNN / SkNN decision using a k chosen by the evidence."""
    if ds.n_classes == 1:
        return 1
    method = MKNN_BK if check_variant(variant) == MKNN else SKNN_BK
    return int(classic_decide(_qr(q, ds, index), ds, method, k).labels[0])
