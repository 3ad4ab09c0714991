"""Plain, mutual and symmetric k-NN regression and classification.

The ``*_decide`` functions work on precomputed :class:`QueryRanks` and are
what the evaluation code calls; the single-query functions below them are
thin conveniences.

Tie handling: when several classes share the top tally the label of the
nearest voter among those classes wins. An MkNN query with an empty mutual
set falls back to the label of its nearest training point.
"""

from dataclasses import dataclass
import logging

import numpy as np

from . import _kernels
from .neighbors import NeighborIndex

log = logging.getLogger(__name__)

KNN = "knn"
MKNN = "mknn"
SKNN = "sknn"
CLASSIC_METHODS = (KNN, MKNN, SKNN)


@dataclass
class Decisions:
    """Batch classification output; ``labels`` are 1-based."""

    labels: np.ndarray
    tally: np.ndarray
    tie: np.ndarray
    fallback: np.ndarray


def _onehot(labels0, J):
    Y = np.zeros((labels0.size, J))
    Y[np.arange(labels0.size), labels0] = 1.0
    return Y


def _check_k(k, qr, method=None):
    # plain kNN only needs k points to vote; the reverse relation also needs
    # k other points around each training point
    hi = qr.n_effective if method == KNN else qr.n_effective - 1
    if not 1 <= k <= hi:
        raise ValueError(f"k must be in 1..{hi}, got {k}")


def _vote_arrays(method, qr, k):
    f = qr.forward_k(k)
    if method == KNN:
        return f, f.astype(float)
    r = qr.reverse_k(k)
    if method == MKNN:
        a = f & r
        return a, a.astype(float)
    if method == SKNN:
        return f | r, f.astype(float) + r.astype(float)
    raise ValueError(f"unknown classic method {method!r}")


def decide(method, qr, labels, n_classes, k):
    """Classify every query in ``qr`` with a classic rule at a given k."""
    _check_k(k, qr, method)
    labels0 = np.asarray(labels, dtype=np.int64) - 1
    active, weights = _vote_arrays(method, qr, k)
    tally = weights @ _onehot(labels0, n_classes)
    out = _kernels.resolve_votes(
        np.ascontiguousarray(tally), np.ascontiguousarray(active), labels0, qr.forward
    )
    best = tally.max(axis=1)
    tie = ((tally == best[:, None]).sum(axis=1) > 1) & (best > 0)
    fallback = out < 0
    if fallback.any():
        # empty mutual set: nearest training point decides
        nearest = np.argmin(qr.forward[fallback], axis=1)
        out[fallback] = labels0[nearest]
        log.debug("%s k=%d: %d queries with empty neighbor set fell back to 1-NN", method, k, fallback.sum())
    return Decisions(out + 1, tally, tie, fallback)


def regress(method, qr, targets, k):
    """Classic M/S-kNN regression estimates for every query in ``qr``."""
    if method not in (MKNN, SKNN):
        raise ValueError(f"regression is defined for mknn/sknn, got {method!r}")
    _check_k(k, qr)
    y = np.asarray(targets, dtype=float)
    _, w = _vote_arrays(method, qr, k)
    num = w @ y
    den = w.sum(axis=1)
    if y.ndim > 1:
        den = den[:, None]
    # empty weight set: estimate is 0
    return np.divide(num, den, out=np.zeros_like(num), where=den > 0)


def _single(q, ds, index):
    if index is None:
        index = NeighborIndex(ds)
    return index.query(np.atleast_2d(np.asarray(q, dtype=float).ravel()))


def knn_classify(q, ds, k, index=None):
    return int(decide(KNN, _single(q, ds, index), ds.labels, ds.n_classes, k).labels[0])


def mknn_classify(q, ds, k, index=None):
    return int(decide(MKNN, _single(q, ds, index), ds.labels, ds.n_classes, k).labels[0])


def sknn_classify(q, ds, k, index=None):
    return int(decide(SKNN, _single(q, ds, index), ds.labels, ds.n_classes, k).labels[0])


def mknn_regress(q, ds, targets, k, index=None):
    return float(np.ravel(regress(MKNN, _single(q, ds, index), targets, k))[0])


def sknn_regress(q, ds, targets, k, index=None):
    return float(np.ravel(regress(SKNN, _single(q, ds, index), targets, k))[0])
