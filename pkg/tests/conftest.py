"""Shared fixtures and brute-force oracles.

The oracles below are written independently of the package: plain Python
sorting of (distance, index) tuples and dense linear algebra on explicitly
assembled matrices. Nothing here imports the rank/count machinery.
"""

import math
from pathlib import Path

import numpy as np
import pytest

from mutualknn.dataset import LabeledDataset


# ---------------------------------------------------------------------------
# random instances
# ---------------------------------------------------------------------------

def random_dataset(rng, n, d, J, integer_grid=False):
    """Random points and labels with every class present when n >= J."""
    if integer_grid:
        # small integer coordinates produce many exact distance ties
        X = rng.integers(0, 4, size=(n, d)).astype(float)
    else:
        X = rng.normal(size=(n, d))
    y = rng.integers(1, J + 1, size=n)
    if n >= J:
        y[:J] = np.arange(1, J + 1)
        rng.shuffle(y)
    return LabeledDataset(X, y, J)


ROOT = Path(__file__).resolve().parents[1]


@pytest.fixture
def pima_path():
    return ROOT / "data" / "pima_tr.csv"


@pytest.fixture
def line4():
    """Points {0, 1, 2, 10} on a line with labels a, a, b, b."""
    return LabeledDataset(np.array([[0.0], [1.0], [2.0], [10.0]]), np.array([1, 1, 2, 2]), 2)


@pytest.fixture
def line4_targets():
    return np.array([4.0, 6.0, 8.0, 100.0])


# ---------------------------------------------------------------------------
# neighbor oracles
# ---------------------------------------------------------------------------

def odist(a, b):
    return math.dist(list(np.ravel(a)), list(np.ravel(b)))


def oracle_knn(points, q, k, skip=()):
    cand = sorted((odist(points[j], q), j) for j in range(len(points)) if j not in skip)
    return [j for _, j in cand[:k]]


def oracle_in_nprime(points, i, q, k, skip=()):
    """q among the k nearest of x_i in (D minus x_i minus skip) plus q."""
    cand = [(odist(points[i], points[m]), 0, m) for m in range(len(points)) if m != i and m not in skip]
    cand.append((odist(points[i], q), 1, -1))
    cand.sort()
    return any(c[2] == -1 for c in cand[:k])


def oracle_adjacency(points, k):
    n = len(points)
    A = np.zeros((n, n), dtype=bool)
    for i in range(n):
        for j in oracle_knn(points, points[i], k, skip={i}):
            A[i, j] = True
    return A


def oracle_votes(points, labels, J, q, k, method, skip=()):
    """Tally per class and the decided class (1-based) from raw sets."""
    nk = oracle_knn(points, q, k, skip)
    rev = [j for j in range(len(points)) if j not in skip and oracle_in_nprime(points, j, q, k, skip)]
    w = {}
    if method == "knn":
        for j in nk:
            w[j] = 1.0
    elif method == "mknn":
        for j in nk:
            if j in rev:
                w[j] = 1.0
    else:
        for j in nk:
            w[j] = w.get(j, 0.0) + 1.0
        for j in rev:
            w[j] = w.get(j, 0.0) + 1.0
    tally = np.zeros(J)
    for j, v in w.items():
        tally[labels[j] - 1] += v
    order = sorted((odist(points[j], q), j) for j in range(len(points)) if j not in skip)
    if not w:
        return tally, labels[order[0][1]]
    best = tally.max()
    tied = {c + 1 for c in range(J) if tally[c] == best}
    for _, j in order:
        if j in w and labels[j] in tied:
            return tally, labels[j]
    raise AssertionError("unreachable")


# ---------------------------------------------------------------------------
# evidence oracles (explicit inverse, full matrices)
# ---------------------------------------------------------------------------

def oracle_precision(points, k, sigma0, sigma2, variant):
    A = oracle_adjacency(points, k).astype(float)
    W = A * A.T if variant == "mknn" else A + A.T
    W = sigma0 * W
    L = np.diag(W.sum(axis=1)) - W
    return L + sigma2 * np.eye(len(points))


def gauss_logpdf(x, cov):
    """log N(x; 0, cov) from slogdet and an explicit solve."""
    sign, logdet = np.linalg.slogdet(cov)
    assert sign > 0
    return -0.5 * (x.size * math.log(2 * math.pi) + logdet + x @ np.linalg.solve(cov, x))


def oracle_evidence(P, labels, J, formulation):
    C = np.linalg.inv(P)
    n = len(labels)
    if formulation == "binary":
        y = np.array([-1.0 if v == 1 else 1.0 for v in labels])
        return gauss_logpdf(y, C)
    if formulation == "mul1":
        big = np.zeros((J * n, J * n))
        for l in range(J):
            big[l * n:(l + 1) * n, l * n:(l + 1) * n] = C
        Y = np.zeros((n, J))
        Y[np.arange(n), np.asarray(labels) - 1] = 1.0
        return gauss_logpdf(Y.T.ravel(), big)
    rows = [(i, j) for i in range(n) for j in range(1, J + 1) if j != labels[i]]
    K = np.empty((len(rows), len(rows)))
    for a, (i, j) in enumerate(rows):
        for b, (kk, l) in enumerate(rows):
            delta = int(labels[i] == labels[kk]) - int(labels[i] == l) - int(labels[kk] == j) + int(j == l)
            K[a, b] = delta * C[i, kk]
    return gauss_logpdf(np.ones(len(rows)), K)


# ---------------------------------------------------------------------------
# acceptance report
# ---------------------------------------------------------------------------

ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[num])
