"""Neighbor relations, mutual / symmetric edge weights and graph Laplacians.

Distances are Euclidean. Neighbor order is the strict total order on
(distance, index); a query point that is not part of the dataset ranks after
every dataset point at the same distance.

Two quantities drive everything else, and both are independent of k:

* forward rank -- position of training point j in the query's ordering of
  the training set, so ``j in N_k(q)  <=>  rank < k``;
* reverse count -- number of training points m != j with
  ``d(x_j, x_m) <= d(x_j, q)``, so ``q in N'_k(x_j)  <=>  count < k``.

Sweeping k therefore costs one comparison per entry once the ranks exist.
"""

from dataclasses import dataclass

import numpy as np

from . import _kernels
from ._kernels import NO_RANK

MKNN = "mknn"
SKNN = "sknn"
VARIANTS = (MKNN, SKNN)


def check_variant(variant):
    v = str(variant).lower()
    if v not in VARIANTS:
        raise ValueError(f"variant must be one of {VARIANTS}, got {variant!r}")
    return v


def _as_points(x):
    x = np.asarray(x, dtype=float)
    if x.ndim == 0:
        x = x.reshape(1, 1)
    elif x.ndim == 1:
        x = x[:, None]
    return np.ascontiguousarray(x)


def _points_of(data):
    return _as_points(getattr(data, "points", data))


def pairwise_distances(a, b):
    return _kernels.pairwise_distances(_as_points(a), _as_points(b))


# ---------------------------------------------------------------------------
# Training-set index
# ---------------------------------------------------------------------------

class NeighborIndex:
    """Distance ranks of a fixed training set, valid for every k at once."""

    def __init__(self, data):
        self.points = _points_of(data)
        n = self.points.shape[0]
        if n < 1:
            raise ValueError("empty point set")
        dist = pairwise_distances(self.points, self.points)
        self.dist = dist
        masked = dist.copy()
        np.fill_diagonal(masked, np.inf)
        ranks = _kernels.forward_ranks(masked)
        np.fill_diagonal(ranks, NO_RANK)
        self.self_ranks = ranks
        # row j: distances from x_j to the other n-1 points, ascending
        self.sorted_rows = np.ascontiguousarray(np.sort(masked, axis=1)[:, : n - 1])
        for a in (self.dist, self.self_ranks, self.sorted_rows):
            a.setflags(write=False)

    @property
    def n(self):
        return self.points.shape[0]

    def adjacency(self, k):
        """A[i, j] = [x_j is among the k nearest neighbors of x_i]."""
        return self.self_ranks < k

    def query(self, queries, exclude=None):
        """Ranks of arbitrary query points against this training set.

        ``exclude`` optionally gives, per query, a training index to remove
        from the training set for that query (-1 for none). The removed point
        is neither a neighbor nor a competitor in reverse ranks, which is how
        leave-one-out evaluation treats the held-out point.
        """
        q = _as_points(queries)
        if q.shape[1] != self.points.shape[1]:
            raise ValueError(
                f"query dimension {q.shape[1]} does not match training dimension {self.points.shape[1]}"
            )
        dq = pairwise_distances(q, self.points)
        if exclude is not None:
            exclude = np.broadcast_to(np.asarray(exclude, dtype=np.int64), (q.shape[0],))
        return QueryRanks.from_distances(self, dq, exclude)

    def leave_one_out(self):
        """Query ranks with every training point held out in turn."""
        return QueryRanks.from_distances(self, self.dist, np.arange(self.n))


@dataclass
class QueryRanks:
    """Forward ranks, reverse counts and distances for m queries vs n points."""

    dist: np.ndarray
    forward: np.ndarray
    reverse: np.ndarray
    n_effective: int

    @classmethod
    def from_distances(cls, index, dq, exclude=None):
        dq = np.ascontiguousarray(dq, dtype=float)
        m, n = dq.shape
        n_eff = n
        if exclude is not None and np.any(exclude >= 0):
            has = exclude >= 0
            rows = np.flatnonzero(has)
            dq_f = dq.copy()
            dq_f[rows, exclude[rows]] = np.inf
            fwd = _kernels.forward_ranks(dq_f)
            fwd[rows, exclude[rows]] = NO_RANK
            rev = _kernels.reverse_counts(index.sorted_rows, dq)
            # the excluded point e no longer competes: drop it from x_j's count
            # whenever d(x_j, x_e) <= d(x_j, q)
            rev[rows] -= index.dist[exclude[rows]] <= dq[rows]
            rev[rows, exclude[rows]] = NO_RANK
            if has.all():
                n_eff = n - 1
        else:
            fwd = _kernels.forward_ranks(dq)
            rev = _kernels.reverse_counts(index.sorted_rows, dq)
        return cls(dq, fwd, rev, n_eff)

    @property
    def shape(self):
        return self.forward.shape

    def forward_k(self, k):
        return self.forward < k

    def reverse_k(self, k):
        return self.reverse < k

    def weights(self, k, variant, sigma0=1.0):
        """Query-to-training edge weights under the MkNN or SkNN rule."""
        variant = check_variant(variant)
        f = self.forward_k(k)
        r = self.reverse_k(k)
        if variant == MKNN:
            return sigma0 * (f & r).astype(float)
        return sigma0 * (f.astype(float) + r.astype(float))


# ---------------------------------------------------------------------------
# Graph types
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class NeighborGraph:
    """Per-point ordered k-nearest-neighbor lists of a dataset."""

    index: NeighborIndex
    k: int

    def __post_init__(self):
        k = int(self.k)
        if not 1 <= k <= self.index.n - 1:
            raise ValueError(f"k must be in 1..{self.index.n - 1}, got {k}")
        object.__setattr__(self, "k", k)

    @property
    def n(self):
        return self.index.n

    @property
    def lists(self):
        """(n, k) array; row i holds N_k(x_i) nearest first."""
        return np.argsort(self.index.self_ranks, axis=1, kind="stable")[:, : self.k]

    @property
    def adjacency(self):
        return self.index.adjacency(self.k)

    def radius(self, i):
        """Distance from x_i to its k-th nearest neighbor."""
        return self.index.sorted_rows[i, self.k - 1]


def build_neighbor_graph(data, k, index=None):
    return NeighborGraph(index if index is not None else NeighborIndex(data), k)


def knn_list(q, data, k, exclude=None):
    """Indices of the k nearest points of ``data`` to ``q``, nearest first."""
    pts = _points_of(data)
    n_avail = pts.shape[0] - (1 if exclude is not None else 0)
    if not 1 <= k <= n_avail:
        raise ValueError(f"k must be in 1..{n_avail}, got {k}")
    d = pairwise_distances(np.atleast_2d(_as_points(q).ravel()), pts)[0]
    if exclude is not None:
        d[exclude] = np.inf
    return np.argsort(d, kind="stable")[:k]


def in_nprime(i, q, graph):
    """Is q among the k nearest neighbors of x_i in (D minus x_i) plus q?"""
    dq = pairwise_distances(np.atleast_2d(_as_points(q).ravel()), graph.index.points[i : i + 1])[0, 0]
    return bool(dq < graph.radius(i))


def mutual_set(q, graph):
    """M_k(q) for an arbitrary query point, as a sorted index array."""
    qr = graph.index.query(np.atleast_2d(_as_points(q).ravel()))
    return np.flatnonzero(qr.forward_k(graph.k)[0] & qr.reverse_k(graph.k)[0])


def mutual_pairs(graph):
    """Boolean matrix of mutual pairs inside the dataset."""
    A = graph.adjacency
    return A & A.T


def weight_mknn(i, j, graph, sigma0=1.0):
    if i == j:
        return 0.0
    A = graph.adjacency
    return sigma0 * float(A[i, j] and A[j, i])


def weight_sknn(i, j, graph, sigma0=1.0):
    if i == j:
        return 0.0
    A = graph.adjacency
    return sigma0 * (float(A[i, j]) + float(A[j, i]))


@dataclass(frozen=True)
class WeightedGraph:
    """Symmetric edge weights W, degrees and Laplacian L = D - W."""

    W: np.ndarray
    variant: str
    sigma0: float
    k: int

    @property
    def n(self):
        return self.W.shape[0]

    @property
    def degrees(self):
        return self.W.sum(axis=1)

    @property
    def laplacian(self):
        return np.diag(self.degrees) - self.W

    def scaled(self, sigma0):
        """Same graph with a different weight scale."""
        return WeightedGraph(self.W * (sigma0 / self.sigma0), self.variant, float(sigma0), self.k)


def unit_weights(adjacency, variant):
    """Edge weights at sigma0 = 1 from a directed k-NN adjacency matrix."""
    variant = check_variant(variant)
    A = np.asarray(adjacency, dtype=bool)
    if variant == MKNN:
        W = (A & A.T).astype(float)
    else:
        W = A.astype(float) + A.T.astype(float)
    np.fill_diagonal(W, 0.0)
    return W


def build_weighted_graph(data, k, sigma0, variant, index=None):
    """Weighted mutual or symmetric k-NN graph over a dataset."""
    if not sigma0 > 0:
        raise ValueError(f"sigma0 must be positive, got {sigma0}")
    variant = check_variant(variant)
    if index is None:
        index = NeighborIndex(data)
    n = index.n
    if n == 1:
        # a single point has no neighbors and no edges
        if k != 1:
            raise ValueError("a one-point dataset only admits k = 1")
        return WeightedGraph(np.zeros((1, 1)), variant, float(sigma0), 1)
    if not 1 <= k <= n - 1:
        raise ValueError(f"k must be in 1..{n - 1}, got {k}")
    W = sigma0 * unit_weights(index.adjacency(k), variant)
    W.setflags(write=False)
    return WeightedGraph(W, variant, float(sigma0), int(k))


def dump_matrix_csv(matrix, path):
    """Write a dense matrix as plain CSV for inspection."""
    np.savetxt(path, np.asarray(matrix), delimiter=",", fmt="%.17g")
