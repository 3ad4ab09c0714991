"""Gaussian processes whose precision matrix is a k-NN graph Laplacian.

The precision of the training targets is ``C~ = L + sigma2 * I`` where ``L``
is the Laplacian of the mutual or symmetric k-NN graph with edge scale
``sigma0``. Predictions for a new point only need its edge weights to the
training set; model selection maximizes the log marginal likelihood
(evidence) over ``sigma0``, ``sigma2`` and ``k``.

Three evidence functions are supported:

``binary``  targets -1/+1, one Gaussian process.
``mul1``    one-hot targets, J independent processes sharing ``C~``.
``mul2``    J-1 class differences per point with the expanded covariance
            ``C_MUL``; every difference target equals 1.

Dense routines (:func:`log_evidence_binary`, :func:`build_cmul`, ...) follow
the definitions literally and use Cholesky factors. The optimizer uses
:class:`SpectralEvidence`, an exact reformulation in terms of the
eigenvalues of the unit-scale Laplacian that makes each iterate O(n).
"""

from dataclasses import dataclass, field
import logging
import math
import warnings

import numpy as np
import scipy.linalg

from .neighbors import NeighborIndex, WeightedGraph, build_weighted_graph, check_variant, unit_weights

log = logging.getLogger(__name__)

LOG_2PI = math.log(2.0 * math.pi)

BINARY = "binary"
MUL1 = "mul1"
MUL2 = "mul2"
FORMULATIONS = (BINARY, MUL1, MUL2)

OPTIMIZE = "optimize"
FIXED = "fixed"

# box on log(sigma0) and log(sigma2); the evidence is unbounded in sigma0
# when no edge joins differently labeled points
LOG_BOUNDS = (math.log(1e-10), math.log(1e10))


class NumericalError(ArithmeticError):
    """A factorization or evaluation broke down."""


def check_formulation(formulation):
    f = str(formulation).lower()
    if f not in FORMULATIONS:
        raise ValueError(f"formulation must be one of {FORMULATIONS}, got {formulation!r}")
    return f


@dataclass(frozen=True)
class Hyperparams:
    k: int
    sigma0: float
    sigma2: float

    def __post_init__(self):
        if int(self.k) < 1:
            raise ValueError(f"k must be >= 1, got {self.k}")
        if not self.sigma0 > 0:
            raise ValueError(f"sigma0 must be positive, got {self.sigma0}")
        if not self.sigma2 > 0:
            raise ValueError(f"sigma2 must be positive, got {self.sigma2}")
        object.__setattr__(self, "k", int(self.k))
        object.__setattr__(self, "sigma0", float(self.sigma0))
        object.__setattr__(self, "sigma2", float(self.sigma2))


# ---------------------------------------------------------------------------
# Precision matrix
# ---------------------------------------------------------------------------

@dataclass
class SPDReport:
    symmetric: bool
    positive_definite: bool
    min_pivot: float

    @property
    def ok(self):
        return self.symmetric and self.positive_definite


def check_spd(model_or_matrix):
    """Exact symmetry check plus a Cholesky attempt.

    ``min_pivot`` is the smallest pivot of the LDL^T factorization, i.e. the
    smallest squared diagonal entry of the Cholesky factor (nan on failure).
    """
    A = getattr(model_or_matrix, "matrix", model_or_matrix)
    A = np.asarray(A, dtype=float)
    symmetric = bool(np.array_equal(A, A.T))
    try:
        c = scipy.linalg.cholesky(A, lower=True, check_finite=True)
    except (np.linalg.LinAlgError, ValueError):
        return SPDReport(symmetric, False, float("nan"))
    return SPDReport(symmetric, True, float(np.min(np.diag(c)) ** 2))


class PrecisionModel:
    """``C~ = L + sigma2 I`` with its Cholesky factor."""

    def __init__(self, graph, sigma2):
        if not sigma2 > 0:
            raise ValueError(f"sigma2 must be positive, got {sigma2}")
        self.graph = graph
        self.sigma2 = float(sigma2)
        M = graph.laplacian + self.sigma2 * np.eye(graph.n)
        self.matrix = M
        try:
            self.chol = scipy.linalg.cholesky(M, lower=True)
        except np.linalg.LinAlgError as exc:
            raise NumericalError(f"Cholesky of the precision matrix failed: {exc}") from exc
        self.logdet = 2.0 * float(np.sum(np.log(np.diag(self.chol))))
        self._inv = None

    @property
    def n(self):
        return self.matrix.shape[0]

    @property
    def variant(self):
        return self.graph.variant

    @property
    def covariance(self):
        """C = C~^{-1}."""
        if self._inv is None:
            self._inv = scipy.linalg.cho_solve((self.chol, True), np.eye(self.n))
            self._inv = 0.5 * (self._inv + self._inv.T)
        return self._inv

    def dprecision(self, theta):
        """Derivative of C~ with respect to ``sigma0`` or ``sigma2``."""
        if theta == "sigma2":
            return np.eye(self.n)
        if theta == "sigma0":
            return self.graph.laplacian / self.graph.sigma0
        raise ValueError(f"theta must be 'sigma0' or 'sigma2', got {theta!r}")


def build_precision(graph, sigma2):
    return PrecisionModel(graph, sigma2)


# ---------------------------------------------------------------------------
# Dense evidence
# ---------------------------------------------------------------------------

def _as_columns(y):
    y = np.asarray(y, dtype=float)
    return y[:, None] if y.ndim == 1 else y


def _gauss_precision_logpdf(model, T):
    """Sum over columns t of log N(t; 0, C~^{-1})."""
    T = _as_columns(T)
    n, m = T.shape
    quad = float(np.sum(T * (model.matrix @ T)))
    return m * (0.5 * model.logdet - 0.5 * n * LOG_2PI) - 0.5 * quad


def log_evidence_binary(model, y):
    """log N(y; 0, C~^{-1}) for a single target vector."""
    y = np.asarray(y, dtype=float)
    if y.shape != (model.n,):
        raise ValueError(f"expected {model.n} targets, got shape {y.shape}")
    return _gauss_precision_logpdf(model, y)


def log_evidence_mul1(model, Y):
    """Evidence of J independent processes, one per one-hot column."""
    Y = _as_columns(Y)
    if Y.shape[0] != model.n:
        raise ValueError(f"expected {model.n} rows, got {Y.shape[0]}")
    return _gauss_precision_logpdf(model, Y)


@dataclass
class DifferenceCovariance:
    """Covariance of the class-difference outputs g_i^{y_i, j}, j != y_i."""

    matrix: np.ndarray
    point: np.ndarray
    other_class: np.ndarray
    labels: np.ndarray
    base: np.ndarray
    jitter: float = 0.0

    @property
    def size(self):
        return self.matrix.shape[0]


def _cmul_rows(labels, n_classes):
    labels = np.asarray(labels, dtype=np.int64)
    point, other = [], []
    for i, y in enumerate(labels):
        for j in range(1, n_classes + 1):
            if j != y:
                point.append(i)
                other.append(j)
    return np.array(point, dtype=np.int64), np.array(other, dtype=np.int64)


def _cmul_pattern(labels, point, other):
    """Delta pattern d(y_i,y_k) - d(y_i,l) - d(y_k,j) + d(j,l) per row pair."""
    yi = labels[point][:, None]
    yk = labels[point][None, :]
    j = other[:, None]
    l = other[None, :]
    return (yi == yk).astype(float) - (yi == l) - (yk == j) + (j == l)


def build_cmul(model_or_cov, labels, n_classes=None):
    """Expanded (J-1)n x (J-1)n covariance of the difference outputs.

    Rows are ordered point by point, and within a point by the other class
    index j != y_i in increasing order. ``labels`` are 1-based.
    """
    base = getattr(model_or_cov, "covariance", model_or_cov)
    base = np.asarray(base, dtype=float)
    labels = np.asarray(labels, dtype=np.int64)
    J = int(n_classes if n_classes is not None else labels.max())
    if J < 2:
        raise ValueError("formulation II needs at least 2 classes")
    point, other = _cmul_rows(labels, J)
    K = _cmul_pattern(labels, point, other) * base[np.ix_(point, point)]
    return DifferenceCovariance(K, point, other, labels, base)


def _cmul_factor(cmul):
    K = cmul.matrix
    try:
        return scipy.linalg.cholesky(K, lower=True), 0.0
    except np.linalg.LinAlgError:
        jitter = 1e-10 * np.trace(K) / K.shape[0]
        warnings.warn(f"C_MUL not numerically positive definite; adding jitter {jitter:.3g}", RuntimeWarning)
        try:
            return scipy.linalg.cholesky(K + jitter * np.eye(K.shape[0]), lower=True), jitter
        except np.linalg.LinAlgError as exc:
            raise NumericalError(f"C_MUL factorization failed after jitter: {exc}") from exc


def log_evidence_mul2(cmul):
    """log N(1; 0, C_MUL): every difference target f^{y_i} - f^j equals 1."""
    c, jitter = _cmul_factor(cmul)
    cmul.jitter = jitter
    m = cmul.size
    ones = np.ones(m)
    alpha = scipy.linalg.cho_solve((c, True), ones)
    logdet = 2.0 * float(np.sum(np.log(np.diag(c))))
    return -0.5 * (m * LOG_2PI + logdet) - 0.5 * float(ones @ alpha)


def log_evidence(model, labels, n_classes, formulation):
    """Dispatch to the dense evidence of a formulation from class labels."""
    formulation = check_formulation(formulation)
    labels = np.asarray(labels, dtype=np.int64)
    if formulation == BINARY:
        if n_classes != 2:
            raise ValueError("binary formulation needs exactly 2 classes")
        return log_evidence_binary(model, np.where(labels == 1, -1.0, 1.0))
    if formulation == MUL1:
        return log_evidence_mul1(model, _onehot(labels, n_classes))
    return log_evidence_mul2(build_cmul(model, labels, n_classes))


def _onehot(labels, J):
    Y = np.zeros((labels.size, J))
    Y[np.arange(labels.size), labels - 1] = 1.0
    return Y


def evidence_gradient(model, labels, n_classes, theta, formulation):
    """Analytic derivative of the dense evidence w.r.t. ``sigma0`` or ``sigma2``.

    For binary and mul1: 1/2 tr(C~^{-1} dC~) - 1/2 sum_t t^T dC~ t.
    For mul2 the derivative flows through C_f = C~^{-1}: dC_f = -C_f dC~ C_f,
    expanded with the same delta pattern as C_MUL.
    """
    formulation = check_formulation(formulation)
    labels = np.asarray(labels, dtype=np.int64)
    dP = model.dprecision(theta)
    if formulation in (BINARY, MUL1):
        if formulation == BINARY:
            if n_classes != 2:
                raise ValueError("binary formulation needs exactly 2 classes")
            T = np.where(labels == 1, -1.0, 1.0)[:, None]
        else:
            T = _onehot(labels, n_classes)
        m = T.shape[1]
        tr = float(np.sum(model.covariance * dP))
        return 0.5 * m * tr - 0.5 * float(np.sum(T * (dP @ T)))
    C = model.covariance
    dC = -C @ dP @ C
    cm = build_cmul(C, labels, n_classes)
    dK = _cmul_pattern(cm.labels, cm.point, cm.other_class) * dC[np.ix_(cm.point, cm.point)]
    c, _ = _cmul_factor(cm)
    Kinv = scipy.linalg.cho_solve((c, True), np.eye(cm.size))
    alpha = Kinv.sum(axis=1)
    return -0.5 * float(np.sum(Kinv * dK)) + 0.5 * float(alpha @ dK @ alpha)


# ---------------------------------------------------------------------------
# Spectral evidence (fast path for optimization)
# ---------------------------------------------------------------------------

def evidence_targets(labels, n_classes, formulation):
    """(T, copies, extra_const) such that the evidence equals

        copies * (1/2 log|C~| - n/2 log 2 pi) - 1/2 tr(T^T C~ T) + extra_const.

    For mul2 this comes from writing each point's difference outputs as an
    invertible map (|det| = sqrt(J)) of J-1 independent processes; the
    targets become the centered one-hot rows e_{y_i} - 1/J.
    """
    formulation = check_formulation(formulation)
    labels = np.asarray(labels, dtype=np.int64)
    n = labels.size
    if formulation == BINARY:
        if n_classes != 2:
            raise ValueError("binary formulation needs exactly 2 classes")
        return np.where(labels == 1, -1.0, 1.0)[:, None], 1, 0.0
    Y = _onehot(labels, n_classes)
    if formulation == MUL1:
        return Y, n_classes, 0.0
    if n_classes < 2:
        raise ValueError("formulation II needs at least 2 classes")
    return Y - 1.0 / n_classes, n_classes - 1, -0.5 * n * math.log(n_classes)


class SpectralEvidence:
    """Evidence and gradient for ``C~ = sigma0 L1 + sigma2 I`` at fixed k.

    Only the eigenvalues of the unit-scale Laplacian ``L1`` and two quadratic
    forms of the targets are needed, so each evaluation is O(n).
    """

    def __init__(self, unit_laplacian, labels, n_classes, formulation):
        L1 = np.asarray(unit_laplacian, dtype=float)
        self.eig = np.clip(scipy.linalg.eigvalsh(L1), 0.0, None)
        T, self.copies, self.extra = evidence_targets(labels, n_classes, formulation)
        self.quad_L = float(np.sum(T * (L1 @ T)))
        self.quad_I = float(np.sum(T * T))
        self.n = L1.shape[0]

    def value(self, sigma0, sigma2):
        s = sigma0 * self.eig + sigma2
        logdet = float(np.sum(np.log(s)))
        return (
            self.copies * (0.5 * logdet - 0.5 * self.n * LOG_2PI)
            - 0.5 * (sigma0 * self.quad_L + sigma2 * self.quad_I)
            + self.extra
        )

    def gradient(self, sigma0, sigma2):
        """(dL/dsigma0, dL/dsigma2)."""
        inv = 1.0 / (sigma0 * self.eig + sigma2)
        g0 = 0.5 * self.copies * float(np.sum(self.eig * inv)) - 0.5 * self.quad_L
        g2 = 0.5 * self.copies * float(np.sum(inv)) - 0.5 * self.quad_I
        return g0, g2


def _ascend(ev, sigma0, sigma2, max_iter=200, rtol=1e-8):
    """Gradient ascent on (log sigma0, log sigma2) with step halving.

    Deterministic: the step starts at 1, doubles after an accepted move and
    halves on rejection (non-finite or non-improving proposals). Stops when
    the relative improvement drops below ``rtol``.
    """
    lo, hi = LOG_BOUNDS
    u = np.clip(np.log([sigma0, sigma2]), lo, hi)
    cur = ev.value(*np.exp(u))
    if not np.isfinite(cur):
        raise NumericalError("evidence is not finite at the initial hyperparameters")
    step = 1.0
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        s = np.exp(u)
        g = np.array(ev.gradient(*s)) * s
        gnorm = float(np.linalg.norm(g))
        if gnorm == 0.0:
            converged = True
            break
        accepted = False
        while step * gnorm > 1e-14:
            cand = np.clip(u + step * g / gnorm, lo, hi)
            val = ev.value(*np.exp(cand))
            if np.isfinite(val) and val > cur:
                accepted = True
                break
            step *= 0.5
        if not accepted:
            converged = True
            break
        gain = val - cur
        u, cur = cand, val
        step *= 2.0
        if gain <= rtol * max(abs(cur), 1.0):
            converged = True
            break
    s = np.exp(u)
    return float(s[0]), float(s[1]), float(cur), converged, it


@dataclass
class EvidencePoint:
    k: int
    sigma0: float
    sigma2: float
    log_evidence: float
    converged: bool = True
    iterations: int = 0


@dataclass
class Selection:
    """Result of evidence-based model selection over a k grid."""

    hyper: Hyperparams
    trace: list = field(default_factory=list)
    variant: str = ""
    formulation: str = ""

    @property
    def log_evidence(self):
        return max(p.log_evidence for p in self.trace)


def default_k_grid(n, k_max=100):
    return list(range(1, max(1, min(n - 1, k_max)) + 1))


def optimize_hyperparams(ds, variant, formulation, k_grid=None, sigma0=1.0, sigma2=1.0,
                         mode=OPTIMIZE, index=None, max_iter=200, rtol=1e-8):
    """Choose (k, sigma0, sigma2) by maximizing the evidence.

    For every k in the grid the continuous hyperparameters are either
    optimized from the given initial values (``mode='optimize'``) or held at
    them (``mode='fixed'``). The k with the largest evidence wins; ties go to
    the smallest k. Returns a :class:`Selection` whose ``trace`` holds one
    :class:`EvidencePoint` per k.
    """
    variant = check_variant(variant)
    formulation = check_formulation(formulation)
    if mode not in (OPTIMIZE, FIXED):
        raise ValueError(f"mode must be {OPTIMIZE!r} or {FIXED!r}, got {mode!r}")
    if formulation == BINARY and ds.n_classes != 2:
        raise ValueError("binary formulation needs exactly 2 classes")
    if index is None:
        index = NeighborIndex(ds)
    n = ds.n
    k_grid = default_k_grid(n) if k_grid is None else [int(k) for k in k_grid]
    if not k_grid:
        raise ValueError("empty k grid")
    bad = [k for k in k_grid if not 1 <= k <= n - 1]
    if bad:
        raise ValueError(f"k values {bad} outside 1..{n - 1}")

    trace = []
    for k in k_grid:
        W1 = unit_weights(index.adjacency(k), variant)
        L1 = np.diag(W1.sum(axis=1)) - W1
        ev = SpectralEvidence(L1, ds.labels, ds.n_classes, formulation)
        if mode == FIXED:
            val = ev.value(sigma0, sigma2)
            if not np.isfinite(val):
                raise NumericalError(f"non-finite evidence at k={k}")
            trace.append(EvidencePoint(k, float(sigma0), float(sigma2), float(val), True, 0))
            continue
        try:
            s0, s2, val, conv, it = _ascend(ev, sigma0, sigma2, max_iter, rtol)
        except NumericalError as exc:
            log.warning("k=%d: %s", k, exc)
            trace.append(EvidencePoint(k, float(sigma0), float(sigma2), float("-inf"), False, 0))
            continue
        if not conv:
            log.info("k=%d: evidence ascent stopped after %d iterations", k, it)
        trace.append(EvidencePoint(k, s0, s2, val, conv, it))

    finite = [p for p in trace if np.isfinite(p.log_evidence)]
    if not finite:
        raise NumericalError("evidence was not finite for any k in the grid")
    best = finite[0]
    for p in finite[1:]:
        if p.log_evidence > best.log_evidence or (p.log_evidence == best.log_evidence and p.k < best.k):
            best = p
    return Selection(Hyperparams(best.k, best.sigma0, best.sigma2), trace, variant, formulation)


# ---------------------------------------------------------------------------
# Prediction
# ---------------------------------------------------------------------------

def bayes_predict(qr, targets, hp, variant):
    """Predictive means and variances for every query in ``qr``.

    mean = sum_i w(q, x_i) y_i / (sum_i w(q, x_i) + sigma2)
    var  = 1 / (sum_i w(q, x_i) + sigma2)

    ``targets`` may be a vector or an (n, m) matrix; means follow its shape.
    """
    y = np.asarray(targets, dtype=float)
    w = qr.weights(hp.k, variant, hp.sigma0)
    denom = w.sum(axis=1) + hp.sigma2
    mean = (w @ y) / (denom if y.ndim == 1 else denom[:, None])
    return mean, 1.0 / denom


def bayes_regress(q, ds, targets, hp, variant, index=None):
    """Bayesian M/S-kNN regression at a single query point."""
    if index is None:
        index = NeighborIndex(ds)
    qr = index.query(np.atleast_2d(np.asarray(q, dtype=float).ravel()))
    mean, var = bayes_predict(qr, targets, hp, variant)
    return mean[0], float(var[0])


def precision_for(ds, hp, variant, index=None):
    """Convenience: weighted graph plus precision model for a dataset."""
    graph = build_weighted_graph(ds, hp.k, hp.sigma0, variant, index=index)
    return PrecisionModel(graph, hp.sigma2)
