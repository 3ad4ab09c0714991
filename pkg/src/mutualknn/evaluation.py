"""Leave-one-out k selection, k-fold cross-validation and error metrics."""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
import csv
import logging

import numpy as np

from . import classic, gp
from .classify import (BMKNN, BSKNN, KNN, MKNN_BK, MKNN_CV, SKNN_BK, SKNN_CV,
                       bayes_decide, classic_decide)
from .dataset import standardize as _standardize
from .neighbors import NeighborIndex

log = logging.getLogger(__name__)

_CLASSIC = {KNN: classic.KNN, MKNN_CV: classic.MKNN, SKNN_CV: classic.SKNN,
            "knn": classic.KNN, "mknn": classic.MKNN, "sknn": classic.SKNN}


def error_rate(predicted, actual):
    predicted = np.asarray(predicted)
    actual = np.asarray(actual)
    if predicted.shape != actual.shape:
        raise ValueError(f"length mismatch: {predicted.shape} vs {actual.shape}")
    if predicted.size == 0:
        raise ValueError("error rate of an empty prediction")
    return float(np.mean(predicted != actual))


def _classic(method):
    try:
        return _CLASSIC[method]
    except KeyError:
        raise ValueError(f"LOOCV is defined for classic methods, got {method!r}") from None


def loocv_k_grid(n, k_max=100):
    return list(range(1, max(1, min(n - 2, k_max)) + 1))


def loocv_curve(ds, method, k_grid=None, index=None):
    """Leave-one-out error for every k in the grid.

    Each point is classified as a query against the remaining n-1 points;
    the reverse relation is evaluated within that reduced set.
    """
    method = _classic(method)
    if ds.n < 2:
        raise ValueError("leave-one-out needs at least 2 points")
    k_grid = loocv_k_grid(ds.n) if k_grid is None else list(k_grid)
    # kNN only needs k remaining points; M/S-kNN need k <= n - 2
    hi = ds.n - 1 if method == classic.KNN else ds.n - 2
    bad = [k for k in k_grid if not 1 <= k <= hi]
    if bad:
        raise ValueError(f"k values {bad} outside 1..{hi}")
    if index is None:
        index = NeighborIndex(ds)
    loo = index.leave_one_out()
    out = np.empty(len(k_grid))
    for t, k in enumerate(k_grid):
        d = classic.decide(method, loo, ds.labels, ds.n_classes, k)
        out[t] = error_rate(d.labels, ds.labels)
    return out


def loocv_error(ds, method, k, index=None):
    return float(loocv_curve(ds, method, [k], index=index)[0])


def select_k_loocv(ds, method, k_grid=None, index=None):
    """k with the smallest leave-one-out error (smallest k on ties)."""
    k_grid = loocv_k_grid(ds.n) if k_grid is None else list(k_grid)
    if not k_grid:
        raise ValueError("empty k grid")
    curve = loocv_curve(ds, method, k_grid, index=index)
    return int(k_grid[int(np.argmin(curve))])


@dataclass
class CVResult:
    """Per-fold errors and selected hyperparameters of one method."""

    name: str
    method: str
    fold_errors: list = field(default_factory=list)
    selected: list = field(default_factory=list)

    @property
    def mean(self):
        return float(np.mean(self.fold_errors))

    @property
    def std(self):
        """Sample standard deviation (n-1 denominator) over folds."""
        if len(self.fold_errors) < 2:
            return 0.0
        return float(np.std(self.fold_errors, ddof=1))

    @property
    def population_std(self):
        return float(np.std(self.fold_errors, ddof=0))

    @property
    def ks(self):
        return [s["k"] for s in self.selected]


class FoldError(RuntimeError):
    def __init__(self, fold, exc):
        super().__init__(f"fold {fold}: {exc}")
        self.fold = fold


def _evidence_key(spec):
    return (spec.variant, spec.formulation, spec.sigma0, spec.sigma2, spec.mode)


def _evidence_sources(specs):
    """Map (variant, formulation) to the method row supplying evidence settings.

    The BK rows reuse the initial values of the Bayesian row with the same
    variant and formulation when one is present.
    """
    src = {}
    for s in specs:
        if s.method in (BMKNN, BSKNN):
            src.setdefault((s.variant, s.formulation), s)
    return src


def fit_and_score(train, test, specs, k_max=100, sources=None, evidence_cache=None):
    """Run every method row on one train/test split.

    Returns a list of (error, selection-dict) in row order. Selection only
    sees ``train``. Pass a dict as ``evidence_cache`` to get the
    :class:`gp.Selection` objects (with their k traces) back.
    """
    sources = _evidence_sources(specs) if sources is None else sources
    index = NeighborIndex(train)
    qr = index.query(test.points)
    loo_grid = loocv_k_grid(train.n, k_max)
    ev_grid = gp.default_k_grid(train.n, k_max)
    evidence_cache = {} if evidence_cache is None else evidence_cache
    out = []
    for spec in specs:
        spec.check_classes(train.n_classes)
        if spec.method in (KNN, MKNN_CV, SKNN_CV):
            k = select_k_loocv(train, spec.method, loo_grid, index=index)
            pred = classic_decide(qr, train, spec.method, k)
            out.append((error_rate(pred.labels, test.labels), {"k": k}))
            continue
        ev_spec = sources.get((spec.variant, spec.formulation), spec)
        key = _evidence_key(ev_spec)
        if key not in evidence_cache:
            evidence_cache[key] = gp.optimize_hyperparams(
                train, ev_spec.variant, ev_spec.formulation, ev_grid,
                ev_spec.sigma0, ev_spec.sigma2, ev_spec.mode, index=index,
            )
        hp = evidence_cache[key].hyper
        sel = {"k": hp.k, "sigma0": hp.sigma0, "sigma2": hp.sigma2,
               "log_evidence": evidence_cache[key].log_evidence}
        if spec.method in (BMKNN, BSKNN):
            pred = bayes_decide(qr, train, hp, spec.variant, spec.formulation)
        else:
            pred = classic_decide(qr, train, spec.method, hp.k)
        out.append((error_rate(pred.labels, test.labels), sel))
    return out


def _run_fold(ds, folds, f, specs, standardize, k_max, sources):
    tr_idx, te_idx = folds.split(f)
    train, test = ds.subset(tr_idx), ds.subset(te_idx)
    if standardize:
        train, (test,) = _standardize(train, [test])
    try:
        scored = fit_and_score(train, test, specs, k_max, sources)
    except Exception as exc:
        raise FoldError(f, exc) from exc
    log.info("fold %d/%d done", f + 1, folds.fold_count)
    return scored


def run_cv(ds, folds, specs, standardize=False, k_max=100, jobs=1):
    """k-fold cross-validation of several methods on shared folds.

    With ``standardize`` each training portion is standardized and its
    statistics applied to the held-out portion. Folds are independent;
    ``jobs > 1`` evaluates them on a thread pool and the results are
    collected in fold order, so the output does not depend on ``jobs``.
    """
    specs = list(specs)
    if not specs:
        raise ValueError("no methods to evaluate")
    sources = _evidence_sources(specs)
    fold_ids = range(folds.fold_count)
    args = (specs, standardize, k_max, sources)
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            per_fold = list(pool.map(lambda f: _run_fold(ds, folds, f, *args), fold_ids))
    else:
        per_fold = [_run_fold(ds, folds, f, *args) for f in fold_ids]
    results = [CVResult(s.name, s.method) for s in specs]
    for scored in per_fold:
        for res, (err, sel) in zip(results, scored):
            res.fold_errors.append(err)
            res.selected.append(sel)
    return results


# ---------------------------------------------------------------------------
# Output
# ---------------------------------------------------------------------------

def fmt_rate(x):
    """Error rates are written with 6 significant digits."""
    return f"{x:#.6g}"


def fmt_num(x):
    return f"{x:.10g}"


def format_table(rows, title=""):
    """Aligned text table from a list of equal-length string tuples."""
    rows = [tuple(str(c) for c in r) for r in rows]
    widths = [max(len(r[i]) for r in rows) for i in range(len(rows[0]))]
    lines = [title] if title else []
    for t, r in enumerate(rows):
        lines.append("  ".join(c.ljust(w) for c, w in zip(r, widths)).rstrip())
        if t == 0:
            lines.append("  ".join("-" * w for w in widths))
    return "\n".join(lines) + "\n"


def cv_error_rows(results):
    rows = [("method", "mean", "std", "mean_k")]
    for r in results:
        rows.append((r.name, fmt_rate(r.mean), fmt_rate(r.std), f"{np.mean(r.ks):.1f}"))
    return rows


def cv_k_rows(results):
    n_folds = len(results[0].fold_errors)
    rows = [("method",) + tuple(f"fold{f + 1}" for f in range(n_folds)) + ("mean",)]
    for r in results:
        rows.append((r.name,) + tuple(str(k) for k in r.ks) + (f"{np.mean(r.ks):.1f}",))
    return rows


def write_rows(rows, path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerows(rows)


def write_cv_folds(results, path):
    """Long-format CSV: one row per (method, fold)."""
    rows = [("method", "fold", "error", "k", "sigma0", "sigma2", "log_evidence")]
    for r in results:
        for f, (err, sel) in enumerate(zip(r.fold_errors, r.selected)):
            rows.append((
                r.name, f, fmt_rate(err), sel["k"],
                fmt_num(sel["sigma0"]) if "sigma0" in sel else "",
                fmt_num(sel["sigma2"]) if "sigma2" in sel else "",
                fmt_num(sel["log_evidence"]) if "log_evidence" in sel else "",
            ))
    write_rows(rows, path)
