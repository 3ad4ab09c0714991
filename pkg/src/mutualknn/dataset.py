"""Labeled datasets, target encodings, Sinc3C generation, CSV I/O and folds."""

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


class DataError(ValueError):
    """Raised for malformed or inconsistent input data."""


@dataclass(frozen=True)
class LabeledDataset:
    """Points in R^d with class labels in ``1..n_classes``.

    Labels are 1-based to match the usual C_1..C_J naming; use
    :attr:`labels0` for 0-based indexing into per-class arrays.
    """

    points: np.ndarray
    labels: np.ndarray
    n_classes: int
    class_names: tuple = field(default=())

    def __post_init__(self):
        points = np.asarray(self.points, dtype=float)
        if points.ndim == 1:
            points = points[:, None]
        labels = np.asarray(self.labels, dtype=np.int64)
        if points.ndim != 2 or points.shape[1] < 1:
            raise DataError("points must be an (n, d) array with d >= 1")
        if labels.shape != (points.shape[0],):
            raise DataError(
                f"got {labels.shape[0] if labels.ndim else 0} labels for {points.shape[0]} points"
            )
        J = int(self.n_classes)
        if J < 1:
            raise DataError("n_classes must be positive")
        if labels.size and (labels.min() < 1 or labels.max() > J):
            raise DataError(f"labels must lie in 1..{J}")
        names = tuple(self.class_names) or tuple(str(c) for c in range(1, J + 1))
        if len(names) != J:
            raise DataError("class_names must have one entry per class")
        points.setflags(write=False)
        labels.setflags(write=False)
        object.__setattr__(self, "points", points)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "n_classes", J)
        object.__setattr__(self, "class_names", names)

    @property
    def n(self):
        return self.points.shape[0]

    @property
    def d(self):
        return self.points.shape[1]

    @property
    def labels0(self):
        return self.labels - 1

    def subset(self, idx):
        idx = np.asarray(idx, dtype=np.int64)
        return LabeledDataset(self.points[idx], self.labels[idx], self.n_classes, self.class_names)

    def with_points(self, points):
        return LabeledDataset(points, self.labels, self.n_classes, self.class_names)


# ---------------------------------------------------------------------------
# Sinc3C
# ---------------------------------------------------------------------------

def sinc(x):
    """Normalized sinc, sin(pi x) / (pi x), with exact zeros at nonzero integers.

    Works on scalars and arrays. ``np.sinc`` leaves ~1e-17 residue at the
    integer roots, whose sign would flip Sinc3C labels, so those points are
    pinned to 0.
    """
    x = np.asarray(x, dtype=float)
    out = np.sinc(x)
    out = np.where((x == np.round(x)) & (x != 0), 0.0, out)
    return out if out.ndim else float(out)


def sinc3c_label(x, exact_roots=False):
    """Class index in 1..3 for sinc(x) in (-inf, 0), [0, 0.2), [0.2, inf).

    By default sinc is evaluated in plain floating point, so the even
    integer roots come out as -3.9e-17 and land in C_1 while the odd ones
    land in C_2. This is the labeling that reproduces the published Sinc3C
    error rates. ``exact_roots=True`` pins every root to 0 (all C_2).
    """
    s = np.atleast_1d(sinc(x) if exact_roots else np.sinc(np.asarray(x, dtype=float)))
    return np.where(s < 0, 1, np.where(s < 0.2, 2, 3)).astype(np.int64)


def _sinc3c(x, exact_roots):
    return LabeledDataset(x[:, None], sinc3c_label(x, exact_roots), 3, ("C1", "C2", "C3"))


def gen_sinc3c_train(exact_roots=False):
    """59 points -5, -4.83, ..., 4.86 (spacing 0.17) labeled by sinc thresholds."""
    i = np.arange(59)
    return _sinc3c((17 * i - 500) / 100, exact_roots)


def gen_sinc3c_test(exact_roots=False):
    """201 points on [-5, 5] with spacing 0.05, same labeling rule."""
    i = np.arange(201)
    return _sinc3c((i - 100) / 20, exact_roots)


# ---------------------------------------------------------------------------
# Target encodings
# ---------------------------------------------------------------------------

def encode_binary(ds):
    """-1 for C_1, +1 for C_2."""
    if ds.n_classes != 2:
        raise DataError(f"binary encoding needs exactly 2 classes, got {ds.n_classes}")
    return np.where(ds.labels == 1, -1.0, 1.0)


def encode_onehot(ds):
    """n x J indicator matrix, row i has a single 1 in column y_i."""
    Y = np.zeros((ds.n, ds.n_classes))
    Y[np.arange(ds.n), ds.labels0] = 1.0
    return Y


# ---------------------------------------------------------------------------
# CSV
# ---------------------------------------------------------------------------

def load_csv(path, label_column=-1, has_header=True, label_map=None):
    """Read a comma-separated file into a :class:`LabeledDataset`.

    ``label_column`` is a column index (negative counts from the end) or,
    when the file has a header, a column name. Labels are numbered in order of
    first appearance unless ``label_map`` (token -> 1-based index) is given.
    """
    path = Path(path)
    if not path.exists():
        raise DataError(f"{path}: no such file")
    with path.open(newline="") as fh:
        rows = [r for r in csv.reader(fh)]
    # drop fully blank lines, remembering 1-based file row numbers
    numbered = [(i + 1, r) for i, r in enumerate(rows) if any(c.strip() for c in r)]
    if not numbered:
        raise DataError(f"{path}: empty file")
    header = None
    if has_header:
        header = [c.strip() for c in numbered[0][1]]
        numbered = numbered[1:]
    if not numbered:
        raise DataError(f"{path}: no data rows")

    width = len(header) if header is not None else len(numbered[0][1])
    if isinstance(label_column, str):
        if header is None:
            raise DataError("label column given by name but file has no header")
        try:
            col = header.index(label_column)
        except ValueError:
            raise DataError(f"{path}: no column named {label_column!r}") from None
    else:
        col = int(label_column)
        if not -width <= col < width:
            raise DataError(f"{path}: label column {col} out of range for {width} columns")
        col %= width
    if width < 2:
        raise DataError(f"{path}: need at least one feature column and a label column")

    feats, tokens = [], []
    for lineno, row in numbered:
        if len(row) != width:
            raise DataError(f"{path}: row {lineno} has {len(row)} columns, expected {width}")
        vals = []
        for c, cell in enumerate(row):
            if c == col:
                continue
            try:
                v = float(cell)
            except ValueError:
                raise DataError(f"{path}: row {lineno}, column {c + 1}: cannot parse {cell.strip()!r} as a number") from None
            if not np.isfinite(v):
                raise DataError(f"{path}: row {lineno}, column {c + 1}: non-finite value")
            vals.append(v)
        feats.append(vals)
        tokens.append(row[col].strip())

    if label_map is None:
        label_map = {}
        for t in tokens:
            label_map.setdefault(t, len(label_map) + 1)
    else:
        label_map = dict(label_map)
        missing = sorted(set(tokens) - set(label_map))
        if missing:
            raise DataError(f"{path}: labels {missing} not in the supplied label map")
    J = max(label_map.values())
    names = [""] * J
    for tok, idx in label_map.items():
        names[idx - 1] = tok
    labels = np.array([label_map[t] for t in tokens])
    return LabeledDataset(np.array(feats), labels, J, tuple(names))


def write_csv(ds, path):
    """Inverse of :func:`load_csv`: features x1..xd then a ``label`` column."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([f"x{c + 1}" for c in range(ds.d)] + ["label"])
        for x, y in zip(ds.points, ds.labels):
            w.writerow([repr(float(v)) for v in x] + [ds.class_names[y - 1]])


# ---------------------------------------------------------------------------
# Standardization and folds
# ---------------------------------------------------------------------------

def feature_stats(points):
    """Per-feature mean and population standard deviation (1 where it is 0)."""
    points = np.asarray(points, dtype=float)
    mean = points.mean(axis=0)
    scale = points.std(axis=0)
    scale = np.where(scale > 0, scale, 1.0)
    return mean, scale


def standardize(train, others=()):
    """Standardize ``train`` and each of ``others`` with train statistics only."""
    if train.n == 0:
        raise DataError("cannot standardize an empty training set")
    mean, scale = feature_stats(train.points)
    tr = train.with_points((train.points - mean) / scale)
    return tr, [o.with_points((o.points - mean) / scale) for o in others]


@dataclass(frozen=True)
class FoldPlan:
    fold_count: int
    assignment: np.ndarray
    seed: int

    def split(self, fold):
        """(train_idx, test_idx) for one fold."""
        test = np.flatnonzero(self.assignment == fold)
        train = np.flatnonzero(self.assignment != fold)
        return train, test

    def __iter__(self):
        for f in range(self.fold_count):
            yield self.split(f)


def make_folds(ds, fold_count, seed=0):
    """Stratified fold assignment.

    Within each class (in class order) the points are shuffled by a single
    seeded generator and dealt round-robin; the dealer position carries over
    between classes so fold sizes differ by at most one.
    """
    fold_count = int(fold_count)
    if not 2 <= fold_count <= ds.n:
        raise DataError(f"fold_count must be in 2..{ds.n}, got {fold_count}")
    rng = np.random.default_rng(seed)
    assignment = np.empty(ds.n, dtype=np.int64)
    pos = 0
    for c in range(1, ds.n_classes + 1):
        idx = np.flatnonzero(ds.labels == c)
        idx = idx[rng.permutation(idx.size)]
        assignment[idx] = (pos + np.arange(idx.size)) % fold_count
        pos = (pos + idx.size) % fold_count
    assignment.setflags(write=False)
    return FoldPlan(fold_count, assignment, int(seed))
