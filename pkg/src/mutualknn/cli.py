"""Command-line experiment runner.

Commands
--------
sinc3c          error table, LOO curves, evidence curves and scatter data
cv              k-fold cross-validation of the configured methods on a CSV
predict         label a query CSV with one method
evidence-curve  log evidence against k for one Bayesian method
loocv-curve     leave-one-out error against k for one classic method

Every command writes ``manifest.ini`` to the output directory. It holds the
fully resolved configuration, so ``<command> --config manifest.ini``
reproduces the run bit for bit.

Exit status: 0 success, 2 configuration error, 3 data error, 4 numerical
failure.
"""

import argparse
import configparser
import csv
import logging
import platform
import sys
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import __version__, _kernels, classic, gp
from . import dataset as dsmod
from . import evaluation as ev
from .classify import (BMKNN, BSKNN, KNN, MKNN_BK, MKNN_CV, SKNN_BK, SKNN_CV,
                       ClassifierSpec, bayes_decide, classic_decide)
from .dataset import DataError
from .neighbors import NeighborIndex

log = logging.getLogger("mutualknn")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_NUMERIC = 4

SINC3C = "sinc3c"
METHOD_PREFIX = "method:"


class ConfigError(ValueError):
    pass


# ---------------------------------------------------------------------------
# Configuration
# ---------------------------------------------------------------------------

@dataclass
class ExperimentConfig:
    dataset: str = SINC3C
    label_column: str = "-1"
    has_header: bool = True
    folds: int = 10
    seed: int = 0
    standardize: bool = None
    k_max: int = 100
    jobs: int = 1
    specs: list = field(default_factory=list)
    base_dir: Path = Path(".")

    @property
    def is_sinc3c(self):
        return self.dataset.strip().lower() == SINC3C

    @property
    def use_standardize(self):
        # on for real data, off for the 1-D synthetic set unless asked
        if self.standardize is None:
            return not self.is_sinc3c
        return self.standardize

    def dataset_path(self):
        p = Path(self.dataset)
        return p if p.is_absolute() else (self.base_dir / p).resolve()

    def validate(self):
        if self.folds < 2:
            raise ConfigError(f"folds must be >= 2, got {self.folds}")
        if self.k_max < 1:
            raise ConfigError(f"k_max must be >= 1, got {self.k_max}")
        if self.jobs < 1:
            raise ConfigError(f"jobs must be >= 1, got {self.jobs}")
        names = [s.name for s in self.specs]
        dup = sorted({n for n in names if names.count(n) > 1})
        if dup:
            raise ConfigError(f"duplicate method rows: {dup}")
        if not self.is_sinc3c and not self.dataset_path().exists():
            raise DataError(f"{self.dataset_path()}: no such file")

    def to_ini(self, command, extra=None):
        cp = configparser.ConfigParser(interpolation=None)
        cp["experiment"] = {
            "dataset": SINC3C if self.is_sinc3c else str(self.dataset_path()),
            "label_column": str(self.label_column),
            "has_header": "yes" if self.has_header else "no",
            "folds": str(self.folds),
            "seed": str(self.seed),
            "standardize": "yes" if self.use_standardize else "no",
            "k_max": str(self.k_max),
            "jobs": str(self.jobs),
        }
        for s in self.specs:
            sec = {"method": s.method}
            if s.formulation is not None:
                sec.update(formulation=s.formulation, sigma0=repr(s.sigma0),
                           sigma2=repr(s.sigma2), mode=s.mode)
            cp[METHOD_PREFIX + s.name] = sec
        meta = {
            "command": command,
            "version": __version__,
            "seed": str(self.seed),
            "python": platform.python_version(),
            "numpy": np.__version__,
            "numba_kernels": "yes" if _kernels.HAVE_NUMBA else "no",
        }
        meta.update(extra or {})
        cp["manifest"] = meta
        return cp


def _spec_from_section(name, sec):
    try:
        method = sec.get("method", "")
        kw = {"name": name}
        if sec.get("formulation"):
            kw["formulation"] = sec["formulation"]
        if "sigma0" in sec:
            kw["sigma0"] = float(sec["sigma0"])
        if "sigma2" in sec:
            kw["sigma2"] = float(sec["sigma2"])
        if "mode" in sec:
            kw["mode"] = sec["mode"].strip().lower()
        return ClassifierSpec(method, **kw)
    except ValueError as exc:
        raise ConfigError(f"[{METHOD_PREFIX}{name}]: {exc}") from None


def _get(cp, key, conv, default):
    if not cp.has_option("experiment", key):
        return default
    raw = cp.get("experiment", key).strip()
    if raw == "":
        return default
    try:
        return conv(cp, key)
    except ValueError:
        raise ConfigError(f"[experiment] {key} = {raw!r} is not valid") from None


def load_config(path):
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"{path}: config file not found")
    cp = configparser.ConfigParser(interpolation=None)
    try:
        cp.read(path, encoding="utf-8")
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {exc}") from None
    if not cp.has_section("experiment"):
        raise ConfigError(f"{path}: missing [experiment] section")
    allowed = {"dataset", "label_column", "has_header", "folds", "seed",
               "standardize", "k_max", "jobs"}
    unknown = sorted(set(cp["experiment"]) - allowed)
    if unknown:
        raise ConfigError(f"{path}: unknown [experiment] keys {unknown}")
    cfg = ExperimentConfig(
        dataset=cp.get("experiment", "dataset", fallback=SINC3C).strip() or SINC3C,
        label_column=cp.get("experiment", "label_column", fallback="-1").strip(),
        has_header=_get(cp, "has_header", lambda c, k: c.getboolean("experiment", k), True),
        folds=_get(cp, "folds", lambda c, k: c.getint("experiment", k), 10),
        seed=_get(cp, "seed", lambda c, k: c.getint("experiment", k), 0),
        standardize=_get(cp, "standardize", lambda c, k: c.getboolean("experiment", k), None),
        k_max=_get(cp, "k_max", lambda c, k: c.getint("experiment", k), 100),
        jobs=_get(cp, "jobs", lambda c, k: c.getint("experiment", k), 1),
        base_dir=path.resolve().parent,
    )
    for sec in cp.sections():
        if sec.startswith(METHOD_PREFIX):
            cfg.specs.append(_spec_from_section(sec[len(METHOD_PREFIX):].strip(), cp[sec]))
        elif sec not in ("experiment", "manifest"):
            raise ConfigError(f"{path}: unknown section [{sec}]")
    return cfg


def sinc3c_specs(sigma0=300.0, sigma2=9.0):
    """The eleven Sinc3C rows; Bayesian initials (sigma0, sigma) = (300, 3)."""
    b = dict(sigma0=sigma0, sigma2=sigma2)
    return [
        ClassifierSpec(KNN), ClassifierSpec(MKNN_CV), ClassifierSpec(SKNN_CV),
        ClassifierSpec(BMKNN, gp.MUL1, **b), ClassifierSpec(BSKNN, gp.MUL1, **b),
        ClassifierSpec(MKNN_BK, gp.MUL1, **b), ClassifierSpec(SKNN_BK, gp.MUL1, **b),
        ClassifierSpec(BMKNN, gp.MUL2, **b), ClassifierSpec(BSKNN, gp.MUL2, **b),
        ClassifierSpec(MKNN_BK, gp.MUL2, **b), ClassifierSpec(SKNN_BK, gp.MUL2, **b),
    ]


# ---------------------------------------------------------------------------
# Argument handling
# ---------------------------------------------------------------------------

def _fixed_hyper(text):
    try:
        a, b = (float(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected 'sigma0,sigma2', got {text!r}") from None
    if not (a > 0 and b > 0):
        raise argparse.ArgumentTypeError("sigma0 and sigma2 must be positive")
    return a, b


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="INI experiment file (or a manifest.ini)")
    common.add_argument("--out-dir", default="out", help="output directory (default: out)")
    common.add_argument("--seed", type=int, help="fold seed")
    common.add_argument("--k-max", type=int, help="largest k searched")
    common.add_argument("--standardize", action=argparse.BooleanOptionalAction, default=None,
                        help="z-score features with training statistics")
    common.add_argument("--fixed-hyper", type=_fixed_hyper, metavar="S0,S2",
                        help="hold (sigma0, sigma2) fixed at these values")
    common.add_argument("--method", action="append",
                        help="method tag; repeat to keep several rows")
    common.add_argument("--formulation", choices=gp.FORMULATIONS)
    common.add_argument("-v", "--verbose", action="count", default=0)

    p = argparse.ArgumentParser(prog="mutualknn", description=__doc__.split("\n\n")[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("sinc3c", parents=[common], help="Sinc3C table, curves and scatter data")
    c = sub.add_parser("cv", parents=[common], help="k-fold cross-validation")
    c.add_argument("--data", help="CSV dataset (overrides the config)")
    c.add_argument("--folds", type=int)
    c.add_argument("--jobs", type=int, help="folds evaluated in parallel")
    q = sub.add_parser("predict", parents=[common], help="label a query CSV")
    q.add_argument("--train", required=True, help="labeled training CSV")
    q.add_argument("--query", required=True, help="query CSV with the training feature columns")
    q.add_argument("--k", type=int, help="k to use; selected on the training set when omitted")
    q.add_argument("--exclude-self", action="store_true",
                   help="drop a training point identical to the query from its own neighbors")
    for name, hlp in (("evidence-curve", "log evidence against k"),
                      ("loocv-curve", "leave-one-out error against k")):
        e = sub.add_parser(name, parents=[common], help=hlp)
        e.add_argument("--data", help="CSV dataset or 'sinc3c' (overrides the config)")
    return p


def _apply_overrides(cfg, args):
    if args.seed is not None:
        cfg.seed = args.seed
    if args.k_max is not None:
        cfg.k_max = args.k_max
    if args.standardize is not None:
        cfg.standardize = args.standardize
    if getattr(args, "data", None):
        cfg.dataset = args.data
        cfg.base_dir = Path.cwd()
    if getattr(args, "folds", None) is not None:
        cfg.folds = args.folds
    if getattr(args, "jobs", None) is not None:
        cfg.jobs = args.jobs
    specs = cfg.specs
    if args.method:
        want = {m.upper() for m in args.method}
        specs = [s for s in specs if s.method in want]
    if args.formulation:
        specs = [s for s in specs if s.formulation in (None, args.formulation)]
    if args.fixed_hyper:
        s0, s2 = args.fixed_hyper
        specs = [s if s.formulation is None else replace(s, sigma0=s0, sigma2=s2, mode=gp.FIXED)
                 for s in specs]
    cfg.specs = specs
    return cfg


def _base_config(args, default_specs):
    if args.config:
        cfg = load_config(args.config)
        if not cfg.specs:
            cfg.specs = list(default_specs)
    else:
        cfg = ExperimentConfig(specs=list(default_specs), base_dir=Path.cwd())
    return _apply_overrides(cfg, args)


def _load_dataset(cfg):
    if cfg.is_sinc3c:
        return dsmod.gen_sinc3c_train()
    col = cfg.label_column
    try:
        col = int(col)
    except ValueError:
        pass
    return dsmod.load_csv(cfg.dataset_path(), label_column=col, has_header=cfg.has_header)


def _out_dir(args):
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_manifest(out, cfg, command, extra=None):
    cp = cfg.to_ini(command, extra)
    with open(out / "manifest.ini", "w", encoding="utf-8", newline="\n") as fh:
        cp.write(fh)


def _write_text(path, text):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def _evidence_csv(trace, path):
    rows = [("k", "sigma0", "sigma2", "log_evidence")]
    rows += [(p.k, ev.fmt_num(p.sigma0), ev.fmt_num(p.sigma2), ev.fmt_num(p.log_evidence))
             for p in trace]
    ev.write_rows(rows, path)


def _slug(text):
    return "".join(c.lower() if c.isalnum() else "_" for c in text).strip("_")


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------

def cmd_sinc3c(args):
    cfg = _base_config(args, sinc3c_specs())
    cfg.dataset = SINC3C
    cfg.validate()
    if not cfg.specs:
        raise ConfigError("no method rows selected")
    out = _out_dir(args)
    train, test = dsmod.gen_sinc3c_train(), dsmod.gen_sinc3c_test()
    if cfg.use_standardize:
        train, (test,) = dsmod.standardize(train, [test])
    cache = {}
    scored = ev.fit_and_score(train, test, cfg.specs, cfg.k_max, evidence_cache=cache)

    rows = [("method", "error", "k", "sigma0", "sigma2")]
    for s, (err, sel) in zip(cfg.specs, scored):
        rows.append((s.name, ev.fmt_rate(err), sel["k"],
                     ev.fmt_num(sel["sigma0"]) if "sigma0" in sel else "",
                     ev.fmt_num(sel["sigma2"]) if "sigma2" in sel else ""))
    ev.write_rows(rows, out / "table.csv")
    text = ev.format_table(rows, "Sinc3C: test error and selected k")
    _write_text(out / "table.txt", text)
    print(text, end="")

    index = NeighborIndex(train)
    grid = ev.loocv_k_grid(train.n, cfg.k_max)
    for m in (classic.KNN, classic.MKNN, classic.SKNN):
        curve = ev.loocv_curve(train, m, grid, index=index)
        ev.write_rows([("k", "loo_error")] + [(k, ev.fmt_rate(e)) for k, e in zip(grid, curve)],
                      out / f"loocv_{m}.csv")
    for (variant, formulation, *_), sel in sorted(cache.items()):
        _evidence_csv(sel.trace, out / f"evidence_{variant}_{formulation}.csv")
    for name, part in (("train", train), ("test", test)):
        x = part.points[:, 0]
        ev.write_rows([("x", "sinc", "label")] +
                      [(repr(float(v)), repr(float(np.sinc(v))), int(y)) for v, y in zip(x, part.labels)],
                      out / f"scatter_{name}.csv")
    _write_manifest(out, cfg, "sinc3c")
    return EXIT_OK


def cmd_cv(args):
    if not args.config and not args.data:
        raise ConfigError("cv needs --config or --data")
    cfg = _base_config(args, [ClassifierSpec(KNN), ClassifierSpec(MKNN_CV), ClassifierSpec(SKNN_CV)])
    if cfg.is_sinc3c:
        raise ConfigError("cv expects a CSV dataset")
    cfg.validate()
    if not cfg.specs:
        raise ConfigError("no method rows selected")
    ds = _load_dataset(cfg)
    for s in cfg.specs:
        try:
            s.check_classes(ds.n_classes)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
    if cfg.folds > ds.n:
        raise ConfigError(f"folds = {cfg.folds} exceeds the {ds.n} data points")
    out = _out_dir(args)
    folds = dsmod.make_folds(ds, cfg.folds, cfg.seed)
    results = ev.run_cv(ds, folds, cfg.specs, cfg.use_standardize, cfg.k_max, cfg.jobs)

    err_rows = ev.cv_error_rows(results)
    k_rows = ev.cv_k_rows(results)
    ev.write_rows(err_rows, out / "cv_errors.csv")
    ev.write_rows(k_rows, out / "cv_k.csv")
    ev.write_cv_folds(results, out / "cv_folds.csv")
    text = (ev.format_table(k_rows, "Selected k per fold") + "\n"
            + ev.format_table(err_rows, "Error rate, mean and sample std over folds"))
    _write_text(out / "cv_tables.txt", text)
    print(text, end="")
    _write_manifest(out, cfg, "cv")
    return EXIT_OK


def _read_queries(path, d):
    path = Path(path)
    if not path.exists():
        raise DataError(f"{path}: no such file")
    with path.open(newline="", encoding="utf-8") as fh:
        rows = [r for r in csv.reader(fh) if any(c.strip() for c in r)]
    if rows:
        try:
            [float(c) for c in rows[0]]
        except ValueError:
            rows = rows[1:]  # header
    pts = []
    for i, r in enumerate(rows):
        if len(r) != d:
            raise DataError(f"{path}: query row {i + 1} has {len(r)} columns, training data has {d}")
        try:
            pts.append([float(c) for c in r])
        except ValueError:
            raise DataError(f"{path}: query row {i + 1} is not numeric") from None
    return np.array(pts, dtype=float).reshape(len(pts), d)


def _single_spec(args, default_formulation=None):
    if not args.method or len(args.method) != 1:
        raise ConfigError("give exactly one --method")
    kw = {}
    if args.formulation or default_formulation:
        kw["formulation"] = args.formulation or default_formulation
    if args.fixed_hyper:
        kw.update(sigma0=args.fixed_hyper[0], sigma2=args.fixed_hyper[1], mode=gp.FIXED)
    try:
        return ClassifierSpec(args.method[0], **kw)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def cmd_predict(args):
    spec = _single_spec(args)
    cfg = ExperimentConfig(dataset=args.train, specs=[spec], base_dir=Path.cwd())
    if args.config:
        base = load_config(args.config)
        cfg = replace(base, dataset=args.train, specs=[spec], base_dir=Path.cwd())
    _apply_overrides(cfg, argparse.Namespace(**{**vars(args), "method": None, "formulation": None,
                                                "fixed_hyper": None}))
    cfg.validate()
    train = _load_dataset(cfg)
    try:
        spec.check_classes(train.n_classes)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    queries = _read_queries(args.query, train.d)
    if cfg.use_standardize:
        mean, scale = dsmod.feature_stats(train.points)
        train = train.with_points((train.points - mean) / scale)
        queries = (queries - mean) / scale
    index = NeighborIndex(train)
    out = _out_dir(args)
    k = args.k
    hp = None
    if spec.formulation is None:
        if k is None:
            k = ev.select_k_loocv(train, spec.method, ev.loocv_k_grid(train.n, cfg.k_max), index=index)
    else:
        if k is not None and spec.mode == gp.FIXED:
            hp = gp.Hyperparams(k, spec.sigma0, spec.sigma2)
        else:
            grid = [k] if k is not None else gp.default_k_grid(train.n, cfg.k_max)
            sel = gp.optimize_hyperparams(train, spec.variant, spec.formulation, grid,
                                          spec.sigma0, spec.sigma2, spec.mode, index=index)
            hp = sel.hyper
        k = hp.k

    header = ["label", "class", "k", "mass", "tie", "fallback"]
    rows = []
    if queries.shape[0]:
        exclude = None
        if args.exclude_self:
            same = index.points[None, :, :] == queries[:, None, :]
            hit = same.all(axis=2)
            exclude = np.where(hit.any(axis=1), hit.argmax(axis=1), -1)
        qr = index.query(queries, exclude=exclude)
        if spec.method in (BMKNN, BSKNN):
            pred = bayes_decide(qr, train, hp, spec.variant, spec.formulation)
            cols = pred.means.shape[1]
            header += [f"mean{c + 1}" for c in range(cols)] + ["variance"]
        else:
            pred = classic_decide(qr, train, spec.method, k)
            header += [f"tally{c + 1}" for c in range(train.n_classes)]
        for i in range(queries.shape[0]):
            lab = int(pred.labels[i])
            row = [lab, train.class_names[lab - 1] if train.class_names else lab, k,
                   ev.fmt_num(pred.mass[i]), int(pred.tie[i]), int(pred.fallback[i])]
            if pred.means is not None:
                row += [ev.fmt_num(v) for v in pred.means[i]] + [ev.fmt_num(pred.variance[i])]
            else:
                row += [ev.fmt_num(v) for v in pred.tally[i]]
            rows.append(row)
    elif spec.method in (BMKNN, BSKNN):
        cols = 1 if spec.formulation == gp.BINARY else train.n_classes
        header += [f"mean{c + 1}" for c in range(cols)] + ["variance"]
    else:
        header += [f"tally{c + 1}" for c in range(train.n_classes)]
    ev.write_rows([header] + rows, out / "predictions.csv")
    extra = {"query": str(Path(args.query).resolve()), "k": str(k),
             "exclude_self": "yes" if args.exclude_self else "no"}
    if hp is not None:
        extra.update(sigma0=repr(hp.sigma0), sigma2=repr(hp.sigma2))
    _write_manifest(out, cfg, "predict", extra)
    print(f"wrote {len(rows)} predictions to {out / 'predictions.csv'}")
    return EXIT_OK


def _curve_config(args):
    cfg = ExperimentConfig(base_dir=Path.cwd())
    if args.config:
        cfg = load_config(args.config)
    cfg.specs = []
    _apply_overrides(cfg, argparse.Namespace(**{**vars(args), "method": None, "formulation": None,
                                                "fixed_hyper": None}))
    cfg.validate()
    ds = _load_dataset(cfg)
    if cfg.use_standardize:
        ds = dsmod.standardize(ds)[0]
    return cfg, ds


def cmd_evidence_curve(args):
    spec = _single_spec(args, default_formulation=gp.MUL1)
    if spec.method not in (BMKNN, BSKNN):
        raise ConfigError("evidence-curve needs --method BMKNN or BSKNN")
    if not args.fixed_hyper:
        spec = replace(spec, sigma0=300.0, sigma2=9.0)
    cfg, ds = _curve_config(args)
    cfg.specs = [spec]
    try:
        spec.check_classes(ds.n_classes)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    out = _out_dir(args)
    sel = gp.optimize_hyperparams(ds, spec.variant, spec.formulation,
                                  gp.default_k_grid(ds.n, cfg.k_max), spec.sigma0, spec.sigma2, spec.mode)
    _evidence_csv(sel.trace, out / "evidence_curve.csv")
    _write_manifest(out, cfg, "evidence-curve")
    h = sel.hyper
    print(f"{spec.name}: k = {h.k}, sigma0 = {h.sigma0:.6g}, sigma2 = {h.sigma2:.6g}")
    return EXIT_OK


def cmd_loocv_curve(args):
    spec = _single_spec(args)
    if spec.method not in (KNN, MKNN_CV, SKNN_CV):
        raise ConfigError("loocv-curve needs --method KNN, MKNN or SKNN")
    cfg, ds = _curve_config(args)
    cfg.specs = [spec]
    out = _out_dir(args)
    grid = ev.loocv_k_grid(ds.n, cfg.k_max)
    curve = ev.loocv_curve(ds, spec.method, grid)
    ev.write_rows([("k", "loo_error")] + [(k, ev.fmt_rate(e)) for k, e in zip(grid, curve)],
                  out / "loocv_curve.csv")
    _write_manifest(out, cfg, "loocv-curve")
    best = grid[int(np.argmin(curve))]
    print(f"{spec.name}: k = {best}, LOO error = {ev.fmt_rate(curve.min())}")
    return EXIT_OK


COMMANDS = {
    "sinc3c": cmd_sinc3c,
    "cv": cmd_cv,
    "predict": cmd_predict,
    "evidence-curve": cmd_evidence_curve,
    "loocv-curve": cmd_loocv_curve,
}


def _root_cause(exc):
    while isinstance(exc, ev.FoldError) and exc.__cause__ is not None:
        exc = exc.__cause__
    return exc


def main(argv=None):
    args = build_parser().parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except Exception as exc:
        cause = _root_cause(exc)
        if isinstance(cause, DataError):
            code = EXIT_DATA
        elif isinstance(cause, (gp.NumericalError, np.linalg.LinAlgError, FloatingPointError)):
            code = EXIT_NUMERIC
        elif isinstance(cause, (ConfigError, ValueError)):
            code = EXIT_CONFIG
        elif isinstance(cause, OSError):
            code = EXIT_DATA
        else:
            raise
        print(f"mutualknn {args.command}: error: {exc}", file=sys.stderr)
        return code


if __name__ == "__main__":
    sys.exit(main())
