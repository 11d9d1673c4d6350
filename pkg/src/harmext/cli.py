"""``harmext`` command line.

Every subcommand writes its data files into ``--out`` together with a
``run.json`` manifest echoing the configuration, package version and seed.
No plots are drawn; the CSVs are laid out for plotting elsewhere.

Exit status: 0 success, 2 usage or configuration error, 3 unreadable or
malformed input, 4 numerical failure. On failure a one-line JSON error
record goes to stderr.
"""
from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .datasets import (
    load_boundary_csv,
    load_idx_images,
    load_idx_labels,
    load_labels_csv,
    load_points_csv,
    load_sparse_coo,
    load_truth_csv,
    tfidf_normalize,
)
from .errors import (
    DegenerateInput,
    IllPosedExtension,
    InvalidInput,
    InvalidParameter,
    OutOfSupport,
    ParseError,
    SolverError,
)
from .geometry import PointCloud, parse_metric
from .kernel import prepare_kernel, write_coo
from .methods import METHODS, PimParams, VcmParams, extend
from .solver import METHODS as SOLVERS
from .solver import SolveOptions
from .ssl import SSL_METHODS, LabeledDataset, run_ssl, run_trials, write_summary_csv, write_trials_csv
from .studies import DEMO_T, LADDER, LADDER_REPLICATES, convergence_ladder, demo1d, strictly_decreasing

EXIT_USAGE = 2
EXIT_INPUT = 3
EXIT_NUMERICAL = 4


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


# ---------------------------------------------------------------- helpers

def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.17g}"
    if isinstance(v, np.integer):
        return int(v)
    return v


def _jsonable(v):
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, Path):
        return str(v)
    if isinstance(v, np.integer):
        return int(v)
    if isinstance(v, (np.floating, np.ndarray)):
        return v.tolist()
    return v


def _dump_json(obj, path: Path) -> None:
    with open(path, "w") as f:
        json.dump(_jsonable(obj), f, sort_keys=True, indent=2, allow_nan=False)
        f.write("\n")


def write_table(path_stem: Path, header, rows, fmt: str) -> Path:
    """Write ``rows`` as CSV (17 significant digits) or as a JSON column/row object."""
    if fmt == "json":
        path = path_stem.with_suffix(".json")
        _dump_json({"columns": list(header), "rows": [list(r) for r in rows]}, path)
        return path
    path = path_stem.with_suffix(".csv")
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_fmt(v) for v in r])
    return path


def _config(args) -> dict:
    return {k: v for k, v in sorted(vars(args).items()) if k != "handler"}


def _manifest(args, out: Path, **results) -> None:
    _dump_json({"command": args.command, "config": _config(args), "version": __version__,
                "seed": getattr(args, "seed", None), "results": results}, out / "run.json")


def _parse_t(text: str):
    if text == "auto":
        return None
    try:
        t = float(text)
    except ValueError:
        raise InvalidParameter(f"--t must be 'auto' or a positive number, got {text!r}") from None
    if not t > 0:
        raise InvalidParameter("--t must be positive")
    return t


def _int_list(text: str, flag: str) -> list[int]:
    try:
        vals = [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise InvalidParameter(f"{flag} expects comma-separated integers, got {text!r}") from None
    if not vals or min(vals) < 1:
        raise InvalidParameter(f"{flag} values must be >= 1")
    return vals


def _method_list(text: str, allowed) -> list[str]:
    vals = [v.strip() for v in text.split(",") if v.strip()]
    for v in vals:
        if v not in allowed:
            raise InvalidParameter(f"unknown method {v!r}; choose from {tuple(allowed)}")
    if not vals:
        raise InvalidParameter("no method given")
    return vals


def _solve_opts(args) -> SolveOptions:
    return SolveOptions(args.solver, args.tol)


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def load_points(path, tfidf: bool = False) -> PointCloud:
    """Dispatch on file name: IDX image files, ``.coo`` sparse triplets, otherwise CSV."""
    name = Path(path).name
    if "idx3" in name:
        cloud = load_idx_images(path)
    elif name.endswith(".coo"):
        cloud = load_sparse_coo(path)
    else:
        cloud = load_points_csv(path)
    if tfidf:
        cloud = PointCloud(tfidf_normalize(cloud.points))
    return cloud


def load_truth(path) -> np.ndarray:
    return load_idx_labels(path) if "idx1" in Path(path).name else load_truth_csv(path)


# ---------------------------------------------------------------- commands

def cmd_demo1d(args) -> None:
    out = _out_dir(args)
    res = demo1d(args.seed, _parse_t(args.t), args.k, args.delta, args.mu, _solve_opts(args))
    order = np.argsort(res.x, kind="stable")
    for name, u in res.values.items():
        rows = zip(res.x[order], u[order], res.truth[order], (u - res.truth)[order])
        write_table(out / f"demo1d_{name}", ["x", "u", "truth", "error"], rows, args.format)
    _dump_json({"seed": args.seed, "t": res.t, "mu": res.mu, "layer_radius": res.layer_radius,
                "errors": res.errors(), "version": __version__}, out / "demo1d_errors.json")
    _manifest(args, out, t=res.t, mu=res.mu, errors=res.errors())


def _check_method(args, cloud: PointCloud) -> None:
    if args.method == "fem1d" and cloud.d != 1:
        raise InvalidParameter(f"fem1d needs 1-D points, got d={cloud.d}")


def cmd_extend(args) -> None:
    cloud = load_points(args.points)
    bc = load_boundary_csv(args.boundary)
    _check_method(args, cloud)
    ctx = prepare_kernel(cloud, parse_metric(args.metric, args.k), args.k, _parse_t(args.t))
    field = extend(args.method, ctx, bc, pim=PimParams(args.mu), vcm=VcmParams(args.delta), opts=_solve_opts(args))
    out = _out_dir(args)
    U = field.u.reshape(cloud.n, -1)
    header = ["index"] + (["u"] if U.shape[1] == 1 else [f"u{j}" for j in range(U.shape[1])])
    write_table(out / "extension", header, ([i, *U[i]] for i in range(cloud.n)), args.format)
    if args.dump_kernel:
        write_coo(ctx.kernel.W, out / "kernel.coo")
    _manifest(args, out, t=ctx.t, mu=field.mu, effective_boundary_size=int(field.effective_boundary.size),
              solver={"method": field.report.method, "iterations": field.report.iterations,
                      "final_relative_residual": field.report.final_relative_residual,
                      "converged": field.report.converged})


def cmd_ssl(args) -> None:
    cloud = load_points(args.points, args.tfidf)
    _check_method(args, cloud)
    mapping = load_labels_csv(args.labels)
    values = np.array(sorted(set(mapping.values())), dtype=np.int64)
    truth = load_truth(args.truth) if args.truth else None
    if truth is not None:
        if truth.shape != (cloud.n,):
            raise InvalidInput(f"truth has {truth.size} labels for {cloud.n} points")
        values = np.union1d(values, truth)
    code = {int(v): c for c, v in enumerate(values)}
    data = LabeledDataset.from_mapping(cloud, {i: code[v] for i, v in mapping.items()}, values.size)
    metric = parse_metric(args.metric, args.k)
    if args.method == "zhou":
        res = run_ssl(data, "zhou", metric=metric)
    else:
        res = run_ssl(data, args.method, metric=metric, k=args.k, t=_parse_t(args.t),
                      pim=PimParams(args.mu), vcm=VcmParams(args.delta), opts=_solve_opts(args))
    out = _out_dir(args)
    labels = values[res.labels]
    write_table(out / "labels", ["index", "label"], ([i, labels[i]] for i in range(cloud.n)), args.format)
    results = {"n_points": cloud.n, "n_labelled": int(data.indices.size), "classes": values.tolist()}
    if truth is not None:
        unl = np.setdiff1d(np.arange(cloud.n), data.indices)
        results["error_rate"] = float(np.mean(labels[unl] != truth[unl])) if unl.size else 0.0
    _manifest(args, out, **results)


def cmd_convergence(args) -> None:
    methods = _method_list(args.method, ("pim", "vcm"))
    levels = _int_list(args.levels, "--levels")
    res = convergence_ladder(args.domain, levels, methods, args.replicates, args.seed, args.k, args.delta,
                             SolveOptions(args.solver, args.tol) if args.solver != "auto" else None)
    out = _out_dir(args)
    cols = ["domain", "method", "n", "replicate", "n_total", "m", "t", "l2_error"]
    write_table(out / "convergence", cols, ([r[c] for c in cols] for r in res.rows), args.format)
    scols = ["domain", "method", "n", "replicates", "median_l2_error"]
    write_table(out / "convergence_summary", scols, ([r[c] for c in scols] for r in res.medians()), args.format)
    _manifest(args, out, decreasing={m: strictly_decreasing(res.series(args.domain, m)) for m in methods},
              median_l2_error={m: res.series(args.domain, m) for m in methods})


def cmd_trials(args) -> None:
    methods = _method_list(args.method, SSL_METHODS)
    cloud = load_points(args.points, args.tfidf)
    if "fem1d" in methods and cloud.d != 1:
        raise InvalidParameter(f"fem1d needs 1-D points, got d={cloud.d}")
    truth = load_truth(args.truth)
    res = run_trials(cloud, truth, _int_list(args.k_labels, "--k-labels"), args.trials, methods, args.seed,
                     metric=parse_metric(args.metric, args.k), k=args.k, t=_parse_t(args.t),
                     pim=PimParams(args.mu), vcm=VcmParams(args.delta), opts=_solve_opts(args))
    out = _out_dir(args)
    if args.format == "json":
        write_table(out / "trials", ["method", "k_labels", "trial", "error_rate"], res.records, "json")
        write_table(out / "trials_summary", ["method", "k_labels", "mean", "std"], res.summary(), "json")
    else:
        write_trials_csv(res, out / "trials.csv")
        write_summary_csv(res, out / "trials_summary.csv")
    _manifest(args, out, summary=[list(r) for r in res.summary()])


# ---------------------------------------------------------------- parser

def _common(p, t_default="auto"):
    p.add_argument("--metric", default="euclidean", help="euclidean, cosine or graph:<base>[:k]")
    p.add_argument("--k", type=int, default=10, help="neighbours per point (default 10)")
    p.add_argument("--t", default=t_default, help="kernel bandwidth or 'auto' for h^2")
    p.add_argument("--mu", type=float, default=None, help="PIM coupling (default 1e4*n/m)")
    p.add_argument("--delta", type=float, default=0.1, help="VCM layer exponent")
    p.add_argument("--solver", choices=SOLVERS, default="auto")
    p.add_argument("--tol", type=float, default=1e-10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--format", choices=("csv", "json"), default="csv")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="harmext", description="Harmonic extension on point clouds.")
    parser.add_argument("--version", action="version", version=f"harmext {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("demo1d", help="interval demo through all four methods")
    _common(p, t_default=repr(DEMO_T))
    p.set_defaults(handler=cmd_demo1d)

    p = sub.add_parser("extend", help="extend boundary values over a point cloud")
    _common(p)
    p.add_argument("--points", required=True)
    p.add_argument("--boundary", required=True, help="CSV of index,value[,value...]")
    p.add_argument("--method", choices=METHODS, default="pim")
    p.add_argument("--dump-kernel", action="store_true", help="also write the weight matrix as COO")
    p.set_defaults(handler=cmd_extend)

    p = sub.add_parser("ssl", help="label a point cloud from a few labelled points")
    _common(p)
    p.add_argument("--points", required=True)
    p.add_argument("--labels", required=True, help="CSV of index,label")
    p.add_argument("--truth", help="full label vector (CSV or IDX) for the error rate")
    p.add_argument("--method", choices=SSL_METHODS, default="pim")
    p.add_argument("--tfidf", action="store_true", help="TF-IDF normalise term counts first")
    p.set_defaults(handler=cmd_ssl)

    p = sub.add_parser("convergence", help="interpolant error over a refinement ladder")
    _common(p)
    p.add_argument("--domain", choices=("disk", "interval"), default="disk")
    p.add_argument("--method", default="pim,vcm")
    p.add_argument("--levels", default=",".join(map(str, LADDER)))
    p.add_argument("--replicates", type=int, default=LADDER_REPLICATES)
    p.set_defaults(handler=cmd_convergence)

    p = sub.add_parser("trials", help="repeated random-label experiments")
    _common(p)
    p.add_argument("--points", required=True)
    p.add_argument("--truth", required=True)
    p.add_argument("--k-labels", default="1,2,5,10", help="labels per class, comma-separated")
    p.add_argument("--trials", type=int, default=20)
    p.add_argument("--method", default="glm,pim,vcm")
    p.add_argument("--tfidf", action="store_true")
    p.set_defaults(handler=cmd_trials)
    return parser


def _fail(status: int, kind: str, message: str) -> int:
    sys.stderr.write(json.dumps({"error": kind, "message": message, "status": status}, sort_keys=True) + "\n")
    return status


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        if args.command == "convergence" and args.replicates < 1:
            raise InvalidParameter("--replicates must be >= 1")
        if args.command == "trials" and args.trials < 1:
            raise InvalidParameter("--trials must be >= 1")
        args.handler(args)
    except UsageError as exc:
        return _fail(EXIT_USAGE, "UsageError", str(exc))
    except InvalidParameter as exc:
        return _fail(EXIT_USAGE, type(exc).__name__, str(exc))
    except (ParseError, InvalidInput, OSError) as exc:
        return _fail(EXIT_INPUT, type(exc).__name__, str(exc))
    except (DegenerateInput, IllPosedExtension, OutOfSupport, SolverError) as exc:
        return _fail(EXIT_NUMERICAL, type(exc).__name__, str(exc))
    return 0


if __name__ == "__main__":
    sys.exit(main())
