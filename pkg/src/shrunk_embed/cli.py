"""Command-line driver: ``shrunk-embed {fit,transform,sweep,limits,toy}``.

Exit codes: 0 on success, 1 when a sweep finished with failed rows, 2 for
usage or domain errors (one line on stderr).
"""
import argparse
import csv
import json
import os
import sys
from pathlib import Path
from typing import List, Optional

import numpy as np

from . import datagen as DG
from . import evalkit as E
from . import graph as G
from . import reducers as R
from .errors import InvalidDimension, InvalidInput, ShrunkEmbedError
from .matrices import principal_angles

SEED_ENV = "SHRUNK_EMBED_SEED"

DEFAULT_SIGMAS = tuple(round(0.1 * i, 1) for i in range(1, 11))
DEFAULT_GAMMAS = tuple(2.0 ** e for e in range(-10, 11))
DEFAULT_L = (2, 3, 4, 5, 6, 7, 8)
DEFAULT_METHODS = ("baseline", "pca", "lda", "lpp", "lsda")
LIMITS_HEADER = ["variant", "gamma", "mode", "graph", "L", "dimension", "sigma", "k", "repeats",
                 "mean_accuracy", "std_dev", "angle_vs_lda", "angle_vs_local_lda", "status"]


class UsageError(ShrunkEmbedError):
    pass


# ---- value parsing ----

def parse_gamma(text: str) -> R.Gamma:
    """``0.5``, ``2^-5``, ``zero`` or ``inf``."""
    t = str(text).strip().lower()
    if t.startswith("2^"):
        try:
            return R.normalize_gamma(2.0 ** float(t[2:]))
        except ValueError:
            raise InvalidInput(f"bad gamma {text!r}") from None
    if t in ("zero", "inf", "infinity"):
        return R.normalize_gamma(t)
    try:
        return R.normalize_gamma(float(t))
    except ValueError:
        raise InvalidInput(f"bad gamma {text!r}") from None


def parse_gamma_list(text) -> tuple:
    """Comma list of gammas; ``2^a..2^b`` expands to every integer power in between."""
    if isinstance(text, (list, tuple)):
        return tuple(parse_gamma(str(t)) for t in text)
    out = []
    for part in str(text).split(","):
        part = part.strip()
        if ".." in part and part.startswith("2^"):
            lo, hi = part.split("..")
            a, b = _int(lo.strip()[2:]), _int(hi.strip().removeprefix("2^"))
            out.extend(2.0 ** e for e in range(a, b + 1))
        else:
            out.append(parse_gamma(part))
    return tuple(out)


def _int(text) -> int:
    try:
        return int(text)
    except ValueError:
        raise InvalidInput(f"expected an integer, got {text!r}") from None


def parse_int_list(text) -> tuple:
    """``1,2,5`` or ``1..10`` (inclusive) or a mix."""
    if isinstance(text, (list, tuple)):
        return tuple(int(t) for t in text)
    if isinstance(text, int):
        return (text,)
    out = []
    for part in str(text).split(","):
        if ".." in part:
            a, b = part.split("..")
            out.extend(range(_int(a), _int(b) + 1))
        else:
            out.append(_int(part.strip()))
    return tuple(out)


def parse_float_list(text) -> tuple:
    if isinstance(text, (list, tuple)):
        return tuple(float(t) for t in text)
    try:
        return tuple(float(p) for p in str(text).split(","))
    except ValueError:
        raise InvalidInput(f"bad number list {text!r}") from None


def resolve_seed(value, default: int = 0) -> int:
    if value is not None:
        return int(value)
    env = os.environ.get(SEED_ENV)
    if env:
        return _int(env)
    return default


def load_dataset(spec: str, seed: int = 0) -> DG.LabeledDataset:
    """A CSV path, or ``gen:toy[,n_per=..]`` / ``gen:multimodal[,key=val...]``."""
    if not spec:
        raise UsageError("--dataset is required")
    if not spec.startswith("gen:"):
        return DG.load_csv(spec)
    name, *kvs = spec[4:].split(",")
    kw = {}
    for kv in kvs:
        key, _, val = kv.partition("=")
        kw[key.strip()] = float(val) if "." in val else _int(val)
    if name == "toy":
        kw.setdefault("seed", seed)
        return DG.toy_ellipses(**kw)
    if name == "multimodal":
        s = kw.pop("seed", seed)
        return DG.gaussian_mixture(DG.multimodal_spec(seed=s, **kw), seed=s, name="multimodal")
    raise UsageError(f"unknown generator {name!r} (choose toy or multimodal)")


# ---- projection files ----

def metric_matrix(proj: R.Projection, X, labels, graph=None) -> np.ndarray:
    if proj.metric == R.EUCLIDEAN:
        return np.eye(X.shape[0])
    if proj.metric == R.SW_ORTHONORMAL:
        return R.scatter_matrices(X, labels)[1]
    if proj.metric == R.D_WEIGHTED:
        return (X * graph.degree) @ X.T
    return R.total_scatter(X)


def write_projection(proj: R.Projection, path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write(f"# metric={proj.metric} dim={proj.d} method={proj.method}\n")
        w = csv.writer(fh, lineterminator="\n")
        for row in proj.W:
            w.writerow([format(v, ".17g") for v in row])


def read_projection(path) -> R.Projection:
    with open(path, encoding="utf-8") as fh:
        first = fh.readline()
        if not first.startswith("#"):
            raise InvalidInput(f"{path}: missing '# metric=... dim=... method=...' header")
        meta = dict(item.split("=", 1) for item in first[1:].split())
        W = np.loadtxt(fh, delimiter=",", ndmin=2)
    if W.shape[1] != int(meta.get("dim", W.shape[1])):
        raise InvalidInput(f"{path}: header says dim={meta['dim']}, file has {W.shape[1]} columns")
    return R.Projection(W=W, metric=meta.get("metric", ""), method=meta.get("method", ""))


# ---- commands ----

def _method_config(args, method: str) -> E.MethodConfig:
    return E.MethodConfig(method, mode=args.mode, sigmas=(args.sigma,), gammas=(parse_gamma(args.gamma),),
                          k=args.k, sigma_scale=args.sigma_scale, ridge=args.ridge, graph=args.graph)


def cmd_fit(args) -> int:
    ds = load_dataset(args.dataset, resolve_seed(args.seed))
    cfg = _method_config(args, args.method)
    graph = E.make_graph(cfg, ds.X, ds.labels, args.sigma)
    if cfg.method == "baseline":
        if not 1 <= args.dim <= ds.r:
            raise InvalidDimension(f"baseline keeps the {ds.r} input features; got --dim {args.dim}")
        proj = R.Projection(W=np.eye(ds.r)[:, :args.dim], metric=R.EUCLIDEAN, method="baseline")
    else:
        proj = E.fit_method(cfg, ds.X, ds.labels, args.dim, args.sigma, cfg.gammas[0], graph)
    if args.out:
        write_projection(proj, args.out)
    M = metric_matrix(proj, ds.X, ds.labels, graph)
    resid = np.abs(proj.W.T @ M @ proj.W - np.eye(proj.d)).max()
    cos = np.abs(proj.W[0]) / np.linalg.norm(proj.W, axis=0)
    print(f"method={proj.method} metric={proj.metric} d={proj.d}")
    print(f"constraint_residual={resid:.3e}" + (f" ridge={proj.ridge:.3e}" if proj.ridge else ""))
    if proj.eigenvalues.size:
        print("eigenvalues=" + ",".join(f"{v:.10g}" for v in proj.eigenvalues))
    print("abs_cos_e1=" + ",".join(f"{c:.6f}" for c in cos))
    return 0


def cmd_transform(args) -> int:
    proj = read_projection(args.projection)
    ds = load_dataset(args.dataset, resolve_seed(args.seed))
    Z = R.transform(proj, ds.X)
    if args.out:
        DG.save_csv(Z, args.out, labels=ds.labels)
    else:
        _write_embedded(Z, ds.labels, sys.stdout)
    return 0


def _write_embedded(Z, labels, fh):
    w = csv.writer(fh, lineterminator="\n")
    for j in range(Z.shape[1]):
        w.writerow([int(labels[j])] + [format(v, ".17g") for v in Z[:, j]])


def _sweep_settings(args) -> dict:
    cfg = {}
    if args.config:
        with open(args.config, encoding="utf-8") as fh:
            cfg = json.load(fh)
        if not isinstance(cfg, dict):
            raise UsageError("sweep config must be a JSON object")
    # flags override the file
    for key in ("dataset", "method", "mode", "L", "dim", "sigma", "gamma", "k", "repeats", "seed", "jobs",
                "out", "graph", "sigma_scale", "ridge"):
        val = getattr(args, key, None)
        if val is not None:
            cfg[key] = val
    return cfg


def sweep_configs(settings) -> List[E.MethodConfig]:
    methods = settings.get("method", DEFAULT_METHODS)
    if isinstance(methods, str):
        methods = [m.strip() for m in methods.split(",")]
    sigmas = parse_float_list(settings["sigma"]) if "sigma" in settings else DEFAULT_SIGMAS
    gammas = parse_gamma_list(settings["gamma"]) if "gamma" in settings else DEFAULT_GAMMAS
    return [E.MethodConfig(m, mode=settings.get("mode", G.SUPERVISED), sigmas=sigmas, gammas=gammas,
                           k=settings.get("k"), sigma_scale=settings.get("sigma_scale", G.MEDIAN_DIST),
                           ridge=settings.get("ridge"), graph=settings.get("graph", "knn"))
            for m in methods]


def _sort_key(rep: E.ExperimentReport):
    return (rep.method, rep.mode, rep.L, rep.dimension)


def _open_out(path):
    if not path or path == "-":
        return None
    return open(path, "w", newline="", encoding="utf-8")


def cmd_sweep(args) -> int:
    s = _sweep_settings(args)
    if "dim" not in s:
        raise UsageError("sweep needs --dim (e.g. 1..10)")
    seed = resolve_seed(s.get("seed"))
    ds = load_dataset(s.get("dataset"), seed)
    repeats = int(s.get("repeats", 1))
    if repeats < 1:
        raise UsageError("--repeats must be >= 1")
    jobs = int(s.get("jobs") or os.cpu_count() or 1)
    reports = E.run_experiment(ds.X, ds.labels, sweep_configs(s), parse_int_list(s.get("L", DEFAULT_L)),
                               parse_int_list(s["dim"]), repeats=repeats, seed=seed, jobs=jobs)
    reports.sort(key=_sort_key)
    fh = _open_out(s.get("out"))
    try:
        E.write_report_csv(reports, fh or sys.stdout, with_status=True)
    finally:
        if fh:
            fh.close()
    failed = sum(r.status != "ok" for r in reports)
    if failed:
        print(f"{failed} of {len(reports)} rows failed", file=sys.stderr)
    return 1 if failed else 0


def _angle(A, B) -> float:
    return float(principal_angles(A, B).max())


def cmd_limits(args) -> int:
    seed = resolve_seed(args.seed)
    ds = load_dataset(args.dataset, seed)
    dims = parse_int_list(args.dim)
    grid = parse_gamma_list(args.gamma) if args.gamma else DEFAULT_GAMMAS
    base = dict(mode=args.mode, sigmas=(args.sigma,), k=args.k, sigma_scale=args.sigma_scale, ridge=args.ridge,
                graph=args.graph)
    variants = [("zero", (R.GAMMA_ZERO,)), ("inf", (R.GAMMA_INF,)),
                # the limits are included so "best" can never lose to either endpoint
                ("best", (R.GAMMA_ZERO,) + tuple(grid) + (R.GAMMA_INF,))]
    configs = [E.MethodConfig("lsda", gammas=g, name=v, **base) for v, g in variants]
    reports = E.run_experiment(ds.X, ds.labels, configs, parse_int_list(args.L), dims,
                               repeats=args.repeats, seed=seed, jobs=args.jobs or os.cpu_count() or 1)

    # angles are measured on fits to the full dataset
    graph = E.make_graph(configs[0], ds.X, ds.labels, args.sigma)
    n_classes = np.unique(ds.labels).size
    refs = {}
    for d in dims:
        try:
            lda = R.lda_fit(ds.X, ds.labels, d, ridge=args.ridge).W if d <= n_classes - 1 else None
        except ShrunkEmbedError:
            lda = None
        try:
            loc = R.local_lda_fit(ds.X, graph, d, ridge=args.ridge).W
        except ShrunkEmbedError:
            loc = None
        refs[d] = (lda, loc)

    rows = [LIMITS_HEADER]
    failed = 0
    for rep in sorted(reports, key=lambda r: ([v for v, _ in variants].index(r.method), r.L, r.dimension)):
        a_lda = a_loc = None
        if rep.status == "ok":
            params = R.LsdaParams(d=rep.dimension, gamma=rep.gamma, mode=args.mode, ridge=args.ridge)
            try:
                W = R.lsda_fit(ds.X, params, labels=ds.labels, graph=graph)[0].W
                lda, loc = refs[rep.dimension]
                a_lda = _angle(W, lda) if lda is not None else None
                a_loc = _angle(W, loc) if loc is not None else None
            except ShrunkEmbedError:
                pass
        else:
            failed += 1
        rows.append([E._cell(v) for v in (rep.method, rep.gamma, rep.mode, args.graph, rep.L, rep.dimension,
                                          rep.sigma, rep.k, rep.repeats, rep.mean_accuracy, rep.std_dev,
                                          a_lda, a_loc, rep.status)])
    fh = _open_out(args.out)
    try:
        csv.writer(fh or sys.stdout, lineterminator="\n").writerows(rows)
    finally:
        if fh:
            fh.close()
    return 1 if failed else 0


def cmd_toy(args) -> int:
    seed = resolve_seed(args.seed, default=42)
    ds = DG.toy_ellipses(args.n_per, seed=seed)
    out = Path(args.out or ".")
    out.mkdir(parents=True, exist_ok=True)
    DG.save_csv(ds, out / "toy_dataset.csv")

    train, test = E.split_fraction(ds.labels, 0.5, seed=seed)
    Xtr, ytr = ds.X[:, train], ds.labels[train]
    lda = R.lda_fit(Xtr, ytr, 1)
    params = R.LsdaParams(d=1, gamma=parse_gamma(args.gamma), sigma=args.sigma, k=args.k, mode=G.SUPERVISED)
    lsda, _ = R.lsda_fit(Xtr, params, labels=ytr)

    summary = [["method", "accuracy", "abs_cos_e1", "angle_to_x_axis_deg"]]
    z = {}
    for name, proj in (("lda", lda), ("lsda", lsda)):
        pred = E.knn1_classify(R.transform(proj, Xtr), ytr, R.transform(proj, ds.X[:, test]))
        acc = E.accuracy(pred, ds.labels[test])
        w = proj.W[:, 0] / np.linalg.norm(proj.W[:, 0])
        cos = abs(float(w[0]))
        summary.append([name, repr(acc), repr(cos), repr(float(np.degrees(np.arccos(min(cos, 1.0)))))])
        z[name] = R.transform(proj, ds.X)[0]
        print(f"{name}: accuracy={acc:.4f} abs_cos_e1={cos:.6f}")

    with open(out / "toy_projection.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["x", "y", "class", "z_lda", "z_lsda"])
        for j in range(ds.n):
            w.writerow([repr(float(ds.X[0, j])), repr(float(ds.X[1, j])), int(ds.labels[j]),
                        repr(float(z["lda"][j])), repr(float(z["lsda"][j]))])
    with open(out / "toy_summary.csv", "w", newline="", encoding="utf-8") as fh:
        csv.writer(fh, lineterminator="\n").writerows(summary)
    return 0


# ---- argument parsing ----

def _common(p, dim_list=False):
    p.add_argument("--dataset", help="CSV file (label,f1,..,fr) or gen:toy / gen:multimodal[,key=val]")
    p.add_argument("--mode", choices=G.MODES, default=None if dim_list else G.SUPERVISED)
    p.add_argument("--k", type=int, default=None, help="neighbors for the kNN graph")
    p.add_argument("--seed", type=int, default=None, help=f"random seed (fallback: ${SEED_ENV})")
    p.add_argument("--sigma-scale", dest="sigma_scale", choices=G.SIGMA_SCALES,
                   default=None if dim_list else G.MEDIAN_DIST)
    p.add_argument("--ridge", type=float, default=None)
    p.add_argument("--graph", choices=("knn", "block"), default=None if dim_list else "knn")
    p.add_argument("--out", default=None)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="shrunk-embed",
                                 description="LSDA and baseline reducers with a 1-NN benchmark harness.")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fit", help="fit one reducer and save its projection")
    _common(p)
    p.add_argument("--method", choices=E.METHODS, required=True)
    p.add_argument("--dim", type=int, required=True)
    p.add_argument("--sigma", type=float, default=1.0)
    p.add_argument("--gamma", default="1")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("transform", help="embed a dataset with a saved projection")
    p.add_argument("--projection", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_transform)

    p = sub.add_parser("sweep", help="repeated-split benchmark over parameter grids")
    _common(p, dim_list=True)
    p.add_argument("--config", help="JSON file with sweep settings; flags override it")
    p.add_argument("--method", help="comma list of methods (default: %s)" % ",".join(DEFAULT_METHODS))
    p.add_argument("--L", dest="L", help="training samples per class, e.g. 2,3,4")
    p.add_argument("--dim", help="output dimensions, e.g. 1..10 or 1,2,5")
    p.add_argument("--sigma", help="comma list (default 0.1..1.0 by 0.1)")
    p.add_argument("--gamma", help="comma list, 2^k terms allowed; 2^a..2^b expands (default 2^-10..2^10)")
    p.add_argument("--repeats", type=int)
    p.add_argument("--jobs", type=int, help="worker processes (default: logical cores)")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("limits", help="compare gamma=zero, gamma=inf and the best gamma")
    _common(p)
    p.add_argument("--L", dest="L", default="5")
    p.add_argument("--dim", required=True)
    p.add_argument("--sigma", type=float, default=0.7)
    p.add_argument("--gamma", default=None, help="grid for the best row (default 2^-10..2^10)")
    p.add_argument("--repeats", type=int, default=1)
    p.add_argument("--jobs", type=int, default=None)
    p.set_defaults(func=cmd_limits)

    p = sub.add_parser("toy", help="three-ellipse example: dataset, 1-D projections and summary")
    p.add_argument("--n-per", dest="n_per", type=int, default=1000)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--sigma", type=float, default=0.5)
    p.add_argument("--gamma", default="2^-5")
    p.add_argument("--k", type=int, default=None)
    p.add_argument("--out", default=None, help="output directory (default: current)")
    p.set_defaults(func=cmd_toy)
    return ap


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ShrunkEmbedError, OSError, json.JSONDecodeError) as exc:
        msg = str(exc).splitlines()[0] if str(exc) else type(exc).__name__
        print(f"error: {msg}", file=sys.stderr)
        return 2
