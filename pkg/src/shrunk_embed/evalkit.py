"""Nearest-neighbor evaluation protocol.

Each experiment draws ``L`` training samples per class, fits a reducer on
them, embeds train and test sets and scores a 1-NN classifier. Results are
averaged over repeated splits; for parameter grids the best grid point per
output dimension is reported (selection on test accuracy, which is
optimistic by construction).
"""
import csv
import itertools
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.spatial.distance import cdist

from . import graph as G
from . import reducers as R
from .errors import InsufficientSamples, InvalidDimension, InvalidInput, ShrunkEmbedError

logger = logging.getLogger(__name__)

METHODS = ("baseline", "pca", "lda", "lpp", "lsda", "local-lda")
GRAPH_METHODS = ("lpp", "lsda", "local-lda")
REPORT_HEADER = ["method", "mode", "L", "dimension", "sigma", "gamma", "k", "repeats", "mean_accuracy", "std_dev"]
SELECTION = "best-grid-point-on-test-accuracy"

_MASK64 = (1 << 64) - 1


@dataclass(frozen=True)
class SplitSpec:
    per_class_train: int
    seed: int = 0
    repeat_index: int = 0

    def __post_init__(self):
        if self.per_class_train < 1:
            raise InvalidInput("per_class_train must be >= 1")


@dataclass(frozen=True)
class ExperimentReport:
    method: str
    mode: str
    L: int
    dimension: int
    mean_accuracy: float
    std_dev: float
    repeats: int
    sigma: Optional[float] = None
    gamma: Optional[R.Gamma] = None
    k: Optional[int] = None
    status: str = "ok"
    selection: str = SELECTION


@dataclass(frozen=True)
class MethodConfig:
    """One reducer plus the parameter grid it is tuned over.

    ``graph="block"`` replaces the kNN graph with the class-block affinity
    (sigma and k are then unused).
    """

    method: str
    mode: str = G.SUPERVISED
    sigmas: Tuple[float, ...] = (1.0,)
    gammas: Tuple[R.Gamma, ...] = (1.0,)
    k: Optional[int] = None
    sigma_scale: str = G.MEDIAN_DIST
    ridge: Optional[float] = None
    graph: str = "knn"
    name: Optional[str] = None

    def __post_init__(self):
        if self.method not in METHODS:
            raise InvalidInput(f"unknown method {self.method!r}; choose from {', '.join(METHODS)}")
        if self.mode not in G.MODES:
            raise InvalidInput(f"unknown mode {self.mode!r}")
        if self.graph not in ("knn", "block"):
            raise InvalidInput(f"unknown graph {self.graph!r}")
        if not self.sigmas or not self.gammas:
            raise InvalidInput("parameter grids must be nonempty")
        object.__setattr__(self, "gammas", tuple(R.normalize_gamma(g) for g in self.gammas))
        object.__setattr__(self, "sigmas", tuple(float(s) for s in self.sigmas))

    @property
    def label(self) -> str:
        return self.name or self.method

    @property
    def report_mode(self) -> str:
        if self.method in ("baseline", "pca"):
            return G.UNSUPERVISED
        if self.method == "lda" or self.graph == "block":
            return G.SUPERVISED
        return self.mode

    @property
    def uses_knn(self) -> bool:
        return self.method in GRAPH_METHODS and self.graph == "knn"

    def sigma_grid(self):
        return self.sigmas if self.uses_knn else (None,)

    def gamma_grid(self):
        return self.gammas if self.method == "lsda" else (None,)

    def effective_k(self) -> Optional[int]:
        if not self.uses_knn:
            return None
        if self.k is not None:
            return self.k
        return G.DEFAULT_K_SUPERVISED if self.mode == G.SUPERVISED else G.DEFAULT_K_UNSUPERVISED


def split_rng(seed: int, L: int, repeat_index: int, class_index: int) -> np.random.Generator:
    """Philox stream keyed by (seed, L, repeat, class); independent of call order."""
    key = np.random.SeedSequence([int(seed) & _MASK64, int(L), int(repeat_index), int(class_index)])
    return np.random.Generator(np.random.Philox(key))


def _draw(labels, counts, seed, L_key, repeat_index):
    labels = np.asarray(labels)
    train = []
    for c, cls in enumerate(np.unique(labels)):
        idx = np.flatnonzero(labels == cls)
        rng = split_rng(seed, L_key, repeat_index, c)
        train.append(rng.permutation(idx)[:counts[c]])
    train = np.sort(np.concatenate(train))
    test = np.setdiff1d(np.arange(labels.size), train)
    return train, test


def split_per_class(labels, spec: SplitSpec):
    """``spec.per_class_train`` random training indices per class, the rest for test.

    Returns sorted ``(train_indices, test_indices)``.
    """
    labels = np.asarray(labels)
    classes, sizes = np.unique(labels, return_counts=True)
    L = spec.per_class_train
    short = classes[sizes <= L]
    if short.size:
        raise InsufficientSamples(f"classes {short.tolist()} have <= {L} samples; cannot hold out a test set")
    return _draw(labels, np.full(classes.size, L), spec.seed, L, spec.repeat_index)


def split_fraction(labels, fraction: float, seed: int = 0, repeat_index: int = 0):
    """Stratified split keeping ``round(fraction * n_c)`` training samples per class."""
    if not 0 < fraction < 1:
        raise InvalidInput("fraction must be in (0, 1)")
    _, sizes = np.unique(np.asarray(labels), return_counts=True)
    if np.any(sizes < 2):
        raise InsufficientSamples("every class needs at least two samples")
    counts = np.clip(np.rint(fraction * sizes).astype(int), 1, sizes - 1)
    # distinct key space from split_per_class
    return _draw(labels, counts, seed, -1 & _MASK64, repeat_index)


def knn1_classify(train_Z, train_labels, test_Z, chunk: int = 2048) -> np.ndarray:
    """Label of the nearest training column for each test column (ties -> lowest index)."""
    train_Z = np.atleast_2d(np.asarray(train_Z, dtype=float))
    test_Z = np.atleast_2d(np.asarray(test_Z, dtype=float))
    train_labels = np.asarray(train_labels)
    if train_Z.shape[1] == 0:
        raise InvalidInput("training set is empty")
    if train_Z.shape[0] != test_Z.shape[0]:
        raise InvalidDimension(f"train has dimension {train_Z.shape[0]}, test has {test_Z.shape[0]}")
    out = np.empty(test_Z.shape[1], dtype=train_labels.dtype)
    for start in range(0, test_Z.shape[1], chunk):
        block = test_Z[:, start:start + chunk]
        dist = cdist(block.T, train_Z.T, "sqeuclidean")
        out[start:start + chunk] = train_labels[np.argmin(dist, axis=1)]
    return out


def accuracy(pred, truth) -> float:
    pred, truth = np.asarray(pred), np.asarray(truth)
    if pred.shape != truth.shape:
        raise InvalidInput(f"length mismatch: {pred.shape} vs {truth.shape}")
    if pred.size == 0:
        raise InvalidInput("empty prediction vector")
    return float(np.mean(pred == truth))


def make_graph(cfg: MethodConfig, X, labels, sigma) -> Optional[G.AffinityGraph]:
    if cfg.method not in GRAPH_METHODS:
        return None
    if cfg.graph == "block":
        return G.block_affinity(labels)
    lab = labels if cfg.mode == G.SUPERVISED else None
    return G.knn_graph(X, k=cfg.k, mode=cfg.mode, labels=lab, sigma=sigma, sigma_scale=cfg.sigma_scale)


def fit_method(cfg: MethodConfig, X, labels, d: int, sigma=None, gamma=None, graph=None) -> Optional[R.Projection]:
    """Fit one grid point. Returns None for the baseline (no reduction)."""
    m = cfg.method
    if m == "baseline":
        return None
    if m == "pca":
        return R.pca_fit(X, d)
    if m == "lda":
        return R.lda_fit(X, labels, d, ridge=cfg.ridge)
    if graph is None:
        graph = make_graph(cfg, X, labels, sigma if sigma is not None else cfg.sigmas[0])
    if m == "lpp":
        return R.lpp_fit(X, graph, d, ridge=cfg.ridge)
    if m == "local-lda":
        return R.local_lda_fit(X, graph, d, ridge=cfg.ridge)
    params = R.LsdaParams(d=d, gamma=gamma if gamma is not None else cfg.gammas[0], mode=cfg.mode,
                          ridge=cfg.ridge, k=cfg.k, sigma_scale=cfg.sigma_scale,
                          sigma=sigma if sigma is not None else cfg.sigmas[0])
    proj, _ = R.lsda_fit(X, params, labels=labels, graph=graph)
    return proj


def evaluate_split(cfg: MethodConfig, X, labels, train, test, dims, sigma=None):
    """Accuracies for every gamma of ``cfg`` at one sigma on one split.

    Returns ``{(gamma, dim): accuracy}``; dimensions beyond what the method can
    produce on this training set are omitted.
    """
    Xtr, ytr = X[:, train], labels[train]
    Xte, yte = X[:, test], labels[test]
    if cfg.method == "baseline":
        return {(None, X.shape[0]): accuracy(knn1_classify(Xtr, ytr, Xte), yte)}
    dmax = min(max(dims), R.max_dimension(cfg.method, Xtr, ytr))
    if dmax < 1:
        raise InvalidDimension(f"{cfg.method} cannot produce any dimension on this split")
    graph = make_graph(cfg, Xtr, ytr, sigma)
    out = {}
    for gamma in cfg.gamma_grid():
        proj = fit_method(cfg, Xtr, ytr, dmax, sigma=sigma, gamma=gamma, graph=graph)
        for d in sorted(set(dims)):
            if d > dmax:
                continue
            P = proj.truncate(d)
            pred = knn1_classify(R.transform(P, Xtr), ytr, R.transform(P, Xte))
            out[(gamma, d)] = accuracy(pred, yte)
    return out


_STATE: dict = {}


def _init_worker(state):
    _STATE.clear()
    _STATE.update(state)


def _run_task(task):
    ci, sigma, L, rep = task
    st = _STATE
    cfg = st["configs"][ci]
    try:
        train, test = split_per_class(st["labels"], SplitSpec(L, st["seed"], rep))
        return task, evaluate_split(cfg, st["X"], st["labels"], train, test, st["dims"], sigma), None
    except ShrunkEmbedError as exc:
        return task, None, f"{type(exc).__name__}: {exc}"
    except np.linalg.LinAlgError as exc:
        return task, None, f"LinAlgError: {exc}"


def run_experiment(X, labels, configs: Sequence[MethodConfig], L_values: Sequence[int],
                   dimensions: Sequence[int], repeats: int = 1, seed: int = 0,
                   jobs: int = 1) -> List[ExperimentReport]:
    """Repeated per-class-split evaluation of every method configuration.

    All methods see the same split for a given ``(seed, L, repeat)``. Tasks
    are independent and may run on a process pool of ``jobs`` workers; the
    report is identical for any ``jobs``.
    """
    X = np.asarray(X, dtype=float)
    labels = np.asarray(labels)
    if repeats < 1:
        raise InvalidInput("repeats must be >= 1")
    if not L_values or not dimensions:
        raise InvalidInput("L values and dimensions must be nonempty")
    configs = list(configs)
    dims = tuple(sorted(set(int(d) for d in dimensions)))
    state = {"X": X, "labels": labels, "configs": configs, "dims": dims, "seed": int(seed)}

    tasks = [(ci, s, int(L), rep)
             for ci, cfg in enumerate(configs)
             for L in L_values
             for s in cfg.sigma_grid()
             for rep in range(repeats)]

    if jobs is None or jobs < 1:
        jobs = os.cpu_count() or 1
    if jobs == 1 or len(tasks) == 1:
        _init_worker(state)
        results = [_run_task(t) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=jobs, initializer=_init_worker, initargs=(state,)) as pool:
            results = list(pool.map(_run_task, tasks, chunksize=max(1, len(tasks) // (4 * jobs))))

    # (ci, L) -> (sigma, gamma) -> dim -> {rep: acc}
    acc: Dict = {}
    errors: Dict = {}
    for (ci, sigma, L, rep), res, err in results:
        if err is not None:
            errors.setdefault((ci, L), err)
            logger.warning("config %d L=%d sigma=%s repeat %d failed: %s", ci, L, sigma, rep, err)
            continue
        for (gamma, d), a in res.items():
            acc.setdefault((ci, L), {}).setdefault((sigma, gamma), {}).setdefault(d, {})[rep] = a

    reports = []
    for ci, cfg in enumerate(configs):
        grid = list(itertools.product(cfg.sigma_grid(), cfg.gamma_grid()))
        for L in L_values:
            L = int(L)
            table = acc.get((ci, L), {})
            row_dims = (X.shape[0],) if cfg.method == "baseline" else dims
            for d in row_dims:
                best = None
                for point in grid:
                    per = table.get(point, {}).get(d)
                    if per is None or len(per) != repeats:
                        continue
                    vals = np.array([per[r] for r in range(repeats)])
                    mean = float(np.mean(vals))
                    if best is None or mean > best[0]:
                        best = (mean, float(np.std(vals)), point)
                if best is not None:
                    mean, std, (sigma, gamma) = best
                    reports.append(ExperimentReport(
                        method=cfg.label, mode=cfg.report_mode, L=L, dimension=d, mean_accuracy=mean,
                        std_dev=std, repeats=repeats, sigma=sigma, gamma=gamma, k=cfg.effective_k()))
                elif (ci, L) in errors:
                    reports.append(ExperimentReport(
                        method=cfg.label, mode=cfg.report_mode, L=L, dimension=d, mean_accuracy=float("nan"),
                        std_dev=float("nan"), repeats=repeats, k=cfg.effective_k(),
                        status="error: " + errors[(ci, L)]))
    return reports


def _cell(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def report_rows(reports: Sequence[ExperimentReport], with_status: bool = False):
    header = REPORT_HEADER + (["status"] if with_status else [])
    rows = [header]
    for rep in reports:
        row = [rep.method, rep.mode, rep.L, rep.dimension, rep.sigma, rep.gamma, rep.k, rep.repeats,
               rep.mean_accuracy, rep.std_dev]
        if with_status:
            row.append(rep.status)
        rows.append([_cell(v) for v in row])
    return rows


def write_report_csv(reports: Sequence[ExperimentReport], fh, with_status: bool = False):
    """Serialize reports as CSV to an open text file."""
    w = csv.writer(fh, lineterminator="\n")
    w.writerows(report_rows(reports, with_status))
