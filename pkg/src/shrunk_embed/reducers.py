"""Linear dimensionality reducers.

All fits take a data matrix ``X`` of shape ``(r, n)`` (samples are columns)
and return a :class:`Projection` whose ``W`` has shape ``(r, d)``; the
embedding of a sample ``x`` is ``W.T @ x``.

LSDA (local shrunk discriminant analysis) minimizes

    sum_ij a_ij |f_i - f_j|^2 + gamma * sum_i |W.T x_i - f_i|^2

over ``W`` with ``W.T S_t W = I`` and the shrunk embeddings ``F``. Written
with a graph Laplacian the inner problem in ``F`` is solved in closed form,
``F = gamma (L + gamma I)^-1 X.T W``, which leaves the generalized eigenproblem
``H w = lam S_t w`` with ``H = X (gamma I - gamma^2 (L + gamma I)^-1) X.T``.
"""
from dataclasses import dataclass, field, replace
from typing import Optional, Union

import numpy as np
from scipy.spatial.distance import cdist

from . import graph as G
from .errors import InvalidDimension, InvalidInput, InvalidLabels
from .matrices import SINGULAR_RTOL, as_symmetric, fix_signs, gen_eig_smallest, ridged, spd_solve, sym_eig

ST_ORTHONORMAL = "st-orthonormal"
SW_ORTHONORMAL = "sw-orthonormal"
D_WEIGHTED = "d-weighted"
EUCLIDEAN = "euclidean-orthonormal"

GAMMA_ZERO = "zero"
GAMMA_INF = "inf"

Gamma = Union[float, str]


@dataclass(frozen=True)
class Projection:
    W: np.ndarray
    metric: str
    method: str
    eigenvalues: np.ndarray = field(default_factory=lambda: np.empty(0))
    ridge: float = 0.0

    @property
    def d(self) -> int:
        return self.W.shape[1]

    @property
    def r(self) -> int:
        return self.W.shape[0]

    def truncate(self, d: int) -> "Projection":
        """Leading ``d`` directions. Every fit here yields nested solutions."""
        if not 1 <= d <= self.d:
            raise InvalidDimension(f"cannot truncate a {self.d}-dimensional projection to {d}")
        return replace(self, W=self.W[:, :d], eigenvalues=self.eigenvalues[:d])


@dataclass(frozen=True)
class ShrunkEmbedding:
    """Embeddings of the shrunk patterns, one column per training sample."""

    F: np.ndarray


@dataclass(frozen=True)
class LsdaParams:
    d: int
    gamma: Gamma = 1.0
    sigma: float = 1.0
    k: Optional[int] = None
    mode: str = G.SUPERVISED
    ridge: Optional[float] = None
    sigma_scale: str = G.MEDIAN_DIST

    def __post_init__(self):
        if self.d < 1:
            raise InvalidDimension(f"d must be >= 1, got {self.d}")
        object.__setattr__(self, "gamma", normalize_gamma(self.gamma))


def normalize_gamma(gamma: Gamma) -> Gamma:
    """Map user input to a positive finite float or one of the symbolic limits."""
    if isinstance(gamma, str):
        g = gamma.strip().lower()
        if g in ("zero", "0"):
            return GAMMA_ZERO
        if g in ("inf", "infinity", "+inf"):
            return GAMMA_INF
        raise InvalidInput(f"unrecognized gamma {gamma!r}")
    gamma = float(gamma)
    if np.isinf(gamma) and gamma > 0:
        return GAMMA_INF
    if not (np.isfinite(gamma) and gamma > 0):
        raise InvalidInput(f"numeric gamma must be finite and > 0, got {gamma}; use 'zero' for the limit")
    return gamma


def _check_data(X) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim != 2:
        raise InvalidInput(f"data matrix must be 2-D (r x n), got shape {X.shape}")
    if X.shape[1] < 2:
        raise InvalidInput("need at least two samples")
    if not np.all(np.isfinite(X)):
        raise InvalidInput("data matrix has non-finite entries")
    return X


def _check_labels(labels, n: int) -> np.ndarray:
    labels = np.asarray(labels)
    if labels.shape != (n,):
        raise InvalidLabels(f"expected {n} labels, got shape {labels.shape}")
    return labels


def total_scatter(X) -> np.ndarray:
    Xc = X - X.mean(axis=1, keepdims=True)
    return as_symmetric(Xc @ Xc.T)


def scatter_matrices(X, labels):
    """Between-class, within-class and total scatter (all unnormalized).

    Returns
    -------
    S_B, S_W, S_t : ndarray (r, r)
    mu : ndarray (r,)
        Global mean.
    class_means : ndarray (r, C)
        Columns ordered as ``np.unique(labels)``.
    """
    X = _check_data(X)
    labels = _check_labels(labels, X.shape[1])
    classes = np.unique(labels)
    r = X.shape[0]
    mu = X.mean(axis=1)
    S_B = np.zeros((r, r))
    S_W = np.zeros((r, r))
    means = np.empty((r, classes.size))
    for c, cls in enumerate(classes):
        Xc = X[:, labels == cls]
        if Xc.shape[1] == 0:
            raise InvalidLabels(f"class {cls!r} is empty")
        m = Xc.mean(axis=1)
        means[:, c] = m
        dm = (m - mu)[:, None]
        S_B += Xc.shape[1] * (dm @ dm.T)
        R = Xc - m[:, None]
        S_W += R @ R.T
    return as_symmetric(S_B), as_symmetric(S_W), total_scatter(X), mu, means


def _range_basis(S_t: np.ndarray) -> Optional[np.ndarray]:
    """Orthonormal basis of the numerical range of ``S_t``, or None if full rank.

    Directions in the null space of ``S_t`` give every sample the same
    coordinate. They are also null directions of ``H`` and the Laplacian
    quadratic forms, so a ridged solver would return them first.
    """
    vals, vecs = np.linalg.eigh(S_t)
    scale = max(np.trace(S_t) / S_t.shape[0], np.finfo(float).tiny)
    keep = vals > SINGULAR_RTOL * scale
    if keep.all():
        return None
    if not keep.any():
        raise InvalidInput("data has zero total scatter")
    return vecs[:, keep]


def _reduce(X):
    """Restrict ``X`` to range(S_t). Returns (X_reduced, basis or None, S_t_reduced)."""
    S_t = total_scatter(X)
    U = _range_basis(S_t)
    if U is None:
        return X, None, S_t
    Xr = U.T @ X
    return Xr, U, total_scatter(Xr)


def _lift(U, W):
    return W if U is None else U @ W


def max_dimension(method: str, X, labels=None) -> int:
    """Largest output dimension ``method`` can produce on ``X``."""
    X = _check_data(X)
    if method == "baseline":
        return X.shape[0]
    if method == "pca":
        return min(X.shape)
    rank = X.shape[0]
    U = _range_basis(total_scatter(X))
    if U is not None:
        rank = U.shape[1]
    if method == "lda":
        if labels is None:
            raise InvalidLabels("lda needs labels")
        return min(rank, np.unique(labels).size - 1)
    return rank


def _check_d(d: int, limit: int, what: str):
    if not 1 <= d <= limit:
        raise InvalidDimension(f"d={d} outside 1..{limit} ({what})")


def pca_fit(X, d: int) -> Projection:
    """Top-``d`` principal directions of the centered data, by descending variance."""
    X = _check_data(X)
    _check_d(d, min(X.shape), "PCA needs d <= min(r, n)")
    C = total_scatter(X) / X.shape[1]
    vals, vecs = sym_eig(C)
    order = np.arange(vals.size)[::-1][:d]
    return Projection(W=vecs[:, order], metric=EUCLIDEAN, method="pca", eigenvalues=vals[order])


def lda_fit(X, labels, d: int, ridge: Optional[float] = None) -> Projection:
    """Fisher LDA: top-``d`` solutions of ``S_B w = lam S_W' w``.

    ``d`` is capped at ``C - 1``, the number of nonzero generalized
    eigenvalues when ``S_B`` has rank ``C - 1``.
    """
    X = _check_data(X)
    labels = _check_labels(labels, X.shape[1])
    C = np.unique(labels).size
    if C < 2:
        raise InvalidLabels("LDA needs at least two classes")
    if d > C - 1:
        raise InvalidDimension(f"LDA dimension d={d} exceeds the upper bound C-1={C - 1}")
    Xr, U, _ = _reduce(X)
    _check_d(d, Xr.shape[0], "rank of the total scatter")
    S_B, S_W, _, _, _ = scatter_matrices(Xr, labels)
    eig = gen_eig_smallest(-S_B, S_W, d, ridge=ridge)
    _, applied = ridged(S_W, ridge)
    return Projection(W=fix_signs(_lift(U, eig.vectors)), metric=SW_ORTHONORMAL, method="lda",
                      eigenvalues=-eig.values, ridge=applied)


def lpp_fit(X, graph: G.AffinityGraph, d: int, ridge: Optional[float] = None) -> Projection:
    """Locality preserving projections: smallest solutions of ``X L X.T w = lam X D X.T w``."""
    X = _check_data(X)
    _check_graph(graph, X.shape[1])
    Xr, U, _ = _reduce(X)
    _check_d(d, Xr.shape[0], "rank of the total scatter")
    XL = as_symmetric(Xr @ graph.L @ Xr.T)
    XD = as_symmetric((Xr * graph.degree) @ Xr.T)
    eig = gen_eig_smallest(XL, XD, d, ridge=ridge)
    _, applied = ridged(XD, ridge)
    return Projection(W=fix_signs(_lift(U, eig.vectors)), metric=D_WEIGHTED, method="lpp",
                      eigenvalues=eig.values, ridge=applied)


def _check_graph(graph: G.AffinityGraph, n: int):
    if graph.n != n:
        raise InvalidDimension(f"graph has {graph.n} nodes, data has {n} samples")


def lsda_build_H(X, L, gamma: float) -> np.ndarray:
    """``H = X (gamma I - gamma^2 (L + gamma I)^-1) X.T``.

    Evaluated as ``gamma X (L + gamma I)^-1 L X.T``, the same matrix without the
    cancellation between its two terms, using a Cholesky solve.
    """
    X = np.asarray(X, dtype=float)
    L = as_symmetric(L)
    gamma = float(gamma)
    if not (np.isfinite(gamma) and gamma > 0):
        raise InvalidInput(f"gamma must be finite and > 0, got {gamma}")
    n = L.shape[0]
    if X.shape[1] != n:
        raise InvalidDimension(f"data has {X.shape[1]} samples, Laplacian is {n}x{n}")
    LXt = L @ X.T
    Y = spd_solve(L + gamma * np.eye(n), LXt)
    return as_symmetric(gamma * (X @ Y))


def lsda_recover_F(X, W, L, gamma: float) -> ShrunkEmbedding:
    """Closed-form shrunk embeddings ``F = gamma (L + gamma I)^-1 X.T W``, stored as ``(d, n)``."""
    X = np.asarray(X, dtype=float)
    W = W.W if isinstance(W, Projection) else np.asarray(W, dtype=float)
    L = as_symmetric(L)
    n = L.shape[0]
    Ft = spd_solve(L + gamma * np.eye(n), gamma * (X.T @ W))
    return ShrunkEmbedding(F=Ft.T)


def component_mean_embedding(X, W, components) -> ShrunkEmbedding:
    """Each column of ``W.T X`` replaced by the mean over its graph component."""
    Z = (np.asarray(W.W if isinstance(W, Projection) else W).T @ X)
    F = np.empty_like(Z)
    for c in np.unique(components):
        idx = components == c
        F[:, idx] = Z[:, idx].mean(axis=1, keepdims=True)
    return ShrunkEmbedding(F=F)


def within_component_scatter(X, components) -> np.ndarray:
    r = X.shape[0]
    S = np.zeros((r, r))
    for c in np.unique(components):
        R = X[:, components == c]
        R = R - R.mean(axis=1, keepdims=True)
        S += R @ R.T
    return as_symmetric(S)


def local_lda_fit(X, graph: G.AffinityGraph, d: int, ridge: Optional[float] = None) -> Projection:
    """Large-gamma limit of LSDA: smallest solutions of ``X L X.T w = lam S_t' w``."""
    X = _check_data(X)
    _check_graph(graph, X.shape[1])
    Xr, U, S_t = _reduce(X)
    _check_d(d, Xr.shape[0], "rank of the total scatter")
    XL = as_symmetric(Xr @ graph.L @ Xr.T)
    eig = gen_eig_smallest(XL, S_t, d, ridge=ridge)
    _, applied = ridged(S_t, ridge)
    return Projection(W=fix_signs(_lift(U, eig.vectors)), metric=ST_ORTHONORMAL, method="local-lda",
                      eigenvalues=eig.values, ridge=applied)


def build_graph(X, params: LsdaParams, labels=None) -> G.AffinityGraph:
    if params.mode == G.SUPERVISED and labels is None:
        raise InvalidLabels("supervised mode needs labels")
    lab = labels if params.mode == G.SUPERVISED else None
    return G.knn_graph(X, k=params.k, mode=params.mode, labels=lab, sigma=params.sigma,
                       sigma_scale=params.sigma_scale)


def lsda_fit(X, params: LsdaParams, labels=None, graph: Optional[G.AffinityGraph] = None):
    """Fit LSDA and recover the shrunk embeddings of the training samples.

    ``graph`` overrides the kNN graph described by ``params`` (e.g. a class
    block affinity). ``params.gamma`` may be a positive float, ``"inf"``
    (local LDA on the Laplacian) or ``"zero"`` (within-component scatter).
    Unlike LDA the output dimension is not bounded by the class count.

    Returns
    -------
    (Projection, ShrunkEmbedding)
    """
    X = _check_data(X)
    if graph is None:
        graph = build_graph(X, params, labels)
    _check_graph(graph, X.shape[1])
    gamma = params.gamma

    if gamma == GAMMA_INF:
        proj = replace(local_lda_fit(X, graph, params.d, params.ridge), method="lsda")
        return proj, ShrunkEmbedding(F=proj.W.T @ X)

    Xr, U, S_t = _reduce(X)
    _check_d(params.d, Xr.shape[0], "rank of the total scatter")
    if gamma == GAMMA_ZERO:
        comps = G.connected_components(graph.A)
        H = within_component_scatter(Xr, comps)
    else:
        H = lsda_build_H(Xr, graph.L, gamma)
    eig = gen_eig_smallest(H, S_t, params.d, ridge=params.ridge)
    _, applied = ridged(S_t, params.ridge)
    proj = Projection(W=fix_signs(_lift(U, eig.vectors)), metric=ST_ORTHONORMAL, method="lsda",
                      eigenvalues=eig.values, ridge=applied)
    if gamma == GAMMA_ZERO:
        return proj, component_mean_embedding(X, proj, comps)
    return proj, lsda_recover_F(X, proj, graph.L, gamma)


def transform(W, X) -> np.ndarray:
    """Embed the columns of ``X``: ``Z = W.T @ X`` with shape ``(d, n)``."""
    W = W.W if isinstance(W, Projection) else np.asarray(W, dtype=float)
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if X.shape[0] != W.shape[0]:
        raise InvalidDimension(f"projection expects {W.shape[0]} features, data has {X.shape[0]}")
    return W.T @ X


def lsda_objective(X, F, W, A, gamma: float, form: str = "pairwise") -> float:
    """Value of the shrinkage objective at ``(W, F)``.

    ``form="pairwise"`` gives ``sum_ij a_ij |f_i - f_j|^2 + gamma sum_i |W.T x_i - f_i|^2``.
    ``form="trace"`` gives ``Tr(F L F.T) + gamma |W.T X - F|_F^2``, the function
    that :func:`lsda_recover_F` minimizes exactly. For symmetric ``A`` the
    pairwise smoothness term is twice the trace term.
    """
    X = np.asarray(X, dtype=float)
    F = F.F if isinstance(F, ShrunkEmbedding) else np.asarray(F, dtype=float)
    W = W.W if isinstance(W, Projection) else np.asarray(W, dtype=float)
    A_d = A.toarray() if hasattr(A, "toarray") else np.asarray(A, dtype=float)
    Z = W.T @ X
    if F.shape != Z.shape:
        raise InvalidDimension(f"F has shape {F.shape}, expected {Z.shape}")
    fit = float(np.sum((Z - F) ** 2))
    if form == "pairwise":
        sq = cdist(F.T, F.T, "sqeuclidean")
        return float(np.sum(A_d * sq)) + gamma * fit
    if form == "trace":
        _, L = G.laplacian(A_d)
        return float(np.trace(F @ L @ F.T)) + gamma * fit
    raise InvalidInput(f"unknown objective form {form!r}")
