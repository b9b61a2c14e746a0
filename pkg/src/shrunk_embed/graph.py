"""Neighborhood graphs over the columns of a data matrix.

Data matrices are ``r x n`` with one sample per column. Affinities are kept
as ``scipy.sparse`` CSR matrices; Laplacians are dense because every consumer
factorizes them.
"""
from dataclasses import dataclass
from typing import List, Optional

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components as _cc
from scipy.spatial.distance import cdist

from .errors import InvalidAffinity, InvalidInput, InvalidK, InvalidLabels, InvalidSigma

SUPERVISED = "supervised"
UNSUPERVISED = "unsupervised"
MODES = (SUPERVISED, UNSUPERVISED)

ABSOLUTE = "absolute"
MEDIAN_DIST = "median-dist"
SIGMA_SCALES = (ABSOLUTE, MEDIAN_DIST)

DEFAULT_K_UNSUPERVISED = 30
DEFAULT_K_SUPERVISED = 50


@dataclass(frozen=True)
class NeighborSets:
    n: int
    k: int
    sets: List[np.ndarray]
    mode: str

    def edges(self):
        """Directed (i, j) pairs with j in N(i), as two index arrays."""
        rows = np.concatenate([np.full(len(s), i, dtype=np.intp) for i, s in enumerate(self.sets)])
        cols = np.concatenate([np.asarray(s, dtype=np.intp) for s in self.sets])
        return rows, cols


@dataclass(frozen=True)
class AffinityGraph:
    A: sp.csr_matrix
    degree: np.ndarray
    L: np.ndarray
    sigma: Optional[float] = None
    sigma_eff: Optional[float] = None

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def D(self) -> np.ndarray:
        return np.diag(self.degree)


def _check_data(X) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim != 2:
        raise InvalidInput(f"data matrix must be 2-D (r x n), got shape {X.shape}")
    if not np.all(np.isfinite(X)):
        raise InvalidInput("data matrix has non-finite entries")
    return X


def knn_neighbors(X, k: Optional[int] = None, mode: str = UNSUPERVISED, labels=None) -> NeighborSets:
    """k nearest neighbors of every column of ``X`` under the Euclidean metric.

    In supervised mode the search is restricted to samples sharing a label, so
    a sample gets at most ``min(k, n_class - 1)`` neighbors. Distance ties go to
    the lower index.
    """
    X = _check_data(X)
    n = X.shape[1]
    if mode not in MODES:
        raise InvalidInput(f"unknown mode {mode!r}")
    if (labels is not None) != (mode == SUPERVISED):
        raise InvalidLabels("labels are required in supervised mode and only there")
    if k is None:
        k = DEFAULT_K_SUPERVISED if mode == SUPERVISED else DEFAULT_K_UNSUPERVISED
    if k < 1:
        raise InvalidK(f"k must be >= 1, got {k}")

    dist = cdist(X.T, X.T, "sqeuclidean")
    np.fill_diagonal(dist, np.inf)
    if mode == UNSUPERVISED:
        if k >= n:
            raise InvalidK(f"k={k} needs more than {n} samples")
    else:
        labels = np.asarray(labels)
        if labels.shape != (n,):
            raise InvalidLabels(f"expected {n} labels, got {labels.shape}")
        dist[labels[:, None] != labels[None, :]] = np.inf

    sets = []
    for i in range(n):
        order = np.argsort(dist[i], kind="stable")[:k]
        sets.append(order[np.isfinite(dist[i, order])])
    return NeighborSets(n=n, k=k, sets=sets, mode=mode)


def gaussian_affinity(X, nbrs: NeighborSets, sigma: float, sigma_scale: str = MEDIAN_DIST) -> AffinityGraph:
    """Heat-kernel weights on the symmetrized kNN graph.

    ``a_ij = exp(-|x_i - x_j|^2 / (2 s^2))`` whenever ``j in N(i)`` or
    ``i in N(j)``. With ``sigma_scale="median-dist"`` the width is
    ``s = sigma * median |x_i - x_j|`` over directed neighbor pairs; with
    ``"absolute"`` it is ``sigma`` itself.
    """
    X = _check_data(X)
    if not sigma > 0:
        raise InvalidSigma(f"sigma must be > 0, got {sigma}")
    if sigma_scale not in SIGMA_SCALES:
        raise InvalidInput(f"unknown sigma scale {sigma_scale!r}")
    n = nbrs.n
    rows, cols = nbrs.edges()

    sigma_eff = float(sigma)
    if sigma_scale == MEDIAN_DIST and rows.size:
        med = float(np.median(np.sqrt(np.sum((X[:, rows] - X[:, cols]) ** 2, axis=0))))
        # all neighbor pairs coincide: fall back to the literal width
        if med > 0:
            sigma_eff = sigma * med

    # OR rule first, then one weight per undirected pair mirrored to both
    # halves so that A == A.T bit for bit
    lo = np.minimum(rows, cols)
    hi = np.maximum(rows, cols)
    pairs = np.unique(np.stack([lo, hi], axis=1), axis=0) if rows.size else np.empty((0, 2), np.intp)
    i, j = pairs[:, 0], pairs[:, 1]
    sq = np.sum((X[:, i] - X[:, j]) ** 2, axis=0)
    w = np.exp(-sq / (2.0 * sigma_eff ** 2))
    A = sp.coo_matrix((np.concatenate([w, w]), (np.concatenate([i, j]), np.concatenate([j, i]))), shape=(n, n))
    A = A.tocsr()
    degree, L = laplacian(A)
    return AffinityGraph(A=A, degree=degree, L=L, sigma=float(sigma), sigma_eff=sigma_eff)


def knn_graph(X, k=None, mode=UNSUPERVISED, labels=None, sigma=1.0, sigma_scale=MEDIAN_DIST) -> AffinityGraph:
    """Convenience wrapper: :func:`knn_neighbors` followed by :func:`gaussian_affinity`."""
    nbrs = knn_neighbors(X, k=k, mode=mode, labels=labels)
    return gaussian_affinity(X, nbrs, sigma, sigma_scale)


def laplacian(A):
    """Degree vector and dense Laplacian ``L = D - A``."""
    if sp.issparse(A):
        A_d = A.toarray()
    else:
        A_d = np.asarray(A, dtype=float)
    if A_d.ndim != 2 or A_d.shape[0] != A_d.shape[1]:
        raise InvalidAffinity(f"affinity must be square, got {A_d.shape}")
    if not np.array_equal(A_d, A_d.T):
        raise InvalidAffinity("affinity matrix is not symmetric")
    if np.any(A_d < 0):
        raise InvalidAffinity("affinity matrix has negative weights")
    degree = A_d.sum(axis=1)
    L = np.diag(degree) - A_d
    return degree, L


def block_affinity(labels) -> AffinityGraph:
    """Class-block affinity: ``a_ij = 1/n_k`` for distinct same-class pairs.

    The diagonal is left at zero; a constant diagonal would cancel in ``D - A``.
    """
    labels = np.asarray(labels)
    if labels.ndim != 1 or labels.size == 0:
        raise InvalidLabels("labels must be a non-empty vector")
    n = labels.size
    rows, cols, vals = [], [], []
    for c in np.unique(labels):
        idx = np.flatnonzero(labels == c)
        if idx.size < 2:
            continue
        r, q = np.meshgrid(idx, idx, indexing="ij")
        off = r != q
        rows.append(r[off])
        cols.append(q[off])
        vals.append(np.full(off.sum(), 1.0 / idx.size))
    if rows:
        A = sp.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n)).tocsr()
    else:
        A = sp.csr_matrix((n, n))
    degree, L = laplacian(A)
    return AffinityGraph(A=A, degree=degree, L=L)


def connected_components(A) -> np.ndarray:
    """Component label per node; nodes are linked by nonzero weights."""
    if not sp.issparse(A):
        A = sp.csr_matrix(np.asarray(A, dtype=float))
    A = sp.csr_matrix(A)
    A.eliminate_zeros()
    _, comp = _cc(A, directed=False)
    return comp
