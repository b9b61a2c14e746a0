"""Dense symmetric linear-algebra kernels.

Everything here works on plain ``numpy`` arrays. Symmetric inputs are
symmetrized with ``(M + M.T) / 2`` on entry so that downstream LAPACK calls
see an exactly symmetric matrix.
"""
from typing import NamedTuple, Optional

import numpy as np
import scipy.linalg

from .errors import InvalidDimension, InvalidInput, NotPositiveDefinite

# Relative eigenvalue floor (times trace/dim) below which a metric is singular.
SINGULAR_RTOL = 1e-10
DEFAULT_RIDGE = 1e-6


class EigPair(NamedTuple):
    """Eigenvalues in ascending order and matching eigenvectors as columns."""

    values: np.ndarray
    vectors: np.ndarray


def as_symmetric(M) -> np.ndarray:
    """Return ``(M + M.T) / 2`` as a float array after validating shape and entries."""
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1] or M.shape[0] < 1:
        raise InvalidInput(f"expected a non-empty square matrix, got shape {M.shape}")
    if not np.all(np.isfinite(M)):
        raise InvalidInput("matrix has non-finite entries")
    return 0.5 * (M + M.T)


def fix_signs(V: np.ndarray) -> np.ndarray:
    """Flip columns so the largest-magnitude entry is positive (first index wins ties)."""
    V = np.array(V, dtype=float, copy=True)
    if V.size == 0:
        return V
    idx = np.argmax(np.abs(V), axis=0)
    signs = np.sign(V[idx, np.arange(V.shape[1])])
    signs[signs == 0] = 1.0
    return V * signs


def sym_eig(S) -> EigPair:
    """Full eigendecomposition of a symmetric matrix, eigenvalues ascending."""
    S = as_symmetric(S)
    values, vectors = np.linalg.eigh(S)
    return EigPair(values, fix_signs(vectors))


def spd_solve(M, B) -> np.ndarray:
    """Solve ``M @ Y = B`` for symmetric positive definite ``M`` by Cholesky.

    Raises
    ------
    NotPositiveDefinite
        If the Cholesky factorization fails.
    """
    M = as_symmetric(M)
    B = np.asarray(B, dtype=float)
    if B.shape[0] != M.shape[0]:
        raise InvalidDimension(f"right-hand side has {B.shape[0]} rows, matrix is {M.shape[0]}")
    try:
        factor = scipy.linalg.cho_factor(M, lower=True, check_finite=True)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefinite(f"Cholesky factorization failed: {exc}") from None
    return scipy.linalg.cho_solve(factor, B)


def needs_ridge(S: np.ndarray) -> bool:
    """True when the smallest eigenvalue of ``S`` falls below the singularity floor."""
    dim = S.shape[0]
    scale = np.trace(S) / dim
    lam_min = np.linalg.eigvalsh(S)[0]
    return lam_min < SINGULAR_RTOL * scale


def ridged(S, ridge: Optional[float] = None):
    """Return ``(S', applied)`` where ``S' = S + applied * trace(S)/dim * I``.

    ``ridge=None`` applies :data:`DEFAULT_RIDGE` only when ``S`` is numerically
    singular; an explicit value is always applied (``0`` disables it).
    """
    S = as_symmetric(S)
    dim = S.shape[0]
    if ridge is None:
        ridge = DEFAULT_RIDGE if needs_ridge(S) else 0.0
    elif ridge < 0:
        raise InvalidInput(f"ridge must be >= 0, got {ridge}")
    if ridge == 0.0:
        return S, 0.0
    return S + ridge * (np.trace(S) / dim) * np.eye(dim), float(ridge)


def gen_eig_smallest(H, S, d: int, ridge: Optional[float] = None) -> EigPair:
    """The ``d`` smallest solutions of ``H w = lam S' w``.

    ``S'`` is ``S`` with the ridge policy of :func:`ridged`. The problem is
    reduced to a standard one by whitening with the eigendecomposition of
    ``S'``; returned vectors satisfy ``W.T @ S' @ W = I``.
    """
    H = as_symmetric(H)
    S = as_symmetric(S)
    dim = H.shape[0]
    if S.shape != H.shape:
        raise InvalidDimension(f"shape mismatch {H.shape} vs {S.shape}")
    if not 1 <= d <= dim:
        raise InvalidDimension(f"requested {d} eigenpairs of a {dim}x{dim} problem")

    S_r, _ = ridged(S, ridge)
    lam, U = np.linalg.eigh(S_r)
    floor = dim * np.finfo(float).eps * max(abs(lam[-1]), np.finfo(float).tiny)
    if lam[0] <= floor:
        raise NotPositiveDefinite(
            f"metric matrix is not positive definite (smallest eigenvalue {lam[0]:.3e})"
        )
    T = U / np.sqrt(lam)
    H_w = as_symmetric(T.T @ H @ T)
    mu, V = np.linalg.eigh(H_w)
    W = T @ V[:, :d]
    return EigPair(mu[:d], fix_signs(W))


def principal_angles(A, B) -> np.ndarray:
    """Principal angles (radians, descending) between the column spaces of A and B."""
    return scipy.linalg.subspace_angles(np.asarray(A, float), np.asarray(B, float))
