"""Truncated SVD, row-norm regularization and subspace distances.

Singular vector signs are never normalized: compare factors through their
projectors or through sinΘ distances, not entry by entry.
"""
from __future__ import annotations

import logging
import math

import numpy as np
import scipy.linalg

from .errors import DimensionError, NotOrthonormalError, NumericalError, RankDeficiencyError, RegularizationError

logger = logging.getLogger(__name__)

ORTHONORMAL_TOL = 1e-10
# Above this smaller dimension the SVD goes through an eigendecomposition of the Gram matrix.
FULL_SVD_MAX_DIM = 512


def _as_matrix(M: np.ndarray) -> np.ndarray:
    M = np.asarray(M, dtype=np.float64)
    if M.ndim != 2:
        raise DimensionError(f"Expected a matrix, got shape {M.shape}")
    return M


def _rank_tol(sigma_max: float, shape: tuple[int, int]) -> float:
    return max(shape) * np.finfo(np.float64).eps * sigma_max


def _check_rank(sigma: np.ndarray, r: int, shape: tuple[int, int]) -> None:
    sigma_max = float(sigma[0]) if sigma.size else 0.0
    if sigma_max == 0.0 or float(sigma[r - 1]) <= _rank_tol(sigma_max, shape):
        raise RankDeficiencyError(
            f"Matrix of shape {shape} has fewer than {r} nonzero singular values "
            f"(sigma_1={sigma_max:.3e}, sigma_{r}={float(sigma[r - 1]):.3e})"
        )


def svd_left(
    M: np.ndarray,
    r: int,
    *,
    symmetric: bool = False,
    strict: bool = False,
) -> np.ndarray:
    """Return the ``r`` leading left singular vectors of ``M`` as an ``(m, r)`` factor.

    With ``symmetric=True`` the input is taken to be symmetric and the factor
    holds the eigenvectors of largest absolute eigenvalue. With
    ``strict=True`` a :class:`RankDeficiencyError` is raised when ``M`` has
    fewer than ``r`` numerically nonzero singular values.
    """
    M = _as_matrix(M)
    rows, cols = M.shape
    if not 1 <= r <= min(rows, cols):
        raise DimensionError(f"Cannot take {r} singular vectors of a {M.shape} matrix")

    if symmetric:
        if rows != cols:
            raise DimensionError(f"symmetric=True needs a square matrix, got {M.shape}")
        evals, evecs = scipy.linalg.eigh(M)
        order = np.argsort(-np.abs(evals), kind="stable")
        sigma = np.abs(evals[order])
        if strict:
            _check_rank(sigma, r, M.shape)
        return evecs[:, order[:r]]

    if min(rows, cols) <= FULL_SVD_MAX_DIM:
        U, sigma, _ = scipy.linalg.svd(M, full_matrices=False)
        if strict:
            _check_rank(sigma, r, M.shape)
        return U[:, :r]

    if rows <= cols:
        evals, evecs = scipy.linalg.eigh(M @ M.T)
        order = np.argsort(-evals, kind="stable")
        sigma = np.sqrt(np.clip(evals[order], 0.0, None))
        if strict:
            _check_rank(sigma, r, M.shape)
        return evecs[:, order[:r]]

    evals, evecs = scipy.linalg.eigh(M.T @ M)
    order = np.argsort(-evals, kind="stable")
    sigma = np.sqrt(np.clip(evals[order], 0.0, None))
    _check_rank(sigma, r, M.shape)
    left = M @ evecs[:, order[:r]] / sigma[:r]
    # one re-orthonormalization pass against round-off in M V / sigma
    q, _ = np.linalg.qr(left)
    return q


def check_orthonormal(U: np.ndarray, *, tol: float = ORTHONORMAL_TOL, name: str = "U") -> np.ndarray:
    """Raise :class:`NotOrthonormalError` unless ``UᵀU = I`` within ``tol``."""
    U = _as_matrix(U)
    m, r = U.shape
    if m < r:
        raise NotOrthonormalError(f"{name} has more columns ({r}) than rows ({m})")
    defect = np.linalg.norm(U.T @ U - np.eye(r))
    if defect > tol:
        raise NotOrthonormalError(f"{name} is not orthonormal: ||UᵀU - I||_F = {defect:.3e}")
    return U


def two_to_inf_norm(U: np.ndarray) -> float:
    """Largest Euclidean norm among the rows of ``U``."""
    U = _as_matrix(U)
    if U.size == 0:
        return 0.0
    return float(np.max(np.linalg.norm(U, axis=1)))


def _clip_rows(U: np.ndarray, delta: float) -> np.ndarray:
    norms = np.linalg.norm(U, axis=1)
    scale = np.ones_like(norms)
    spiky = norms > delta
    scale[spiky] = delta / norms[spiky]
    return U * scale[:, None]


def regularize(U: np.ndarray, delta: float, *, max_passes: int = 100) -> np.ndarray:
    """Row-norm regularization Reg_δ followed by re-orthonormalization.

    A pass rescales every row with norm above ``delta`` down to ``delta`` and
    replaces the result by its leading ``r`` left singular vectors. Passes are
    repeated until the output satisfies ``||Û||_{2,inf} <= sqrt(2) * delta``;
    inputs that meet the bound after one pass get exactly one pass.
    """
    U = _as_matrix(U)
    if delta <= 0:
        raise RegularizationError(f"delta must be positive, got {delta}")
    m, r = U.shape
    bound = math.sqrt(2.0) * delta
    # an orthonormal m×r factor has squared row norms summing to r
    if bound < math.sqrt(r / m) * (1.0 - 1e-12):
        raise RegularizationError(
            f"No orthonormal {m}x{r} factor has two-to-infinity norm <= sqrt(2)*{delta}"
        )

    out = U
    for passes in range(1, max_passes + 1):
        out = svd_left(_clip_rows(out, delta), r, strict=True)
        norm = two_to_inf_norm(out)
        if norm <= bound * (1.0 + 1e-12):
            if passes > 1:
                logger.debug("regularize reached the bound after %d passes", passes)
            return out
    raise RegularizationError(
        f"Two-to-infinity norm {norm:.4f} still above sqrt(2)*delta={bound:.4f} "
        f"after {max_passes} passes"
    )


def _check_pair(U: np.ndarray, Uhat: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    U = _as_matrix(U)
    Uhat = _as_matrix(Uhat)
    if U.shape != Uhat.shape:
        raise DimensionError(f"Factor shapes differ: {U.shape} vs {Uhat.shape}")
    return U, Uhat


def align(U: np.ndarray, Uhat: np.ndarray) -> np.ndarray:
    """Orthogonal ``O`` minimizing ``||Uhat - U @ O||_F`` (orthogonal Procrustes)."""
    U, Uhat = _check_pair(U, Uhat)
    O, _ = scipy.linalg.orthogonal_procrustes(U, Uhat)
    return O


def _residual(U: np.ndarray, Uhat: np.ndarray) -> np.ndarray:
    U, Uhat = _check_pair(U, Uhat)
    check_orthonormal(U, name="U")
    check_orthonormal(Uhat, name="Uhat")
    # (I - UUᵀ) Uhat; its singular values are the sines of the principal angles
    return Uhat - U @ (U.T @ Uhat)


def sin_theta(U: np.ndarray, Uhat: np.ndarray) -> tuple[float, float]:
    """Spectral and Frobenius sinΘ distances between the column spaces."""
    R = _residual(U, Uhat)
    spectral = float(scipy.linalg.svdvals(R).max(initial=0.0))
    frobenius = float(np.linalg.norm(R, "fro"))
    return min(spectral, 1.0), frobenius


def projector_distance(U: np.ndarray, V: np.ndarray) -> float:
    """Spectral norm of ``UUᵀ - VVᵀ`` for two orthonormal factors of equal rank."""
    return sin_theta(U, V)[0]


def two_to_inf_dist(U: np.ndarray, Uhat: np.ndarray) -> float:
    """``||Uhat @ W - U||_{2,inf}`` with ``W = align(Uhat, U)``."""
    U, Uhat = _check_pair(U, Uhat)
    W = align(Uhat, U)
    dist = two_to_inf_norm(Uhat @ W - U)
    bound = math.sqrt(2.0) * sin_theta(U, Uhat)[0]
    if dist > bound + 1e-10:
        raise NumericalError(f"two-to-infinity distance {dist:.3e} exceeds sqrt(2)*sinΘ={bound:.3e}")
    return dist
