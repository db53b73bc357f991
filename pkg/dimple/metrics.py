"""Clustering error rate and subspace errors."""
from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment

from .errors import DimensionError
from .hooi import FactorPair
from .linalg import sin_theta

# above this many groups the best label matching is found by the Hungarian method
EXHAUSTIVE_MAX_GROUPS = 8


@dataclass(frozen=True)
class ErrorReport:
    """``permutation[g - 1]`` is the true group matched to estimated group ``g``."""

    r_bl: float
    mismatches: int
    permutation: tuple[int, ...]
    sin_theta_u: float | None = None
    sin_theta_w: float | None = None


def _check_labels(s_hat: np.ndarray, s: np.ndarray, M: int) -> tuple[np.ndarray, np.ndarray]:
    s_hat = np.asarray(s_hat, dtype=np.int64).ravel()
    s = np.asarray(s, dtype=np.int64).ravel()
    if s_hat.shape != s.shape:
        raise DimensionError(f"label vectors differ in length: {s_hat.size} vs {s.size}")
    if s.size == 0:
        raise DimensionError("label vectors are empty")
    for name, labels in (("s_hat", s_hat), ("s", s)):
        if labels.min() < 1 or labels.max() > M:
            raise DimensionError(f"{name} has labels outside 1..{M}")
    return s_hat, s


def confusion_matrix(s_hat: np.ndarray, s: np.ndarray, M: int) -> np.ndarray:
    """``C[g, h]`` counts layers with estimated group ``g + 1`` and true group ``h + 1``."""
    s_hat, s = _check_labels(s_hat, s, M)
    C = np.zeros((M, M), dtype=np.int64)
    np.add.at(C, (s_hat - 1, s - 1), 1)
    return C


def _best_matching(C: np.ndarray) -> tuple[int, tuple[int, ...]]:
    M = C.shape[0]
    if M <= EXHAUSTIVE_MAX_GROUPS:
        best, best_perm = -1, tuple(range(M))
        rows = np.arange(M)
        for perm in itertools.permutations(range(M)):
            matched = int(C[rows, perm].sum())
            if matched > best:
                best, best_perm = matched, perm
        return best, best_perm
    row_ind, col_ind = linear_sum_assignment(-C)
    return int(C[row_ind, col_ind].sum()), tuple(int(c) for c in col_ind)


def misclassification_rate(
    s_hat: np.ndarray,
    s: np.ndarray,
    M: int,
    *,
    truth: FactorPair | None = None,
    est: FactorPair | None = None,
) -> ErrorReport:
    """Fraction of layers whose estimated group disagrees with the truth under the best relabeling.

    Given both ``truth`` and ``est`` factors of matching shapes, the report
    also carries their spectral sinΘ distances.
    """
    C = confusion_matrix(s_hat, s, M)
    matched, perm = _best_matching(C)
    L = int(C.sum())
    mismatches = L - matched
    err_u = err_w = None
    if truth is not None and est is not None and truth.U.shape == est.U.shape and truth.W.shape == est.W.shape:
        err_u, err_w = subspace_errors(truth, est)
    return ErrorReport(
        r_bl=mismatches / L,
        mismatches=mismatches,
        permutation=tuple(p + 1 for p in perm),
        sin_theta_u=err_u,
        sin_theta_w=err_w,
    )


def is_perfect(s_hat: np.ndarray, s: np.ndarray, M: int) -> bool:
    return misclassification_rate(s_hat, s, M).mismatches == 0


def subspace_errors(truth: FactorPair, est: FactorPair) -> tuple[float, float]:
    """Spectral sinΘ distances for U and for W."""
    return sin_theta(truth.U, est.U)[0], sin_theta(truth.W, est.W)[0]


def subspace_error_max(truth: FactorPair, est: FactorPair) -> float:
    """Larger of the two spectral sinΘ distances."""
    return max(subspace_errors(truth, est))
