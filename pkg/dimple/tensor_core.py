"""Dense 3-way tensors: unfolding, mode products, norms and centering.

Tensors are plain ``numpy.ndarray`` objects of shape ``(n1, n2, n3)``. A
multiplex network with ``n`` nodes and ``L`` layers is stored as
``(n, n, L)``, i.e. layers run along mode 3 and ``X[:, :, l]`` is slice ``l``.

Unfoldings follow the Kolda-Bader convention: in the mode-k matricization,
entry ``(i1, i2, i3)`` lands in row ``i_k`` and in the column obtained by
enumerating the remaining indices with the lowest mode varying fastest. For
mode 3 this makes row ``l`` the column-major vectorization of slice ``l``.

Functions never modify their arguments.
"""
from __future__ import annotations

from typing import Mapping

import numpy as np

from .errors import DimensionError, FormatError

Tensor3 = np.ndarray

_MODES = (1, 2, 3)


def _check_tensor(X: np.ndarray) -> np.ndarray:
    X = np.asarray(X)
    if X.ndim != 3:
        raise DimensionError(f"Expected a 3-way tensor, got shape {X.shape}")
    return X


def _axis(mode: int) -> int:
    if mode not in _MODES:
        raise DimensionError(f"mode must be one of {_MODES}, got {mode!r}")
    return mode - 1


def matricize(X: Tensor3, mode: int) -> np.ndarray:
    """Mode-``mode`` unfolding of ``X`` with shape ``(n_mode, prod(other dims))``."""
    X = _check_tensor(X)
    axis = _axis(mode)
    return np.reshape(np.moveaxis(X, axis, 0), (X.shape[axis], -1), order="F")


def fold(M: np.ndarray, mode: int, shape: tuple[int, int, int]) -> Tensor3:
    """Inverse of :func:`matricize` for a tensor of the given ``shape``."""
    axis = _axis(mode)
    shape = tuple(int(s) for s in shape)
    if len(shape) != 3:
        raise DimensionError(f"shape must have three entries, got {shape}")
    rest = tuple(s for i, s in enumerate(shape) if i != axis)
    M = np.asarray(M)
    if M.shape != (shape[axis], rest[0] * rest[1]):
        raise DimensionError(
            f"Cannot fold a {M.shape} matrix along mode {mode} into {shape}"
        )
    return np.moveaxis(np.reshape(M, (shape[axis],) + rest, order="F"), 0, axis)


def mode_product(X: Tensor3, A: np.ndarray, mode: int) -> Tensor3:
    """Return ``X ×_mode A``, so that ``matricize(result, mode) == A @ matricize(X, mode)``."""
    X = _check_tensor(X)
    A = np.asarray(A)
    axis = _axis(mode)
    if A.ndim != 2 or A.shape[1] != X.shape[axis]:
        raise DimensionError(
            f"Matrix of shape {A.shape} cannot multiply mode {mode} "
            f"of a tensor with shape {X.shape}"
        )
    return np.moveaxis(np.tensordot(A, X, axes=(1, axis)), 0, axis)


def multi_mode_product(X: Tensor3, matrices: Mapping[int, np.ndarray]) -> Tensor3:
    """Apply several mode products in the order the mapping lists them."""
    out = _check_tensor(X)
    for mode, A in matrices.items():
        out = mode_product(out, A, mode)
    return out


def center(X: Tensor3) -> Tensor3:
    """Project every slice on both sides: ``X ×₁ Π⊥ ×₂ Π⊥`` with ``Π⊥ = I - 11ᵀ/n``.

    Done by subtracting row and column means per slice and adding back the
    grand mean, so the ``n × n`` projector is never formed.
    """
    X = _check_tensor(X)
    if X.shape[0] != X.shape[1]:
        raise DimensionError(f"center needs square slices, got shape {X.shape}")
    X = X.astype(np.float64, copy=False)
    row_means = X.mean(axis=1, keepdims=True)
    col_means = X.mean(axis=0, keepdims=True)
    grand = X.mean(axis=(0, 1), keepdims=True)
    return X - row_means - col_means + grand


def frobenius_norm(X: Tensor3) -> float:
    """Square root of the sum of squared entries."""
    X = _check_tensor(X)
    return float(np.linalg.norm(X.ravel()))


def hollow(S: np.ndarray) -> np.ndarray:
    """Copy of the square matrix ``S`` with its diagonal set to zero."""
    S = np.array(S, dtype=np.float64)
    if S.ndim != 2 or S.shape[0] != S.shape[1]:
        raise DimensionError(f"hollow needs a square matrix, got shape {S.shape}")
    np.fill_diagonal(S, 0.0)
    return S


def validate_adjacency(A: Tensor3) -> Tensor3:
    """Check the signed adjacency invariants and return ``A`` unchanged."""
    A = _check_tensor(A)
    if A.shape[0] != A.shape[1]:
        raise DimensionError(f"Adjacency slices must be square, got {A.shape}")
    if not np.isin(A, (-1, 0, 1)).all():
        raise FormatError("Adjacency entries must lie in {-1, 0, 1}")
    if not np.array_equal(A, np.swapaxes(A, 0, 1)):
        raise FormatError("Adjacency slices must be symmetric")
    if np.any(np.diagonal(A, axis1=0, axis2=1)):
        raise FormatError("Adjacency slices must have a zero diagonal")
    return A


def validate_probability(P: Tensor3, *, atol: float = 1e-12) -> Tensor3:
    """Check the probability tensor invariants and return ``P`` unchanged."""
    P = _check_tensor(P)
    if P.shape[0] != P.shape[1]:
        raise DimensionError(f"Probability slices must be square, got {P.shape}")
    if not np.all(np.isfinite(P)):
        raise FormatError("Probability tensor has non-finite entries")
    if np.max(np.abs(P), initial=0.0) > 1.0 + atol:
        raise FormatError("Probability entries must lie in [-1, 1]")
    if not np.allclose(P, np.swapaxes(P, 0, 1), rtol=0.0, atol=atol):
        raise FormatError("Probability slices must be symmetric")
    return P
