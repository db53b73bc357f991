"""Estimation of the node basis U and the layer basis W.

The centered adjacency tensor is modelled as ``Θ ×₁ U ×₂ U ×₃ W``. Both
factors are found by regularized higher-order orthogonal iteration: a
spectral start from the hollowed sum of squared slices, followed by
alternating truncated SVDs, each followed by row-norm regularization.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np
import scipy.linalg

from .errors import ConfigError, DimensionError, DimpleError, RegularizationError, SingularCovarianceError
from .linalg import projector_distance, regularize, svd_left, two_to_inf_norm
from .netgen import GroundTruth
from .tensor_core import center, hollow, matricize, mode_product

logger = logging.getLogger(__name__)


def default_deltas(n: int, L: int, M: int, K: float) -> tuple[float, float]:
    """Regularization levels ``sqrt(MK/n)·log n`` and ``sqrt(MK/L)·log n``."""
    if n < 2 or L < 2:
        raise ConfigError(f"default deltas need n >= 2 and L >= 2, got n={n}, L={L}")
    mk = math.sqrt(M * K)
    log_n = math.log(n)
    return mk * log_n / math.sqrt(n), mk * log_n / math.sqrt(L)


def model_ranks(K: Sequence[int], *, sbm: bool = False, omega: float = 1.0) -> tuple[int, int]:
    """Column counts ``(M·K̄, r)`` of U and W for per-group dimensions ``K``.

    ``r`` sums ``K_m(K_m+1)/2`` over groups, or ``K_m`` when loading matrices
    are diagonal (``omega == 0``). In SBM/MMM mode every ``K_m`` drops by one.
    """
    dims = [int(k) - 1 if sbm else int(k) for k in K]
    if min(dims) < 1:
        raise ConfigError(f"SBM/MMM mode needs every K_m >= 2, got {tuple(K)}")
    rank_u = sum(dims)
    rank_w = sum(k if omega == 0 else k * (k + 1) // 2 for k in dims)
    return rank_u, rank_w


@dataclass(frozen=True)
class HooiConfig:
    rank_u: int
    rank_w: int
    delta_u: float
    delta_w: float
    n_iter_max: int = 50
    eps_tol: float = 1e-8

    def __post_init__(self) -> None:
        if self.rank_u < 1 or self.rank_w < 1:
            raise ConfigError(f"ranks must be positive, got rank_u={self.rank_u}, rank_w={self.rank_w}")
        if self.delta_u <= 0 or self.delta_w <= 0:
            raise ConfigError(f"deltas must be positive, got {self.delta_u}, {self.delta_w}")
        if self.n_iter_max < 0 or self.eps_tol <= 0:
            raise ConfigError(f"need n_iter_max >= 0 and eps_tol > 0, got {self.n_iter_max}, {self.eps_tol}")

    @classmethod
    def for_model(
        cls,
        n: int,
        L: int,
        K: Sequence[int],
        *,
        sbm: bool = False,
        omega: float = 1.0,
        **overrides: Any,
    ) -> "HooiConfig":
        """Ranks from :func:`model_ranks` and deltas from :func:`default_deltas`."""
        rank_u, rank_w = model_ranks(K, sbm=sbm, omega=omega)
        delta_u, delta_w = default_deltas(n, L, len(K), rank_u / len(K))
        params = dict(rank_u=rank_u, rank_w=rank_w, delta_u=delta_u, delta_w=delta_w)
        params.update(overrides)
        return cls(**params)

    def check_dims(self, n: int, L: int) -> None:
        if self.rank_u > n:
            raise ConfigError(f"rank_u={self.rank_u} exceeds n={n}")
        if self.rank_w > min(L, self.rank_u**2):
            raise ConfigError(f"rank_w={self.rank_w} exceeds min(L, rank_u^2)={min(L, self.rank_u ** 2)}")


@dataclass(frozen=True)
class FactorPair:
    """Orthonormal factors U (n × rank_u) and W (L × rank_w)."""

    U: np.ndarray
    W: np.ndarray
    iterations_run: int = 0
    final_eps: float = math.nan
    history: tuple[float, ...] = field(default=(), compare=False)


@dataclass(frozen=True)
class Rates:
    """Unit-constant values of the HOOI error-rate expressions (diagnostics only)."""

    contraction: float
    noise_floor: float
    init_u: float
    init_w: float


def log_log(n: int) -> float:
    """``log log n``, clamped at zero for ``n <= e``."""
    return max(math.log(math.log(n)), 0.0) if n > 2 else 0.0


def theoretical_rates(n: int, L: int, M: int, K: float, rho: float) -> Rates:
    """Contraction factor, noise floor and initialization errors with all constants set to one."""
    if rho <= 0:
        raise ConfigError(f"rho must be positive, got {rho}")
    log_n = math.log(n)
    denom = math.sqrt(rho * n * min(n, L))
    contraction = K * M**1.5 * log_n**3 * log_log(n) / denom
    noise_floor = M * math.sqrt(K) * log_n**1.5 / denom
    init_u = M * log_n * (1 / (rho * n * math.sqrt(L)) + 1 / math.sqrt(rho * n * L) + 1 / (n * log_n))
    init_w = K * M**1.5 * log_n**2.5 * (
        log_log(n) * math.sqrt(log_n) / denom * init_u + 1 / (n * math.sqrt(rho))
    )
    return Rates(contraction=contraction, noise_floor=noise_floor, init_u=init_u, init_w=init_w)


def _check_input(A: np.ndarray) -> np.ndarray:
    A = np.asarray(A)
    if A.ndim != 3 or A.shape[0] != A.shape[1]:
        raise DimensionError(f"Expected an n x n x L tensor, got shape {A.shape}")
    return A


def _w_step(At: np.ndarray, U: np.ndarray, rank_w: int) -> np.ndarray:
    core = mode_product(mode_product(At, U.T, 1), U.T, 2)
    return svd_left(matricize(core, 3), rank_w, strict=True)


def _u_step(At: np.ndarray, U: np.ndarray, W: np.ndarray, rank_u: int) -> np.ndarray:
    partial = mode_product(mode_product(At, W.T, 3), U.T, 2)
    return svd_left(matricize(partial, 1), rank_u, strict=True)


def _initialize(A: np.ndarray, At: np.ndarray, cfg: HooiConfig, hollow_squares: bool) -> FactorPair:
    # slices are symmetric, so M1 M1ᵀ = Σ_l A_l A_lᵀ = Σ_l A_l²
    unfolded = matricize(A.astype(np.float64, copy=False), 1)
    squares = unfolded @ unfolded.T
    if hollow_squares:
        squares = hollow(squares)
    squares = center(squares[:, :, None])[:, :, 0]
    U0 = regularize(svd_left(squares, cfg.rank_u, symmetric=True, strict=True), cfg.delta_u)
    W0 = regularize(_w_step(At, U0, cfg.rank_w), cfg.delta_w)
    return FactorPair(U=U0, W=W0, iterations_run=0)


def _iterate(At: np.ndarray, init: FactorPair, cfg: HooiConfig) -> FactorPair:
    if cfg.n_iter_max == 0:
        return init
    if not np.all(np.isfinite(At)):
        raise DimpleError("Adjacency tensor has non-finite entries")
    bound_u = math.sqrt(2.0) * cfg.delta_u * (1.0 + 1e-9)
    bound_w = math.sqrt(2.0) * cfg.delta_w * (1.0 + 1e-9)
    if two_to_inf_norm(init.U) > bound_u or two_to_inf_norm(init.W) > bound_w:
        raise RegularizationError("initial factors violate the sqrt(2)*delta row-norm bounds")

    U_hat, W_hat = init.U, init.W
    U_prev, W_prev = U_hat, W_hat
    history: list[float] = []
    eps = math.inf
    t = 0
    while t < cfg.n_iter_max and eps > cfg.eps_tol:
        t += 1
        U_t = _u_step(At, U_hat, W_hat, cfg.rank_u)
        W_t = _w_step(At, U_hat, cfg.rank_w)
        eps = projector_distance(U_t, U_prev) + projector_distance(W_t, W_prev)
        U_hat = regularize(U_t, cfg.delta_u)
        W_hat = regularize(W_t, cfg.delta_w)
        U_prev, W_prev = U_t, W_t
        history.append(eps)
        logger.debug("hooi iteration %d: eps=%.3e", t, eps)
    return FactorPair(U=U_hat, W=W_hat, iterations_run=t, final_eps=eps, history=tuple(history))


def init_factors(A: np.ndarray, cfg: HooiConfig, *, hollow: bool = True) -> FactorPair:
    """Spectral initialization of U and W.

    ``hollow=False`` keeps the diagonal of the summed squared slices; use it
    only for noiseless signal tensors, where there is no degree bias to remove.
    """
    A = _check_input(A)
    cfg.check_dims(A.shape[0], A.shape[2])
    return _initialize(A, center(A), cfg, hollow)


def hooi_iterate(A: np.ndarray, init: FactorPair, cfg: HooiConfig) -> FactorPair:
    """Regularized orthogonal power iterations starting from ``init``.

    Stops after ``n_iter_max`` iterations or once the summed projector
    movement of the unregularized factors drops below ``eps_tol``.
    """
    A = _check_input(A)
    cfg.check_dims(A.shape[0], A.shape[2])
    return _iterate(center(A), init, cfg)


def estimate_factors(A: np.ndarray, cfg: HooiConfig, *, hollow: bool = True) -> tuple[FactorPair, FactorPair]:
    """Initialization and iterations on one cached centered tensor.

    Returns ``(initial, final)``.
    """
    A = _check_input(A)
    cfg.check_dims(A.shape[0], A.shape[2])
    At = center(A)
    initial = _initialize(A, At, cfg, hollow)
    final = _iterate(At, initial, cfg)
    logger.debug("hooi finished after %d iterations (eps=%.3e)", final.iterations_run, final.final_eps)
    return initial, final


def true_factors(gt: GroundTruth) -> FactorPair:
    """Population factors U and W of a generated instance.

    U spans the centered latent positions of all groups; W spans the rows of
    the mode-3 unfolding of the block-diagonal core built from the rotated
    loading matrices.
    """
    n, M = gt.n, gt.M
    bases, scaled = [], []
    for m, x in enumerate(gt.X):
        xc = x - x.mean(axis=0, keepdims=True)
        u, s, vt = scipy.linalg.svd(xc, full_matrices=False)
        if s[-1] <= max(xc.shape) * np.finfo(np.float64).eps * max(s[0], 1.0):
            raise SingularCovarianceError(
                f"group {m + 1} has singular sample covariance; reduce K_{m + 1} by one (SBM/MMM mode)"
            )
        bases.append(u)
        scaled.append(s[:, None] * vt)

    offsets = np.concatenate([[0], np.cumsum(gt.K)])
    total = int(offsets[-1])
    U = svd_left(np.hstack(bases), total, strict=True)

    core = np.zeros((total, total, gt.L))
    for l, (group, b) in enumerate(zip(gt.labels, gt.B)):
        m = group - 1
        dv = scaled[m]
        lo, hi = offsets[m], offsets[m + 1]
        core[lo:hi, lo:hi, l] = dv @ b @ dv.T
    unfolded = matricize(core, 3)
    sigma = scipy.linalg.svdvals(unfolded)
    if sigma.size == 0 or sigma[0] == 0:
        raise SingularCovarianceError("all loading matrices are zero; W is undefined")
    r = int(np.sum(sigma > 1e-9 * sigma[0]))
    W = svd_left(unfolded, r)
    logger.debug("true factors: n=%d M=%d rank_u=%d rank_w=%d", n, M, total, r)
    return FactorPair(U=U, W=W, iterations_run=0, final_eps=0.0)
