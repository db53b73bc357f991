"""Between-layer clustering.

Two clusterers share one k-means engine:

- :func:`cluster_tensor` thresholds the scalar products of the rows of the
  estimated layer basis W, takes the ``M`` leading eigenvectors of the 0/1
  matrix and runs k-means on their rows;
- :func:`cluster_baseline` compares per-layer node subspaces directly through
  ``||U_l1ᵀ U_l2||_F²`` and clusters the leading eigenvectors of that matrix.

Returned labels are 1-based; :func:`kmeans` itself returns 0-based assignments.
"""
from __future__ import annotations

import enum
import logging
import math
from dataclasses import dataclass, field
from typing import Sequence, Union

import numpy as np
from scipy.spatial.distance import cdist

from . import rng as rng_streams
from .errors import ConfigError, DimensionError, IndeterminateThresholdError
from .hooi import FactorPair, log_log
from .linalg import svd_left
from .tensor_core import center

logger = logging.getLogger(__name__)

GAP_RULES = ("variance", "spacing")


class ThresholdMode(str, enum.Enum):
    FORMULA = "formula"
    GAP = "gap"
    MANUAL = "manual"


@dataclass(frozen=True)
class ClusterConfig:
    M: int
    threshold_mode: ThresholdMode = ThresholdMode.GAP
    manual_threshold: float | None = None
    gap_rule: str = "variance"
    kmeans_eps: float = 0.01
    kmeans_restarts: int = 20
    kmeans_iters: int = 100
    seed: int = 0

    def __post_init__(self) -> None:
        object.__setattr__(self, "threshold_mode", ThresholdMode(self.threshold_mode))
        if self.M < 1:
            raise ConfigError(f"M must be >= 1, got {self.M}")
        if self.threshold_mode is ThresholdMode.MANUAL:
            if self.manual_threshold is None or self.manual_threshold < 0:
                raise ConfigError(f"manual threshold must be >= 0, got {self.manual_threshold}")
        if self.gap_rule not in GAP_RULES:
            raise ConfigError(f"gap_rule must be one of {GAP_RULES}, got {self.gap_rule!r}")
        if self.kmeans_restarts < 1 or self.kmeans_iters < 1 or self.kmeans_eps < 0:
            raise ConfigError(
                f"bad k-means settings: restarts={self.kmeans_restarts}, "
                f"iters={self.kmeans_iters}, eps={self.kmeans_eps}"
            )


@dataclass(frozen=True)
class ThresholdContext:
    """Model sizes the formula threshold depends on."""

    n: int
    L: int
    M: int
    K: float
    rho_hat: float


@dataclass(frozen=True)
class ClusteringResult:
    labels: np.ndarray
    score_matrix: np.ndarray = field(repr=False)
    threshold_used: float | None = None


@dataclass(frozen=True)
class KMeansResult:
    labels: np.ndarray
    centers: np.ndarray
    inertia: float
    history: tuple[float, ...] = ()


def gram_rows(W: np.ndarray) -> np.ndarray:
    """Matrix of scalar products between the rows of ``W``."""
    W = np.asarray(W, dtype=np.float64)
    if W.ndim != 2:
        raise DimensionError(f"Expected a matrix, got shape {W.shape}")
    return W @ W.T


def clustering_rate(n: int, L: int, M: int, K: float, rho_hat: float) -> float:
    """Unit-constant clustering error rate R(n, L) of the tensor method."""
    if not 0 < rho_hat <= 1:
        raise ConfigError(f"rho_hat must lie in (0, 1], got {rho_hat}")
    if n < 2 or L < 2:
        raise ConfigError(f"need n >= 2 and L >= 2, got n={n}, L={L}")
    km = K * M
    log_n = math.log(n)
    first = km**1.5 * log_n**4 * log_log(n) / math.sqrt(rho_hat * n * min(n, L))
    second = km * log_n**1.5 * math.sqrt(log_log(n)) / math.sqrt(n)
    return first + second


def formula_threshold(n: int, L: int, M: int, K: float, rho_hat: float) -> float:
    """Threshold ``T = (M / L) R(n, L)`` with all unknown constants set to one."""
    return M / L * clustering_rate(n, L, M, K, rho_hat)


def split_point(values: np.ndarray, *, rule: str = "variance") -> float:
    """Midpoint of the gap that separates large from small ``values``.

    ``rule="spacing"`` takes the widest gap between consecutive sorted values.
    ``rule="variance"`` takes the gap whose split maximizes the between-class
    variance of the two sides. Ties go to the gap between the largest values.
    """
    if rule not in GAP_RULES:
        raise ConfigError(f"rule must be one of {GAP_RULES}, got {rule!r}")
    desc = np.sort(np.asarray(values, dtype=np.float64).ravel())[::-1]
    if desc.size < 2:
        raise IndeterminateThresholdError(f"need at least two values to split, got {desc.size}")
    gaps = desc[:-1] - desc[1:]
    if not np.any(gaps > 0):
        raise IndeterminateThresholdError(f"all {desc.size} values equal {desc[0]:.6g}; no gap to split at")

    if rule == "spacing":
        score = gaps
    else:
        size = desc.size
        upper_count = np.arange(1, size)
        upper_sum = np.cumsum(desc)[:-1]
        upper_mean = upper_sum / upper_count
        lower_mean = (desc.sum() - upper_sum) / (size - upper_count)
        score = upper_count * (size - upper_count) / size**2 * (upper_mean - lower_mean) ** 2
        score = np.where(gaps > 0, score, -np.inf)
    i = int(np.argmax(score))
    return float(0.5 * (desc[i] + desc[i + 1]))


def gap_threshold(Y: np.ndarray, *, rule: str = "variance") -> float:
    """Data-driven threshold on the off-diagonal ``|Y(l1, l2)|``, ``l1 < l2``."""
    Y = np.asarray(Y, dtype=np.float64)
    if Y.ndim != 2 or Y.shape[0] != Y.shape[1] or Y.shape[0] < 2:
        raise DimensionError(f"gap_threshold needs a square matrix with L >= 2, got {Y.shape}")
    rows, cols = np.triu_indices(Y.shape[0], k=1)
    return split_point(np.abs(Y[rows, cols]), rule=rule)


def _threshold(Y: np.ndarray, cfg: ClusterConfig, context: ThresholdContext | None) -> float:
    if cfg.threshold_mode is ThresholdMode.MANUAL:
        return float(cfg.manual_threshold)
    if cfg.threshold_mode is ThresholdMode.GAP:
        return gap_threshold(Y, rule=cfg.gap_rule)
    if context is None:
        raise ConfigError("formula threshold needs a ThresholdContext (n, L, M, K, rho_hat)")
    return formula_threshold(context.n, context.L, context.M, context.K, context.rho_hat)


def _plusplus_seeds(points: np.ndarray, k: int, gen: np.random.Generator) -> np.ndarray:
    n = points.shape[0]
    chosen = [int(gen.integers(n))]
    closest = cdist(points, points[chosen], "sqeuclidean")[:, 0]
    for _ in range(1, k):
        total = closest.sum()
        if total > 0:
            idx = int(gen.choice(n, p=closest / total))
        else:
            # every point sits on a chosen seed
            free = np.setdiff1d(np.arange(n), chosen)
            idx = int(gen.choice(free))
        chosen.append(idx)
        closest = np.minimum(closest, cdist(points, points[idx : idx + 1], "sqeuclidean")[:, 0])
    return points[chosen].copy()


def _repair_empty(labels: np.ndarray, dist: np.ndarray, k: int) -> None:
    counts = np.bincount(labels, minlength=k)
    dist = dist.copy()
    for j in np.flatnonzero(counts == 0):
        donors = counts[labels] > 1
        idx = int(np.argmax(np.where(donors, dist, -np.inf)))
        counts[labels[idx]] -= 1
        labels[idx] = j
        counts[j] = 1
        dist[idx] = -np.inf


def _means(points: np.ndarray, labels: np.ndarray, k: int) -> np.ndarray:
    counts = np.bincount(labels, minlength=k).astype(np.float64)
    sums = np.zeros((k, points.shape[1]))
    np.add.at(sums, labels, points)
    return sums / counts[:, None]


def _lloyd(points: np.ndarray, centers: np.ndarray, max_iter: int) -> KMeansResult:
    n, k = points.shape[0], centers.shape[0]
    labels = np.full(n, -1)
    history: list[float] = []
    for _ in range(max_iter):
        d2 = cdist(points, centers, "sqeuclidean")
        new_labels = np.argmin(d2, axis=1)
        _repair_empty(new_labels, d2[np.arange(n), new_labels], k)
        centers = _means(points, new_labels, k)
        inertia = float(np.sum((points - centers[new_labels]) ** 2))
        history.append(inertia)
        if np.array_equal(new_labels, labels):
            break
        labels = new_labels
    return KMeansResult(labels=new_labels, centers=centers, inertia=history[-1], history=tuple(history))


def kmeans(points: np.ndarray, k: int, cfg: ClusterConfig | None = None, seed: int = 0) -> KMeansResult:
    """Lloyd's algorithm from k-means++ seeds, best of ``cfg.kmeans_restarts`` restarts.

    Restart ``i`` draws its seeds from substream ``(seed, KMEANS, i)``. A
    cluster that empties out takes over the point farthest from its centroid.
    """
    points = np.asarray(points, dtype=np.float64)
    if points.ndim != 2:
        raise DimensionError(f"Expected an (L, d) point matrix, got shape {points.shape}")
    if not 1 <= k <= points.shape[0]:
        raise ConfigError(f"k must lie in [1, {points.shape[0]}], got {k}")
    cfg = cfg or ClusterConfig(M=k)

    best: KMeansResult | None = None
    for restart in range(cfg.kmeans_restarts):
        gen = rng_streams.substream(seed, rng_streams.KMEANS, restart)
        result = _lloyd(points, _plusplus_seeds(points, k, gen), cfg.kmeans_iters)
        if best is None or result.inertia < best.inertia:
            best = result
    logger.debug("kmeans k=%d best inertia %.6g over %d restarts", k, best.inertia, cfg.kmeans_restarts)
    return best


def _all_in_one(L: int, score: np.ndarray) -> ClusteringResult:
    return ClusteringResult(labels=np.ones(L, dtype=np.int64), score_matrix=score, threshold_used=None)


def cluster_tensor(
    W: Union[np.ndarray, FactorPair],
    cfg: ClusterConfig,
    context: ThresholdContext | None = None,
) -> ClusteringResult:
    """Cluster layers from the rows of the layer basis ``W`` (or ``FactorPair.W``)."""
    if isinstance(W, FactorPair):
        W = W.W
    Y = gram_rows(W)
    L = Y.shape[0]
    if cfg.M == 1:
        return _all_in_one(L, Y)
    if cfg.M > L:
        raise ConfigError(f"cannot split {L} layers into M={cfg.M} groups")
    T = _threshold(Y, cfg, context)
    indicator = (np.abs(Y) > T).astype(np.float64)
    V = svd_left(indicator, cfg.M, symmetric=True)
    result = kmeans(V, cfg.M, cfg, cfg.seed)
    logger.debug("cluster_tensor: L=%d T=%.4g fill=%.3f", L, T, float(indicator.mean()))
    return ClusteringResult(labels=result.labels + 1, score_matrix=Y, threshold_used=T)


def layer_dims(K_per_layer: Union[int, Sequence[int]], L: int) -> np.ndarray:
    dims = np.broadcast_to(np.asarray(K_per_layer, dtype=np.int64), (L,)).copy()
    if np.any(dims < 1):
        raise ConfigError(f"per-layer dimensions must be >= 1, got {dims.min()}")
    return dims


def subspace_overlaps(A: np.ndarray, K_per_layer: Union[int, Sequence[int]]) -> np.ndarray:
    """``Θ(l1, l2) = ||U_l1ᵀ U_l2||_F²`` for the leading eigenvectors ``U_l`` of each centered slice."""
    A = np.asarray(A)
    if A.ndim != 3 or A.shape[0] != A.shape[1]:
        raise DimensionError(f"Expected an n x n x L tensor, got shape {A.shape}")
    n, _, L = A.shape
    dims = layer_dims(K_per_layer, L)
    if dims.max() > n:
        raise ConfigError(f"per-layer dimension {dims.max()} exceeds n={n}")
    centered = center(A)
    bases = np.hstack([
        svd_left(centered[:, :, l], int(dims[l]), symmetric=True, strict=True) for l in range(L)
    ])
    starts = np.concatenate([[0], np.cumsum(dims)[:-1]])
    squared = (bases.T @ bases) ** 2
    return np.add.reduceat(np.add.reduceat(squared, starts, axis=0), starts, axis=1)


def cluster_baseline(
    A: np.ndarray,
    K_per_layer: Union[int, Sequence[int]],
    M: int,
    cfg: ClusterConfig | None = None,
) -> ClusteringResult:
    """Cluster layers by the overlap of their individually estimated node subspaces."""
    cfg = cfg or ClusterConfig(M=M)
    theta = subspace_overlaps(A, K_per_layer)
    L = theta.shape[0]
    if M == 1:
        return _all_in_one(L, theta)
    if M > L:
        raise ConfigError(f"cannot split {L} layers into M={M} groups")
    V = svd_left(theta, M, symmetric=True)
    result = kmeans(V, M, cfg, cfg.seed)
    return ClusteringResult(labels=result.labels + 1, score_matrix=theta, threshold_used=None)
