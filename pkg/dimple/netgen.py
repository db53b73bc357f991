"""Synthetic DIMPLE-SGRDPG multiplex networks.

A network is built in three stages: every layer gets a group label, every
group gets a matrix of latent node positions, and every layer gets a random
symmetric loading matrix. Slice ``l`` of the probability tensor is then
``X[s(l)] @ B[l] @ X[s(l)].T`` with the diagonal removed, and signed edges are
drawn independently with probability ``|P|`` and the sign of ``P``.

Sparsity is controlled only through the loading range ``(c, d)``.
"""
from __future__ import annotations

import dataclasses
import logging
from dataclasses import dataclass, field
from typing import Any, Sequence, Union

import numpy as np

from . import rng as rng_streams
from .errors import ConfigError, DimensionError, InfeasibleModelError
from .tensor_core import validate_probability

logger = logging.getLogger(__name__)

_PROB_TOL = 1e-12


@dataclass(frozen=True)
class TruncatedNormal:
    """Rows ``η / ||η||`` with ``η ~ N(0, Σ)``; ``Σ = sigma² I`` unless ``covariance`` is given."""

    sigma: float = 1.0
    covariance: np.ndarray | None = field(default=None, compare=False)

    name = "truncated_normal"

    def __post_init__(self) -> None:
        if self.sigma <= 0:
            raise ConfigError(f"sigma must be positive, got {self.sigma}")

    def sample(self, n: int, K: int, rng: np.random.Generator) -> np.ndarray:
        if self.covariance is None:
            eta = self.sigma * rng.standard_normal((n, K))
        else:
            cov = np.asarray(self.covariance, dtype=np.float64)
            if cov.shape != (K, K):
                raise ConfigError(f"covariance must be {K}x{K}, got {cov.shape}")
            eta = rng.multivariate_normal(np.zeros(K), cov, size=n, method="eigh")
        norms = np.linalg.norm(eta, axis=1, keepdims=True)
        if np.any(norms == 0):
            raise ConfigError("covariance produced a zero latent vector")
        return eta / norms

    def to_dict(self) -> dict[str, Any]:
        return {"name": self.name, "sigma": self.sigma}


@dataclass(frozen=True)
class MultinomialFirstK:
    """First ``K`` coordinates of a one-trial multinomial indicator over ``K + 1`` outcomes."""

    weights: tuple[float, ...] | None = None

    name = "multinomial"

    def __post_init__(self) -> None:
        if self.weights is not None:
            w = np.asarray(self.weights, dtype=np.float64)
            if np.any(w <= 0) or not np.isclose(w.sum(), 1.0, atol=1e-9):
                raise ConfigError(f"weights must be positive and sum to 1, got {self.weights}")

    def sample(self, n: int, K: int, rng: np.random.Generator) -> np.ndarray:
        if self.weights is None:
            p = np.full(K + 1, 1.0 / (K + 1))
        else:
            p = np.asarray(self.weights, dtype=np.float64)
            if p.size != K + 1:
                raise ConfigError(f"need {K + 1} multinomial weights for K={K}, got {p.size}")
        outcome = rng.choice(K + 1, size=n, p=p)
        return np.eye(K + 1)[outcome, :K]

    def to_dict(self) -> dict[str, Any]:
        return {"name": self.name, "weights": None if self.weights is None else list(self.weights)}


@dataclass(frozen=True)
class DirichletFirstK:
    """First ``K`` coordinates of a Dirichlet draw over ``K + 1`` components.

    A scalar ``alpha`` is used for every component.
    """

    alpha: Union[float, tuple[float, ...]] = 0.1

    name = "dirichlet"

    def __post_init__(self) -> None:
        if np.any(np.asarray(self.alpha, dtype=np.float64) <= 0):
            raise ConfigError(f"Dirichlet parameters must be positive, got {self.alpha}")

    def sample(self, n: int, K: int, rng: np.random.Generator) -> np.ndarray:
        alpha = np.asarray(self.alpha, dtype=np.float64)
        if alpha.ndim == 0:
            alpha = np.full(K + 1, float(alpha))
        elif alpha.size != K + 1:
            raise ConfigError(f"need {K + 1} Dirichlet parameters for K={K}, got {alpha.size}")
        return rng.dirichlet(alpha, size=n)[:, :K]

    def to_dict(self) -> dict[str, Any]:
        alpha = self.alpha if np.ndim(self.alpha) == 0 else list(self.alpha)
        return {"name": self.name, "alpha": alpha}


LatentDistribution = Union[TruncatedNormal, MultinomialFirstK, DirichletFirstK]

_LATENT_BY_NAME = {
    TruncatedNormal.name: TruncatedNormal,
    MultinomialFirstK.name: MultinomialFirstK,
    DirichletFirstK.name: DirichletFirstK,
}


def latent_from_dict(data: dict[str, Any]) -> LatentDistribution:
    """Build a latent distribution from its JSON form, e.g. ``{"name": "dirichlet", "alpha": 0.1}``."""
    data = dict(data)
    name = data.pop("name", None)
    if name not in _LATENT_BY_NAME:
        raise ConfigError(f"Unknown latent distribution {name!r}. Available: {sorted(_LATENT_BY_NAME)}")
    for key in ("weights", "alpha"):
        if isinstance(data.get(key), list):
            data[key] = tuple(data[key])
    try:
        return _LATENT_BY_NAME[name](**data)
    except TypeError as e:
        raise ConfigError(f"Bad parameters for {name}: {e}") from e


@dataclass(frozen=True)
class ModelConfig:
    """Everything needed to generate one network instance."""

    n: int
    L: int
    K: tuple[int, ...]
    pi: tuple[float, ...] | None = None
    latent: LatentDistribution = field(default_factory=TruncatedNormal)
    b_range: tuple[float, float] = (-0.05, 0.05)
    omega: float = 1.0
    seed: int = 0

    def __post_init__(self) -> None:
        K = (self.K,) if isinstance(self.K, (int, np.integer)) else tuple(int(k) for k in self.K)
        object.__setattr__(self, "K", K)
        if not K or min(K) < 1:
            raise ConfigError(f"every K_m must be >= 1, got {K}")
        if self.pi is None:
            object.__setattr__(self, "pi", tuple(1.0 / len(K) for _ in K))
        else:
            object.__setattr__(self, "pi", tuple(float(p) for p in self.pi))
        check_probabilities(self.pi)
        if len(self.pi) != len(K):
            raise ConfigError(f"pi has {len(self.pi)} entries but K has {len(K)}")
        if self.n < 2 or self.L < 1:
            raise ConfigError(f"need n >= 2 and L >= 1, got n={self.n}, L={self.L}")
        c, d = self.b_range
        object.__setattr__(self, "b_range", (float(c), float(d)))
        if c > d:
            raise ConfigError(f"b_range must satisfy c <= d, got {self.b_range}")

    @property
    def M(self) -> int:
        return len(self.K)

    @classmethod
    def uniform(cls, n: int, L: int, M: int, K: int, **kwargs: Any) -> "ModelConfig":
        """Model with ``M`` equally likely groups of ambient dimension ``K``."""
        return cls(n=n, L=L, K=(K,) * M, **kwargs)

    def replace(self, **changes: Any) -> "ModelConfig":
        return dataclasses.replace(self, **changes)


@dataclass(frozen=True)
class GroundTruth:
    """A generated instance: probability tensor plus the pieces it was built from.

    Labels are 1-based group numbers. ``P`` has zero diagonals.
    """

    P: np.ndarray
    labels: np.ndarray
    X: tuple[np.ndarray, ...]
    B: tuple[np.ndarray, ...]

    @property
    def n(self) -> int:
        return self.P.shape[0]

    @property
    def L(self) -> int:
        return self.P.shape[2]

    @property
    def M(self) -> int:
        return len(self.X)

    @property
    def K(self) -> tuple[int, ...]:
        return tuple(x.shape[1] for x in self.X)

    def centered_signal(self) -> np.ndarray:
        """Centered low-rank tensor with slices ``X̃ B X̃ᵀ``, ``X̃ = Π⊥ X`` (diagonal kept)."""
        Xc = [x - x.mean(axis=0, keepdims=True) for x in self.X]
        out = np.empty(self.P.shape, dtype=np.float64)
        for l, (group, b) in enumerate(zip(self.labels, self.B)):
            x = Xc[group - 1]
            out[:, :, l] = x @ b @ x.T
        return out


def check_probabilities(pi: Sequence[float]) -> np.ndarray:
    p = np.asarray(pi, dtype=np.float64)
    if p.ndim != 1 or p.size == 0 or np.any(p <= 0) or not np.isclose(p.sum(), 1.0, atol=1e-9):
        raise ConfigError(f"Group probabilities must be positive and sum to 1, got {tuple(pi)}")
    return p / p.sum()


def sample_labels(pi: Sequence[float], L: int, rng: np.random.Generator) -> np.ndarray:
    """I.i.d. multinomial group labels in ``1..M``."""
    p = check_probabilities(pi)
    return rng.choice(p.size, size=int(L), p=p).astype(np.int64) + 1


def sample_latent(dist: LatentDistribution, n: int, K: int, rng: np.random.Generator) -> np.ndarray:
    """``n × K`` matrix of i.i.d. latent rows inside the closed unit ball."""
    if K < 1 or n < 1:
        raise ConfigError(f"need n >= 1 and K >= 1, got n={n}, K={K}")
    return dist.sample(int(n), int(K), rng)


def sample_loading(K: int, c: float, d: float, rng: np.random.Generator, *, omega: float = 1.0) -> np.ndarray:
    """Symmetric ``K × K`` loading matrix with Uniform(c, d) upper-triangular entries.

    Off-diagonal entries are multiplied by ``omega``. ``c == d`` is the
    degenerate interval and yields the constant ``c``.
    """
    if c > d:
        raise ConfigError(f"loading range needs c <= d, got ({c}, {d})")
    rows, cols = np.triu_indices(K)
    values = rng.uniform(c, d, size=rows.size) if c < d else np.full(rows.size, float(c))
    values[rows < cols] *= omega
    B = np.zeros((K, K))
    B[rows, cols] = values
    return B + np.triu(B, k=1).T


def probability_tensor(labels: np.ndarray, X: Sequence[np.ndarray], B: Sequence[np.ndarray]) -> np.ndarray:
    """Stack the slices ``X[s(l)] B[l] X[s(l)]ᵀ`` with zeroed diagonals.

    Raises :class:`InfeasibleModelError` if any off-diagonal entry leaves [-1, 1].
    """
    labels = np.asarray(labels)
    if len(B) != labels.size:
        raise DimensionError(f"{labels.size} labels but {len(B)} loading matrices")
    n = X[0].shape[0]
    P = np.empty((n, n, labels.size), dtype=np.float64)
    for l, (group, b) in enumerate(zip(labels, B)):
        x = X[group - 1]
        if b.shape != (x.shape[1], x.shape[1]):
            raise DimensionError(f"loading matrix {l} has shape {b.shape}, group {group} has K={x.shape[1]}")
        P[:, :, l] = x @ b @ x.T
        np.fill_diagonal(P[:, :, l], 0.0)
    worst = float(np.max(np.abs(P), initial=0.0))
    if worst > 1.0 + _PROB_TOL:
        raise InfeasibleModelError(
            f"Connection probabilities reach |P| = {worst:.4f} > 1; shrink the loading range"
        )
    return P


def build_ground_truth(config: ModelConfig, seed: int | None = None) -> GroundTruth:
    """Generate labels, latent positions, loadings and the probability tensor.

    Each piece comes from its own substream of ``seed`` (default
    ``config.seed``), so the result is a pure function of config and seed.
    """
    seed = config.seed if seed is None else seed
    labels = sample_labels(config.pi, config.L, rng_streams.substream(seed, rng_streams.LABELS))
    X = tuple(
        sample_latent(config.latent, config.n, K_m, rng_streams.substream(seed, rng_streams.LATENT, m))
        for m, K_m in enumerate(config.K)
    )
    c, d = config.b_range
    B = tuple(
        sample_loading(
            config.K[group - 1], c, d,
            rng_streams.substream(seed, rng_streams.LOADING, l),
            omega=config.omega,
        )
        for l, group in enumerate(labels)
    )
    P = probability_tensor(labels, X, B)
    logger.debug("built ground truth n=%d L=%d M=%d seed=%d", config.n, config.L, config.M, seed)
    return GroundTruth(P=P, labels=labels, X=X, B=B)


def sample_adjacency(P: np.ndarray, seed: int) -> np.ndarray:
    """Draw a signed adjacency tensor: ``|A| ~ Bernoulli(|P|)`` with ``sign(A) = sign(P)``.

    Pairs ``i < j`` of layer ``l`` are drawn from substream ``(seed, ADJACENCY, l)``
    and mirrored; diagonals stay zero. Returned as ``int8``.
    """
    P = validate_probability(np.asarray(P, dtype=np.float64))
    n, _, L = P.shape
    A = np.zeros((n, n, L), dtype=np.int8)
    for l in range(L):
        gen = rng_streams.substream(seed, rng_streams.ADJACENCY, l)
        slice_p = P[:, :, l]
        edges = np.triu(gen.random((n, n)) < np.abs(slice_p), k=1)
        upper = (np.sign(slice_p) * edges).astype(np.int8)
        A[:, :, l] = upper + upper.T
    return A


def estimate_sparsity(A: np.ndarray) -> float:
    """Mean edge density over all layers and node pairs ``i < j``."""
    A = np.asarray(A)
    n, _, L = A.shape
    if n < 2 or L == 0:
        return 0.0
    return float(np.abs(A).sum(dtype=np.int64)) / (n * (n - 1) * L)
