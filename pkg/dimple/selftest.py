"""End-to-end checks on noiseless inputs, run by ``experiment.py selftest``."""
from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import DimpleError
from .hooi import HooiConfig, estimate_factors, true_factors
from .layer_cluster import ClusterConfig, cluster_tensor
from .linalg import regularize, two_to_inf_norm
from .metrics import misclassification_rate
from .netgen import ModelConfig, build_ground_truth
from .rng import substream
from .tensor_core import frobenius_norm, multi_mode_product

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: str
    seconds: float = 0.0


def check_noiseless_recovery(seed: int = 0) -> CheckResult:
    """HOOI and the tensor clusterer recover U, W and the labels from the centered signal."""
    config = ModelConfig.uniform(150, 120, 3, 3, b_range=(-0.05, 0.05), seed=seed)
    gt = build_ground_truth(config)
    cfg = HooiConfig.for_model(config.n, config.L, config.K)
    _, est = estimate_factors(gt.centered_signal(), cfg, hollow=False)
    labels = cluster_tensor(est.W, ClusterConfig(M=config.M, seed=seed)).labels
    report = misclassification_rate(labels, gt.labels, config.M, truth=true_factors(gt), est=est)
    err_u, err_w, r_bl = report.sin_theta_u, report.sin_theta_w, report.r_bl
    passed = err_u <= 1e-6 and err_w <= 1e-6 and r_bl == 0.0
    return CheckResult("noiseless recovery", passed, f"sin_theta_u={err_u:.2e} sin_theta_w={err_w:.2e} r_bl={r_bl:g}")


def tucker_residual(gt) -> float:
    signal = gt.centered_signal()
    truth = true_factors(gt)
    core = multi_mode_product(signal, {1: truth.U.T, 2: truth.U.T, 3: truth.W.T})
    rebuilt = multi_mode_product(core, {1: truth.U, 2: truth.U, 3: truth.W})
    return frobenius_norm(signal - rebuilt) / frobenius_norm(signal)


def check_tucker_identity(instances: int = 10, seed: int = 0) -> CheckResult:
    """The reference factors reproduce the centered signal exactly."""
    worst = 0.0
    for i in range(instances):
        config = ModelConfig.uniform(60, 40, 3, 3, seed=seed + i)
        worst = max(worst, tucker_residual(build_ground_truth(config)))
    return CheckResult("tucker identity", worst <= 1e-8, f"worst relative residual {worst:.2e} over {instances} instances")


def random_orthonormal(m: int, r: int, gen: np.random.Generator) -> np.ndarray:
    q, _ = np.linalg.qr(gen.standard_normal((m, r)))
    return q


def check_regularizer(draws: int = 1000, seed: int = 0) -> CheckResult:
    """Regularized factors always meet the sqrt(2) * delta row-norm bound."""
    gen = substream(seed, 99)
    failures = 0
    for _ in range(draws):
        m = int(gen.integers(20, 101))
        r = int(gen.integers(1, 6))
        U = random_orthonormal(m, r, gen)
        delta = float(gen.uniform(math.sqrt(r / m), 1.0))
        try:
            out = regularize(U, delta)
        except DimpleError:
            failures += 1
            continue
        if two_to_inf_norm(out) > math.sqrt(2.0) * delta * (1.0 + 1e-9):
            failures += 1
    return CheckResult("regularizer bound", failures == 0, f"{failures} of {draws} draws broke the bound")


CHECKS: tuple[Callable[[], CheckResult], ...] = (
    check_noiseless_recovery,
    check_tucker_identity,
    check_regularizer,
)


def run_selftest() -> list[CheckResult]:
    results = []
    for check in CHECKS:
        start = time.perf_counter()
        try:
            result = check()
        except Exception as e:
            result = CheckResult(check.__name__, False, f"{type(e).__name__}: {e}")
        result = CheckResult(result.name, result.passed, result.detail, time.perf_counter() - start)
        logger.debug("%s finished in %.2fs", result.name, result.seconds)
        results.append(result)
    return results
