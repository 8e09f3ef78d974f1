"""Penalty weight schemes, the group penalty I_w and the theory-driven levels lambda0 / lambda1.

sigma_p throughout is the UNCENTERED root second moment sqrt(P ||x^(p)||^2), not a
standard deviation: a constant coordinate equal to 2 has sigma_p = 2.
"""
import logging
import math
from dataclasses import dataclass
from typing import Any, Dict, Iterable, Optional

import numpy as np

from lassokmeans.core import (
    Codebook,
    Dataset,
    DegenerateWeightsError,
    DimensionMismatchError,
    Distribution,
    WeightVector,
    weighted_points,
)

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class LambdaTheory:
    """Minimal regularization levels; u_nonpositive flags a small ||w||."""
    lambda0: float
    u: float
    x: float
    lambda1: float
    u_nonpositive: bool = False

    def scaled(self, kappa1: float) -> float:
        """lambda1(x) / (1 - kappa1), the smallest level covered by the oracle inequality."""
        if not 0 <= kappa1 < 1:
            raise ValueError(f"kappa1 must lie in [0, 1), got {kappa1}")
        return self.lambda1 / (1.0 - kappa1)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "lambda0": self.lambda0,
            "u": self.u,
            "x": self.x,
            "lambda1": self.lambda1,
            "u_nonpositive": self.u_nonpositive,
        }


def plain_weights(d: int, bounds: Optional[np.ndarray] = None) -> WeightVector:
    if d < 1:
        raise ValueError(f"d must be >= 1, got {d}")
    return WeightVector(w=np.ones(d), scheme="plain", bounds=bounds)


def coordinate_moments(data: Distribution) -> np.ndarray:
    """Per-coordinate raw second moments P ||x^(p)||^2."""
    points, masses = weighted_points(data)
    return masses @ (points ** 2)


def normalized_weights(data: Distribution) -> WeightVector:
    """w_p = sigma_p. On a DiscreteDistribution this gives the deterministic limit weights."""
    sigma = np.sqrt(coordinate_moments(data))
    degenerate = np.flatnonzero(sigma == 0)
    if degenerate.size:
        raise DegenerateWeightsError(
            f"coordinates {degenerate.tolist()} have zero second moment; "
            "remove constant-zero coordinates before using normalized weights")
    return WeightVector(w=sigma, scheme="normalized", bounds=data.bounds)


def _threshold(codebook: Codebook, delta: float) -> np.ndarray:
    if not delta > 0:
        raise ValueError(f"delta must be positive, got {delta}")
    block_norms = np.linalg.norm(codebook.codepoints, axis=0)
    return 1.0 / np.maximum(delta, block_norms)


def threshold_weights(X: Dataset, delta: float, kmeans_cb: Codebook) -> WeightVector:
    """w_p = 1 / max(delta, ||c_n^(p)||) from an unpenalized k-means fit of X."""
    if kmeans_cb.d != X.d:
        raise DimensionMismatchError(f"codebook dimension {kmeans_cb.d} != data dimension {X.d}")
    return WeightVector(w=_threshold(kmeans_cb, delta), scheme="threshold", delta=float(delta), bounds=X.bounds)


def limit_threshold_weights(cstar: Codebook, delta: float, bounds: np.ndarray) -> WeightVector:
    """Deterministic counterpart 1 / max(delta, ||c*^(p)||) built from an optimal codebook."""
    return WeightVector(w=_threshold(cstar, delta), scheme="threshold", delta=float(delta), bounds=bounds)


def penalty(c: Codebook, w: WeightVector) -> float:
    """I_w(c) = sum_p w_p ||c^(p)||."""
    if c.d != w.d:
        raise DimensionMismatchError(f"codebook dimension {c.d} != weight dimension {w.d}")
    return float(np.dot(w.w, np.linalg.norm(c.codepoints, axis=0)))


def sparsity_norm_sq(w: WeightVector, S: Iterable[int]) -> float:
    """||w_S||^2."""
    idx = list(S)
    return float(np.sum(w.w[idx] ** 2)) if idx else 0.0


def lambda_formula(k: int, d: int, n: int, t_value: float, norm_sq: float, x: float) -> LambdaTheory:
    """lambda0, u and lambda1(x) from the scalar ingredients (natural logarithms)."""
    if n < 2 or k * d < 2:
        raise ValueError(f"need n >= 2 and k*d >= 2, got n={n}, k={k}, d={d}")
    if not x > 0:
        raise ValueError(f"confidence x must be positive, got {x}")
    log_kd = math.log(k * d)
    lambda0 = 16.0 * math.sqrt(2.0 * math.pi) * math.sqrt(k * log_kd / n) * t_value
    u = math.log(norm_sq * math.sqrt(n) / math.sqrt(log_kd))
    u_nonpositive = u <= 0
    if u_nonpositive:
        logger.warning(f"u = {u:.4g} <= 0 (small ||w||^2 = {norm_sq:.4g}); lambda1 still evaluated")
    excess = u + x
    if excess < 0:
        logger.warning(f"u + x = {excess:.4g} < 0, clamped to 0 in lambda1")
        excess = 0.0
    lambda1 = math.e * lambda0 * (1.0 + math.sqrt(excess / (k * log_kd)))
    return LambdaTheory(lambda0=lambda0, u=u, x=float(x), lambda1=lambda1, u_nonpositive=u_nonpositive)


def lambda_theory(k: int, d: int, n: int, w: WeightVector, x: float,
                  bounds: Optional[np.ndarray] = None) -> LambdaTheory:
    """Regularization levels for weights w; T(w) uses `bounds` or the bounds carried by w."""
    if w.d != d:
        raise DimensionMismatchError(f"weights have dimension {w.d}, expected {d}")
    return lambda_formula(k, d, n, w.t_value(bounds), w.norm_sq, x)
