"""Quasi-Gaussian mixtures: Gaussian components truncated to the ball B(0, M).

Each component is truncated and renormalized separately, so the mixture weights
theta_i are unchanged by truncation. Sampling is by per-component rejection.

RNG streams: every draw uses SeedSequence(seed, spawn_key=stream); the
experiment harness passes stream = (n, replicate).
"""
import logging
import math
from dataclasses import dataclass
from typing import Any, Dict, Optional, Sequence, Tuple

import numpy as np
from scipy import stats

from lassokmeans.config import DEFAULT_MIXTURE_PARAMS, TOLERANCES
from lassokmeans.core import Dataset, InvalidSpecError

logger = logging.getLogger(__name__)

MIN_ACCEPTANCE = 1e-6
ACCEPTANCE_CHECK_DRAWS = 10 ** 6
MAX_BATCH = 10 ** 6


@dataclass(frozen=True)
class MixtureSpec:
    """Weights theta_i, means m_i, covariances Sigma_i and truncation radius M."""
    weights: np.ndarray
    means: np.ndarray
    covariances: np.ndarray
    radius: float

    def __post_init__(self):
        weights = np.array(self.weights, dtype=np.float64)
        means = np.array(self.means, dtype=np.float64)
        covariances = np.array(self.covariances, dtype=np.float64)
        if weights.ndim != 1 or means.ndim != 2 or means.shape[0] != weights.shape[0]:
            raise InvalidSpecError(f"weights {weights.shape} and means {means.shape} disagree")
        k, d = means.shape
        if covariances.shape != (k, d, d):
            raise InvalidSpecError(f"covariances must have shape {(k, d, d)}, got {covariances.shape}")
        if np.any(weights <= 0) or abs(weights.sum() - 1.0) > TOLERANCES["mass_sum"]:
            raise InvalidSpecError("mixture weights must be positive and sum to 1")
        if not np.allclose(covariances, covariances.transpose(0, 2, 1)):
            raise InvalidSpecError("covariances must be symmetric")
        if np.any(np.linalg.eigvalsh(covariances) <= 0):
            raise InvalidSpecError("covariances must be positive definite")
        max_norm = float(np.max(np.linalg.norm(means, axis=1)))
        if not self.radius >= 2.0 * max_norm:
            raise InvalidSpecError(
                f"truncation radius {self.radius} must be at least 2 max ||m_i|| = {2.0 * max_norm}")
        if k >= 2 and self.b_tilde_of(means) == 0:
            raise InvalidSpecError("component means must be pairwise distinct")
        for name, value in (("weights", weights), ("means", means), ("covariances", covariances)):
            value.setflags(write=False)
            object.__setattr__(self, name, value)
        object.__setattr__(self, "radius", float(self.radius))

    @staticmethod
    def b_tilde_of(means: np.ndarray) -> float:
        diff = means[:, np.newaxis, :] - means[np.newaxis, :, :]
        dist = np.linalg.norm(diff, axis=2)
        return float(dist[~np.eye(means.shape[0], dtype=bool)].min())

    @property
    def k(self) -> int:
        return self.means.shape[0]

    @property
    def d(self) -> int:
        return self.means.shape[1]

    @property
    def sigma2(self) -> float:
        """Largest eigenvalue over all components."""
        return float(np.max(np.linalg.eigvalsh(self.covariances)))

    @property
    def sigma_minus2(self) -> float:
        """Smallest eigenvalue over all components."""
        return float(np.min(np.linalg.eigvalsh(self.covariances)))

    @property
    def sigma(self) -> float:
        return math.sqrt(self.sigma2)

    @property
    def sigma_minus(self) -> float:
        return math.sqrt(self.sigma_minus2)

    @property
    def b_tilde(self) -> float:
        """min over i != j of ||m_i - m_j||."""
        if self.k < 2:
            raise InvalidSpecError("B~ needs at least two components")
        return self.b_tilde_of(self.means)

    @property
    def theta_max(self) -> float:
        return float(self.weights.max())

    @property
    def theta_min(self) -> float:
        return float(self.weights.min())

    @property
    def active_set(self) -> Tuple[int, ...]:
        """S(m): coordinates where some mean is nonzero."""
        return tuple(int(p) for p in np.flatnonzero(np.any(self.means != 0.0, axis=0)))

    @property
    def bounds(self) -> np.ndarray:
        """Box bounds M_p = M circumscribing the truncation ball."""
        return np.full(self.d, self.radius)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "weights": self.weights.tolist(),
            "means": self.means.tolist(),
            "covariances": self.covariances.tolist(),
            "radius": self.radius,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "MixtureSpec":
        means = np.asarray(data["means"], dtype=np.float64)
        if "sigma" in data:
            covariances = np.broadcast_to(data["sigma"] ** 2 * np.eye(means.shape[1]),
                                          (means.shape[0],) + (means.shape[1],) * 2)
        else:
            covariances = np.asarray(data["covariances"], dtype=np.float64)
        return cls(weights=np.asarray(data["weights"], dtype=np.float64), means=means,
                   covariances=covariances, radius=float(data["radius"]))


@dataclass(frozen=True)
class MixtureSample:
    dataset: Dataset
    labels: np.ndarray


@dataclass(frozen=True)
class TruncationMass:
    """Monte Carlo estimate of N_i = P(N(m_i, Sigma_i) in B(0, M))."""
    component: int
    value: float
    stderr: float
    samples: int


def default_spec(k: int = DEFAULT_MIXTURE_PARAMS["k"], d: int = DEFAULT_MIXTURE_PARAMS["d"],
                 d_active: int = DEFAULT_MIXTURE_PARAMS["d_active"],
                 separation: float = DEFAULT_MIXTURE_PARAMS["separation"],
                 sigma_ratio: float = DEFAULT_MIXTURE_PARAMS["sigma_ratio"]) -> MixtureSpec:
    """Equal-weight isotropic mixture whose means live on the first d_active coordinates.

    With d_active >= 2 the means sit on a circle at angles pi/4 + 2 pi i / k with
    adjacent means `separation` apart; with d_active = 1 they are evenly spaced on a
    line. sigma = sigma_ratio * separation; inactive coordinates are independent noise.
    """
    if not 1 <= d_active <= d:
        raise InvalidSpecError(f"need 1 <= d_active <= d, got d_active={d_active}, d={d}")
    if k < 2:
        raise InvalidSpecError("the default spec needs k >= 2")
    means = np.zeros((k, d))
    if d_active == 1:
        means[:, 0] = (np.arange(k) - (k - 1) / 2.0) * separation
    else:
        radius = separation / (2.0 * math.sin(math.pi / k))
        angles = math.pi / 4 + 2.0 * math.pi * np.arange(k) / k
        means[:, 0] = radius * np.cos(angles)
        means[:, 1] = radius * np.sin(angles)
    sigma = sigma_ratio * separation
    max_norm = float(np.max(np.linalg.norm(means, axis=1)))
    truncation = max(2.0 * max_norm, max_norm + 6.0 * sigma * math.sqrt(d))
    return MixtureSpec(
        weights=np.full(k, 1.0 / k),
        means=means,
        covariances=np.broadcast_to(sigma ** 2 * np.eye(d), (k, d, d)),
        radius=truncation,
    )


def _rng(seed: int, stream: Sequence[int]) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=tuple(int(s) for s in stream)))


def _inside(points: np.ndarray, radius: float) -> np.ndarray:
    return (np.sum(points ** 2, axis=1) <= radius ** 2) & np.all(np.abs(points) <= radius, axis=1)


def _draw_component(spec: MixtureSpec, i: int, count: int, rng: np.random.Generator) -> np.ndarray:
    chol = np.linalg.cholesky(spec.covariances[i])
    accepted = []
    have = 0
    draws = 0
    hits = 0
    while have < count:
        rate = hits / draws if draws else 1.0
        batch = int(min(MAX_BATCH, math.ceil((count - have) / max(rate, 1e-3) * 1.2) + 16))
        candidates = spec.means[i] + rng.standard_normal((batch, spec.d)) @ chol.T
        keep = candidates[_inside(candidates, spec.radius)]
        draws += batch
        hits += keep.shape[0]
        accepted.append(keep)
        have += keep.shape[0]
        if draws >= ACCEPTANCE_CHECK_DRAWS and hits / draws < MIN_ACCEPTANCE:
            raise InvalidSpecError(
                f"component {i} acceptance {hits / draws:.2e} is below {MIN_ACCEPTANCE}; "
                "the truncation radius is too small for this component")
    return np.concatenate(accepted)[:count]


def sample_with_labels(spec: MixtureSpec, n: int, seed: int = 0, stream: Sequence[int] = ()) -> MixtureSample:
    """n draws with their component labels; Dataset bounds are M_p = M."""
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    rng = _rng(seed, stream)
    labels = rng.choice(spec.k, size=n, p=spec.weights)
    points = np.empty((n, spec.d))
    for i in range(spec.k):
        rows = np.flatnonzero(labels == i)
        if rows.size:
            points[rows] = _draw_component(spec, i, rows.size, rng)
    logger.debug(f"Sampled {n} points from a {spec.k}-component mixture (seed={seed}, stream={tuple(stream)})")
    return MixtureSample(dataset=Dataset(points=points, bounds=spec.bounds), labels=labels)


def sample(spec: MixtureSpec, n: int, seed: int = 0, stream: Sequence[int] = ()) -> Dataset:
    return sample_with_labels(spec, n, seed, stream).dataset


def truncation_mass(spec: MixtureSpec, i: int, mc_samples: int = 100_000, seed: int = 0) -> TruncationMass:
    if mc_samples < 1000:
        raise ValueError(f"mc_samples must be >= 1000, got {mc_samples}")
    if not 0 <= i < spec.k:
        raise InvalidSpecError(f"component {i} out of range for k={spec.k}")
    rng = _rng(seed, (i,))
    chol = np.linalg.cholesky(spec.covariances[i])
    inside = 0
    remaining = mc_samples
    while remaining:
        batch = min(remaining, MAX_BATCH)
        draws = spec.means[i] + rng.standard_normal((batch, spec.d)) @ chol.T
        inside += int(np.count_nonzero(_inside(draws, spec.radius)))
        remaining -= batch
    value = inside / mc_samples
    return TruncationMass(component=i, value=value,
                          stderr=math.sqrt(value * (1.0 - value) / mc_samples), samples=mc_samples)


def eta_estimate(spec: MixtureSpec, mc_samples: int = 100_000, seed: int = 0) -> float:
    """eta = max_i (1 - N_i) from Monte Carlo truncation masses."""
    return max(1.0 - truncation_mass(spec, i, mc_samples, seed).value for i in range(spec.k))


def component_frequency_test(labels: np.ndarray, weights: np.ndarray) -> float:
    """Chi-square goodness-of-fit p-value of component counts against theta."""
    weights = np.asarray(weights, dtype=np.float64)
    counts = np.bincount(labels, minlength=weights.shape[0])
    return float(stats.chisquare(counts, f_exp=weights * counts.sum()).pvalue)


def cross_covariance(X: Dataset, active: Optional[Sequence[int]] = None) -> np.ndarray:
    """Empirical covariance block between active and inactive coordinates."""
    active = list(range(X.d // 2)) if active is None else [int(p) for p in active]
    inactive = [p for p in range(X.d) if p not in active]
    centered = X.points - X.points.mean(axis=0)
    return centered[:, active].T @ centered[:, inactive] / X.n
