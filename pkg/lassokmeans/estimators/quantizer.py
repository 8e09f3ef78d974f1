"""Contrast, risks, Voronoi assignment, centroid updates and exact 1-D k-means."""
import logging
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np

from lassokmeans.config import MARGINAL_LLOYD_RESTARTS, SOLVER_DEFAULTS
from lassokmeans.core import (
    Assignment,
    Codebook,
    Dataset,
    DimensionMismatchError,
    DiscreteDistribution,
    Distribution,
    InvalidDataError,
    weighted_points,
)

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class MarginalStats:
    """Restricted second moment and optimal distortion of the marginal on S.

    sigma2 is the raw (uncentered) second moment, not a variance.
    """
    coordinates: Tuple[int, ...]
    sigma2: float
    rhat: float
    exact: bool


def squared_distances(points: np.ndarray, codepoints: np.ndarray) -> np.ndarray:
    """(n, k) matrix of ||x_i - c_j||^2 using the direct difference formula."""
    if points.shape[1] != codepoints.shape[1]:
        raise DimensionMismatchError(
            f"points have dimension {points.shape[1]}, codebook has {codepoints.shape[1]}")
    diff = points[:, np.newaxis, :] - codepoints[np.newaxis, :, :]
    return np.einsum("ijk,ijk->ij", diff, diff)


def contrast(c: Codebook, x: Sequence[float]) -> float:
    """gamma(c, x) = min_j ||x - c_j||^2."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (c.d,):
        raise DimensionMismatchError(f"point has shape {x.shape}, codebook dimension is {c.d}")
    return float(squared_distances(x[np.newaxis, :], c.codepoints).min())


def nearest(points: np.ndarray, codepoints: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Labels (ties to the smallest index) and the squared distance to the nearest code point."""
    dist = squared_distances(points, codepoints)
    labels = np.argmin(dist, axis=1)
    return labels, dist[np.arange(points.shape[0]), labels]


def assign(c: Codebook, data: Distribution) -> Assignment:
    """Voronoi partition W_j(c); cell weights are n_j / n or the atom masses per cell."""
    points, masses = weighted_points(data)
    labels, _ = nearest(points, c.codepoints)
    counts = np.bincount(labels, minlength=c.k)
    if isinstance(data, Dataset):
        weights = counts / data.n
    else:
        weights = np.bincount(labels, weights=masses, minlength=c.k)
    return Assignment(labels=labels, counts=counts, weights=weights)


def empirical_risk(c: Codebook, X: Dataset) -> float:
    """P_n gamma(c, .)"""
    _, dmin = nearest(X.points, c.codepoints)
    return float(dmin.mean())


def discrete_risk(c: Codebook, P: DiscreteDistribution) -> float:
    """R(c) = sum_a mass_a gamma(c, atom_a)."""
    _, dmin = nearest(P.atoms, c.codepoints)
    return float(np.dot(P.masses, dmin))


def risk(c: Codebook, data: Distribution) -> float:
    if isinstance(data, Dataset):
        return empirical_risk(c, data)
    return discrete_risk(c, data)


def cell_statistics(points: np.ndarray, masses: np.ndarray, labels: np.ndarray, k: int,
                    uniform: bool = False) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Cell means, cell masses p_hat_j and cell counts for a labelling.

    With `uniform` the means are plain averages (sum / n_j), so a singleton cell
    reproduces its point bit-exactly. Empty cells get a zero mean.
    """
    counts = np.bincount(labels, minlength=k)
    sums = np.zeros((k, points.shape[1]))
    if uniform:
        np.add.at(sums, labels, points)
        phat = counts / points.shape[0]
        denom = counts.astype(np.float64)
    else:
        np.add.at(sums, labels, points * masses[:, np.newaxis])
        phat = np.bincount(labels, weights=masses, minlength=k)
        denom = phat
    means = np.zeros_like(sums)
    filled = counts > 0
    means[filled] = sums[filled] / denom[filled, np.newaxis]
    return means, phat, counts


def centroid_update(data: Distribution, a: Assignment,
                    previous: Optional[Codebook] = None) -> Tuple[Codebook, np.ndarray]:
    """Move each nonempty cell's code point to its centroid.

    Returns the codebook and a boolean mask of empty cells. Empty cells keep the
    previous code point when one is given, otherwise they sit at zero.
    """
    points, masses = weighted_points(data)
    means, _, counts = cell_statistics(points, masses, a.labels, a.k, uniform=isinstance(data, Dataset))
    empty = counts == 0
    if previous is not None and np.any(empty):
        means[empty] = previous.codepoints[empty]
    return Codebook(means), empty


def kmeans_plusplus(points: np.ndarray, masses: np.ndarray, k: int,
                    rng: np.random.Generator) -> np.ndarray:
    """k-means++ seeding with D^2 sampling weighted by the point masses."""
    m = points.shape[0]
    centers = np.empty((k, points.shape[1]))
    first = rng.choice(m, p=masses / masses.sum())
    centers[0] = points[first]
    closest = np.sum((points - centers[0]) ** 2, axis=1)
    for j in range(1, k):
        scores = masses * closest
        total = scores.sum()
        if total > 0:
            idx = rng.choice(m, p=scores / total)
        else:
            # every point already coincides with a center
            idx = rng.choice(m, p=masses / masses.sum())
        centers[j] = points[idx]
        closest = np.minimum(closest, np.sum((points - centers[j]) ** 2, axis=1))
    return centers


def lloyd(data: Distribution, init: Codebook, max_iter: int = SOLVER_DEFAULTS["max_iter"],
          tol: float = SOLVER_DEFAULTS["tol"]) -> Tuple[Codebook, Tuple[float, ...], int, bool]:
    """Textbook Lloyd iterations; empty cells keep their previous code point.

    Stops when the relative risk change drops to `tol`, as the penalized solver does.
    Returns (codebook, risk trace, iterations, converged).
    """
    points, masses = weighted_points(data)
    uniform = isinstance(data, Dataset)
    codepoints = init.codepoints.copy()
    labels, dmin = nearest(points, codepoints)
    current = float(np.dot(masses, dmin)) if not uniform else float(dmin.mean())
    trace = [current]
    converged = False
    n_iter = 0
    for n_iter in range(1, max_iter + 1):
        means, _, counts = cell_statistics(points, masses, labels, init.k, uniform=uniform)
        codepoints = np.where((counts > 0)[:, np.newaxis], means, codepoints)
        labels, dmin = nearest(points, codepoints)
        previous, current = current, (float(dmin.mean()) if uniform else float(np.dot(masses, dmin)))
        trace.append(current)
        if abs(previous - current) <= tol * abs(previous):
            converged = True
            break
    return Codebook(codepoints), tuple(trace), n_iter, converged


def kmeans_1d_exact(values: Sequence[float], masses: Optional[Sequence[float]] = None,
                    k: int = 2) -> float:
    """Optimal k-means distortion of a weighted 1-D sample by dynamic programming.

    Optimal clusters are contiguous in sorted order, so the DP runs over prefix
    sums of the distinct values. Distortion is normalized by the total mass.
    """
    values = np.asarray(values, dtype=np.float64)
    masses = np.full(values.shape[0], 1.0 / values.shape[0]) if masses is None \
        else np.asarray(masses, dtype=np.float64)
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    distinct, inverse = np.unique(values, return_inverse=True)
    m = distinct.shape[0]
    if k >= m:
        return 0.0
    mass = np.bincount(inverse, weights=masses, minlength=m)
    total = mass.sum()
    mass = mass / total
    centered = distinct - np.dot(mass, distinct)

    W = np.concatenate(([0.0], np.cumsum(mass)))
    S1 = np.concatenate(([0.0], np.cumsum(mass * centered)))
    S2 = np.concatenate(([0.0], np.cumsum(mass * centered ** 2)))

    def segment_cost(starts: np.ndarray, end: int) -> np.ndarray:
        w = W[end] - W[starts]
        s1 = S1[end] - S1[starts]
        cost = (S2[end] - S2[starts]) - s1 * s1 / w
        return np.maximum(cost, 0.0)

    # best[j] = optimal cost of the first j distinct values with the current number of clusters
    best = np.full(m + 1, np.inf)
    best[0] = 0.0
    ends = np.arange(1, m + 1)
    best[1:] = np.maximum((S2[ends] - S2[0]) - (S1[ends] - S1[0]) ** 2 / (W[ends] - W[0]), 0.0)
    for clusters in range(2, k + 1):
        updated = np.full(m + 1, np.inf)
        for end in range(clusters, m + 1):
            starts = np.arange(clusters - 1, end)
            updated[end] = np.min(best[starts] + segment_cost(starts, end))
        best = updated
    return float(max(best[m], 0.0))


def marginal_stats(data: Distribution, S: Sequence[int], k: int, seed: int = 0) -> MarginalStats:
    """sigma2_S and Rhat_S for the marginal on S.

    Singletons use the exact 1-D DP; larger sets fall back to multi-restart Lloyd,
    which gives an upper bound on Rhat_S and is flagged as approximate.
    """
    points, masses = weighted_points(data)
    coordinates = tuple(int(p) for p in S)
    if not coordinates:
        raise InvalidDataError("marginal_stats needs a nonempty coordinate set")
    if min(coordinates) < 0 or max(coordinates) >= points.shape[1]:
        raise DimensionMismatchError(f"coordinates {coordinates} out of range for d={points.shape[1]}")
    projected = points[:, list(coordinates)]
    per_coordinate = masses @ (projected ** 2)
    sigma2 = float(np.sum(per_coordinate))

    if len(coordinates) == 1:
        rhat = kmeans_1d_exact(projected[:, 0], masses, k)
        return MarginalStats(coordinates, sigma2, min(rhat, sigma2), True)

    logger.warning(f"Rhat for coordinate set {coordinates} is approximate (Lloyd, {MARGINAL_LLOYD_RESTARTS} restarts)")
    marginal = DiscreteDistribution(
        atoms=projected, masses=masses / masses.sum(), bounds=data.bounds[list(coordinates)])
    rhat = np.inf
    for restart in range(MARGINAL_LLOYD_RESTARTS):
        rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(restart,)))
        init = Codebook(kmeans_plusplus(projected, masses, k, rng))
        _, trace, _, _ = lloyd(marginal, init)
        rhat = min(rhat, trace[-1])
    return MarginalStats(coordinates, sigma2, float(min(rhat, sigma2)), False)
