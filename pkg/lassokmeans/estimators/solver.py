"""Penalized alternating minimization for the Lasso k-means objective.

Each iteration assigns points to their nearest code point, then solves the
partition-conditional problem exactly. That problem splits over coordinates
into independent k-vector problems

    min_v  sum_j p_j (v_j - b_j)^2 + lam_w ||v||

with b the cell means on coordinate p, solved in closed form up to a scalar
root found by bisection.
"""
import itertools
import logging
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from lassokmeans.config import PATH_COLUMNS, SCREEN_COLUMNS, SolverConfig
from lassokmeans.core import (
    Codebook,
    Dataset,
    DimensionMismatchError,
    Distribution,
    FitResult,
    InvalidDataError,
    WeightVector,
    weighted_points,
)
from lassokmeans.estimators.quantizer import cell_statistics, kmeans_plusplus, marginal_stats, nearest
from lassokmeans.estimators.weights import coordinate_moments, penalty
from lassokmeans.utils.parallel import parallel_map

logger = logging.getLogger(__name__)

MAX_BISECTION_STEPS = 200


def solve_blocks(phat: np.ndarray, b: np.ndarray, lam: np.ndarray,
                 tol: float = 1e-12) -> np.ndarray:
    """Exact minimizers of N independent block problems, one per row.

    phat, b are (N, k); lam is (N,). Entries with phat_j = 0 are forced to zero.
    A row is zero iff ||2 phat_j b_j|| <= lam; otherwise
    v_j = phat_j b_j / (phat_j + lam / (2 nu)) with nu = ||v|| the root of

        h(nu) = sum_j (phat_j b_j / (phat_j nu + lam / 2))^2 = 1,

    which is decreasing on (0, ||b||] with h(0+) > 1 >= h(||b||).
    """
    phat = np.asarray(phat, dtype=np.float64)
    b = np.where(phat > 0, np.asarray(b, dtype=np.float64), 0.0)
    lam = np.broadcast_to(np.asarray(lam, dtype=np.float64), phat.shape[:1])
    a = phat * b
    result = np.zeros_like(b)

    active = 2.0 * np.linalg.norm(a, axis=1) > lam
    unpenalized = active & (lam == 0)
    result[unpenalized] = b[unpenalized]
    rows = np.flatnonzero(active & (lam > 0))
    if rows.size == 0:
        return result

    p, ab, half = phat[rows], a[rows], lam[rows, np.newaxis] / 2.0
    lo = np.zeros(rows.size)
    hi = np.linalg.norm(b[rows], axis=1)
    for _ in range(MAX_BISECTION_STEPS):
        mid = 0.5 * (lo + hi)
        h = np.sum((ab / (p * mid[:, np.newaxis] + half)) ** 2, axis=1)
        above = h > 1.0
        lo = np.where(above, mid, lo)
        hi = np.where(above, hi, mid)
        if np.all(hi - lo <= tol * hi):
            break
    nu = 0.5 * (lo + hi)
    result[rows] = ab * nu[:, np.newaxis] / (p * nu[:, np.newaxis] + half)
    return result


def mstep_block(phat: Sequence[float], b: Sequence[float], lam_w: float,
                tol: float = 1e-12) -> np.ndarray:
    """Minimize sum_j phat_j (v_j - b_j)^2 + lam_w ||v|| over v in R^k."""
    phat = np.asarray(phat, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if phat.shape != b.shape or phat.ndim != 1:
        raise DimensionMismatchError(f"phat {phat.shape} and b {b.shape} must be matching vectors")
    if np.any(phat < 0):
        raise ValueError("cell weights must be nonnegative")
    if lam_w < 0:
        raise ValueError(f"lam_w must be nonnegative, got {lam_w}")
    return solve_blocks(phat[np.newaxis, :], b[np.newaxis, :], np.array([lam_w]), tol)[0]


def block_kkt_residual(phat: np.ndarray, b: np.ndarray, lam_w: float, v: np.ndarray) -> float:
    """Subgradient optimality residual of v for one block problem (over cells with phat_j > 0)."""
    live = phat > 0
    grad = 2.0 * phat[live] * (v[live] - b[live])
    norm_v = np.linalg.norm(v)
    if norm_v == 0:
        # 0 is optimal iff the smooth gradient lies in the lam_w ball
        return float(max(np.linalg.norm(grad) - lam_w, 0.0))
    return float(np.linalg.norm(grad + lam_w * v[live] / norm_v))


def _weighted_risk(dmin: np.ndarray, masses: np.ndarray, uniform: bool) -> float:
    return float(dmin.mean()) if uniform else float(np.dot(masses, dmin))


def _penalty_value(codepoints: np.ndarray, weights: np.ndarray) -> float:
    return float(np.dot(weights, np.linalg.norm(codepoints, axis=0)))


@dataclass
class _Run:
    """Private mutable state of one restart."""
    codepoints: np.ndarray
    trace: List[float] = field(default_factory=list)
    n_iter: int = 0
    converged: bool = False


def _reseed_empty(points, masses, uniform, codepoints, empty, lam, weights):
    """Move empty cells to the farthest point, one at a time, when the objective does not increase."""
    for j in empty:
        _, dmin = nearest(points, codepoints)
        base = _weighted_risk(dmin, masses, uniform) + lam * _penalty_value(codepoints, weights)
        far = int(np.argmax(dmin))
        if dmin[far] == 0:
            break
        candidate = codepoints.copy()
        candidate[j] = points[far]
        _, cand_dmin = nearest(points, candidate)
        cand = _weighted_risk(cand_dmin, masses, uniform) + lam * _penalty_value(candidate, weights)
        if cand <= base:
            codepoints = candidate
        else:
            logger.debug(f"Reseeding empty cell {j} would raise the objective ({base:.6g} -> {cand:.6g}); kept at zero")
    return codepoints


def _alternate(points: np.ndarray, masses: np.ndarray, uniform: bool, bounds: np.ndarray,
               lam: float, weights: np.ndarray, init: np.ndarray, cfg: SolverConfig) -> _Run:
    k = init.shape[0]
    run = _Run(codepoints=np.clip(init, -bounds, bounds))
    lam_w = lam * weights
    labels, dmin = nearest(points, run.codepoints)
    current = _weighted_risk(dmin, masses, uniform) + lam * _penalty_value(run.codepoints, weights)
    run.trace.append(current)
    for iteration in range(1, cfg.max_iter + 1):
        means, phat, counts = cell_statistics(points, masses, labels, k, uniform=uniform)
        blocks = solve_blocks(np.broadcast_to(phat, (weights.shape[0], k)), means.T, lam_w, cfg.block_tol)
        codepoints = np.clip(blocks.T, -bounds, bounds)
        empty = np.flatnonzero(counts == 0)
        if empty.size and cfg.empty_cell_policy == "reseed-farthest":
            codepoints = _reseed_empty(points, masses, uniform, codepoints, empty, lam, weights)
        labels, dmin = nearest(points, codepoints)
        previous = current
        current = _weighted_risk(dmin, masses, uniform) + lam * _penalty_value(codepoints, weights)
        run.codepoints = codepoints
        run.trace.append(current)
        run.n_iter = iteration
        logger.debug(f"iter {iteration}: objective {current:.12g}")
        if abs(previous - current) <= cfg.tol * abs(previous):
            run.converged = True
            break
    return run


def data_point_starts(X: Distribution, k: int, limit: Optional[int] = None) -> List[Codebook]:
    """Initial codebooks made of k distinct data points, every combination up to `limit`."""
    points = np.unique(weighted_points(X)[0], axis=0)
    combos = itertools.islice(itertools.combinations(range(points.shape[0]), k), limit)
    return [Codebook(points[list(combo)]) for combo in combos]


def fit(X: Distribution, k: int, lam: float, w: WeightVector, cfg: Optional[SolverConfig] = None,
        initial_codebooks: Optional[Sequence[Codebook]] = None) -> FitResult:
    """Lasso k-means fit: best of the explicit starts followed by `cfg.restarts` k-means++ restarts.

    Restart r seeds its RNG from SeedSequence(cfg.seed, spawn_key=(r,)); the lowest
    objective wins and ties go to the earliest start, so results do not depend on
    the thread count.
    """
    cfg = cfg or SolverConfig()
    points, masses = weighted_points(X)
    uniform = isinstance(X, Dataset)
    if not 1 <= k <= points.shape[0]:
        raise InvalidDataError(f"k must lie in [1, n={points.shape[0]}], got {k}")
    if not lam >= 0:
        raise ValueError(f"lambda must be nonnegative, got {lam}")
    if w.d != points.shape[1]:
        raise DimensionMismatchError(f"weights have dimension {w.d}, data has {points.shape[1]}")

    starts = []
    for codebook in initial_codebooks or ():
        if codebook.codepoints.shape != (k, points.shape[1]):
            raise DimensionMismatchError(
                f"initial codebook has shape {codebook.codepoints.shape}, expected {(k, points.shape[1])}")
        starts.append(codebook.codepoints)
    for restart in range(cfg.restarts):
        rng = np.random.default_rng(np.random.SeedSequence(cfg.seed, spawn_key=(restart,)))
        starts.append(kmeans_plusplus(points, masses, k, rng))

    runs = parallel_map(
        lambda init: _alternate(points, masses, uniform, X.bounds, lam, w.w, init, cfg),
        starts, cfg.threads)
    best = min(range(len(runs)), key=lambda i: (runs[i].trace[-1], i))
    run = runs[best]
    codebook = Codebook(run.codepoints)
    _, dmin = nearest(points, run.codepoints)
    risk_value = _weighted_risk(dmin, masses, uniform)
    penalty_value = penalty(codebook, w)
    logger.info(
        f"Fit k={k} lambda={lam:.6g}: objective {run.trace[-1]:.10g} from start {best} of {len(runs)}, "
        f"{run.n_iter} iterations, active set size {len(codebook.support())}")
    return FitResult(
        codebook=codebook,
        objective=run.trace[-1],
        trace=tuple(run.trace),
        active_set=codebook.support(),
        n_iter=run.n_iter,
        converged=run.converged,
        lam=float(lam),
        risk=risk_value,
        penalty=penalty_value,
        restart=best,
        metadata={"starts": len(runs), "weights": w.tag},
    )


def screening_table(X: Distribution, k: int, lam: float, w: WeightVector) -> pd.DataFrame:
    """Per-coordinate screening statistics sqrt(sigma2_p - Rhat_p) against w_p lam / 2."""
    d = weighted_points(X)[0].shape[1]
    if w.d != d:
        raise DimensionMismatchError(f"weights have dimension {w.d}, data has {d}")
    rows = []
    for p in range(d):
        stats = marginal_stats(X, (p,), k)
        statistic = float(np.sqrt(max(stats.sigma2 - stats.rhat, 0.0)))
        threshold = float(w.w[p] * lam / 2.0)
        rows.append({
            "coordinate": p,
            "weight": float(w.w[p]),
            "sigma2": stats.sigma2,
            "rhat": stats.rhat,
            "statistic": statistic,
            "threshold": threshold,
            "margin": threshold - statistic,
            "screened": bool(statistic < threshold),
        })
    return pd.DataFrame(rows, columns=SCREEN_COLUMNS)


def screen(X: Distribution, k: int, lam: float, w: WeightVector) -> Tuple[int, ...]:
    """Coordinates whose block is zero in every global minimizer of the penalized objective."""
    table = screening_table(X, k, lam, w)
    screened = tuple(int(p) for p in table.loc[table["screened"], "coordinate"])
    logger.info(f"Screening at lambda={lam:.6g} removes {len(screened)} of {w.d} coordinates")
    return screened


def full_shrinkage_lambda(X: Distribution, w: WeightVector) -> float:
    """2 max_p sigma_p / w_p; at or above it every block is zero for any partition."""
    sigma = np.sqrt(coordinate_moments(X))
    return float(2.0 * np.max(sigma / w.w))


def lambda_grid(X: Distribution, w: WeightVector, num: int = 20, ratio: float = 1e-3,
                include_zero: bool = False) -> np.ndarray:
    """Geometric decreasing grid from the full-shrinkage level down to ratio times it."""
    if num < 1:
        raise ValueError(f"num must be >= 1, got {num}")
    if not 0 < ratio < 1:
        raise ValueError(f"ratio must lie in (0, 1), got {ratio}")
    top = full_shrinkage_lambda(X, w)
    grid = np.geomspace(top, top * ratio, num) if num > 1 else np.array([top])
    return np.append(grid, 0.0) if include_zero else grid


@dataclass(frozen=True)
class PathResult:
    """Warm-started fits along a strictly decreasing lambda grid."""
    lambdas: Tuple[float, ...]
    fits: Tuple[FitResult, ...]

    @property
    def active_sets(self) -> Tuple[Tuple[int, ...], ...]:
        return tuple(f.active_set for f in self.fits)

    def to_frame(self) -> pd.DataFrame:
        rows = [{
            "lambda": lam,
            "objective": f.objective,
            "risk": f.risk,
            "penalty": f.penalty,
            "n_active": len(f.active_set),
            "active_set": " ".join(str(p) for p in f.active_set),
            "n_iter": f.n_iter,
            "converged": f.converged,
        } for lam, f in zip(self.lambdas, self.fits)]
        return pd.DataFrame(rows, columns=PATH_COLUMNS)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "lambdas": list(self.lambdas),
            "fits": [f.to_dict() for f in self.fits],
            "active_sets": [list(s) for s in self.active_sets],
        }


def reg_path(X: Distribution, k: int, grid: Sequence[float], w: WeightVector,
             cfg: Optional[SolverConfig] = None) -> PathResult:
    """Fit along the grid, warm-starting each level from the previous solution plus fresh restarts.

    Active sets are recorded as found; they need not be monotone in lambda.
    """
    grid = [float(v) for v in grid]
    if not grid:
        raise ValueError("lambda grid is empty")
    if any(v < 0 for v in grid) or any(b >= a for a, b in zip(grid, grid[1:])):
        raise ValueError("lambda grid must be strictly decreasing and nonnegative")
    fits: List[FitResult] = []
    for lam in grid:
        warm = [fits[-1].codebook] if fits else None
        fits.append(fit(X, k, lam, w, cfg, initial_codebooks=warm))
    return PathResult(lambdas=tuple(grid), fits=tuple(fits))
