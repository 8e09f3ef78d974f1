"""Brute-force optima over all partitions of a small support.

min_c P gamma(c) + lam I_w(c) equals the minimum over assignments of atoms to
cells of the partition-conditional convex problem, so enumerating canonical
assignments (restricted growth strings) and solving each exactly gives the
global optimum.
"""
import logging
from dataclasses import dataclass
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from lassokmeans.config import ENUMERATION_BUDGET, TOLERANCES
from lassokmeans.core import (
    BudgetExceededError,
    Codebook,
    DimensionMismatchError,
    DiscreteDistribution,
    Distribution,
    InvalidDataError,
    WeightVector,
    weighted_points,
)
from lassokmeans.estimators.quantizer import nearest
from lassokmeans.estimators.solver import solve_blocks
from lassokmeans.estimators.weights import coordinate_moments
from lassokmeans.utils.parallel import parallel_map

logger = logging.getLogger(__name__)

BATCH_SIZE = 4096


@dataclass(frozen=True)
class PenalizedOptimum:
    """Global minimizer of the penalized objective over a finite support."""
    codebook: Codebook
    objective: float
    partition_objective: float
    labels: Tuple[int, ...]

    def to_dict(self) -> Dict[str, Any]:
        return {
            "codebook": self.codebook.to_dict(),
            "objective": self.objective,
            "partition_objective": self.partition_objective,
            "labels": list(self.labels),
        }


@dataclass(frozen=True)
class OptimalSet:
    """Optimal codebooks up to relabeling, the optimal risk R* and the generalized support S+."""
    codebooks: Tuple[Codebook, ...]
    risk: float
    support_plus: Tuple[int, ...]

    def supports(self) -> List[Tuple[int, ...]]:
        return [c.support() for c in self.codebooks]

    def to_dict(self) -> Dict[str, Any]:
        return {
            "codebooks": [c.to_dict() for c in self.codebooks],
            "risk": self.risk,
            "support_plus": list(self.support_plus),
            "supports": [list(s) for s in self.supports()],
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "OptimalSet":
        return cls(
            codebooks=tuple(Codebook.from_dict(c) for c in data["codebooks"]),
            risk=float(data["risk"]),
            support_plus=tuple(int(p) for p in data["support_plus"]),
        )


@dataclass(frozen=True)
class RestrictedOptimum:
    """Best codebook supported inside S, padded with zero blocks; risk = R*_S + sigma2 off S."""
    coordinates: Tuple[int, ...]
    codebook: Codebook
    risk: float


def check_budget(k: int, m: int) -> None:
    if k ** m > ENUMERATION_BUDGET:
        raise BudgetExceededError(
            f"enumerating {k}^{m} assignments exceeds the budget of {ENUMERATION_BUDGET}")


def restricted_growth_strings(m: int, k: int, exact: bool = False) -> np.ndarray:
    """Canonical assignments of m items to at most k labels, in lexicographic order.

    Item 0 gets label 0 and each later item uses at most one label beyond the
    largest seen so far, which enumerates each partition once. With `exact` only
    assignments using exactly min(k, m) labels are kept.
    """
    if m < 1 or k < 1:
        raise ValueError(f"need m >= 1 and k >= 1, got m={m}, k={k}")
    check_budget(k, m)
    rows = np.zeros((1, 1), dtype=np.int16)
    maxes = np.zeros(1, dtype=np.int16)
    for _ in range(1, m):
        counts = np.minimum(maxes + 2, k)
        offsets = np.repeat(np.cumsum(counts) - counts, counts)
        labels = (np.arange(counts.sum()) - offsets).astype(np.int16)
        rows = np.column_stack([np.repeat(rows, counts, axis=0), labels])
        maxes = np.maximum(np.repeat(maxes, counts), labels)
    if exact:
        rows = rows[maxes == min(k, m) - 1]
    return rows


def evaluate_partitions(points: np.ndarray, masses: np.ndarray, labels: np.ndarray, k: int,
                        lam_w: np.ndarray, block_tol: float = 1e-12) -> Tuple[np.ndarray, np.ndarray]:
    """Partition objectives and their optimal codebooks for a batch of assignments.

    labels is (B, m); returns values (B,) and codebooks (B, k, d).
    """
    B, m = labels.shape
    d = points.shape[1]
    onehot = (labels[:, :, np.newaxis] == np.arange(k)).astype(np.float64)
    phat = np.einsum("bmk,m->bk", onehot, masses)
    sums = np.einsum("bmk,m,md->bkd", onehot, masses, points)
    means = np.zeros_like(sums)
    np.divide(sums, phat[:, :, np.newaxis], out=means, where=phat[:, :, np.newaxis] > 0)

    phat_blocks = np.broadcast_to(phat[:, np.newaxis, :], (B, d, k)).reshape(B * d, k)
    mean_blocks = means.transpose(0, 2, 1).reshape(B * d, k)
    solved = solve_blocks(phat_blocks, mean_blocks, np.tile(lam_w, B), block_tol)
    codebooks = solved.reshape(B, d, k).transpose(0, 2, 1)

    index = np.broadcast_to(labels[:, :, np.newaxis].astype(np.intp), (B, m, d))
    assigned = np.take_along_axis(codebooks, index, axis=1)
    distortion = np.sum((points[np.newaxis, :, :] - assigned) ** 2, axis=2) @ masses
    pen = np.linalg.norm(codebooks, axis=1) @ lam_w
    return distortion + pen, codebooks


def _enumerate(points: np.ndarray, masses: np.ndarray, k: int, lam_w: np.ndarray, exact: bool,
               threads: Optional[int], block_tol: float = 1e-12) -> Tuple[np.ndarray, np.ndarray]:
    """All canonical assignments and their partition objectives."""
    assignments = restricted_growth_strings(points.shape[0], k, exact=exact)
    logger.info(f"Enumerating {assignments.shape[0]} assignments of {points.shape[0]} atoms into {k} cells")
    batches = [assignments[i:i + BATCH_SIZE] for i in range(0, assignments.shape[0], BATCH_SIZE)]
    values = parallel_map(
        lambda batch: evaluate_partitions(points, masses, batch, k, lam_w, block_tol)[0],
        batches, threads)
    return assignments, np.concatenate(values)


def _objective(points, masses, codepoints, lam_w) -> float:
    _, dmin = nearest(points, codepoints)
    return float(np.dot(masses, dmin) + np.dot(lam_w, np.linalg.norm(codepoints, axis=0)))


def exact_penalized_opt(data: Distribution, k: int, lam: float, w: WeightVector,
                        threads: Optional[int] = None, block_tol: float = 1e-12) -> PenalizedOptimum:
    """Global minimum of P gamma + lam I_w by enumeration; ties go to the first assignment."""
    points, masses = weighted_points(data)
    if w.d != points.shape[1]:
        raise DimensionMismatchError(f"weights have dimension {w.d}, data has {points.shape[1]}")
    if not lam >= 0:
        raise ValueError(f"lambda must be nonnegative, got {lam}")
    lam_w = lam * w.w
    assignments, values = _enumerate(points, masses, k, lam_w, exact=False, threads=threads, block_tol=block_tol)
    best = int(np.argmin(values))
    _, codebooks = evaluate_partitions(points, masses, assignments[best:best + 1], k, lam_w, block_tol)
    codepoints = codebooks[0]
    return PenalizedOptimum(
        codebook=Codebook(codepoints),
        objective=_objective(points, masses, codepoints, lam_w),
        partition_objective=float(values[best]),
        labels=tuple(int(v) for v in assignments[best]),
    )


def _same_up_to_relabeling(a: Codebook, b: Codebook, tol: float) -> bool:
    return bool(np.max(np.abs(a.canonical() - b.canonical())) <= tol)


def optimal_codebooks(P: DiscreteDistribution, k: int, threads: Optional[int] = None) -> OptimalSet:
    """The set M of risk-optimal codebooks, deduplicated up to relabeling.

    Uses assignments with exactly k nonempty cells; candidates within the
    optimal-risk tolerance of the minimum are kept.
    """
    if k > P.m:
        raise InvalidDataError(f"k={k} exceeds the {P.m} atoms of the distribution")
    lam_w = np.zeros(P.d)
    assignments, values = _enumerate(P.atoms, P.masses, k, lam_w, exact=True, threads=threads)
    best_risk = float(values.min())
    candidates = np.flatnonzero(values <= best_risk + TOLERANCES["optimal_risk"])
    _, codebooks = evaluate_partitions(P.atoms, P.masses, assignments[candidates], k, lam_w)

    members: List[Codebook] = []
    for codepoints in codebooks:
        candidate = Codebook(codepoints)
        if not any(_same_up_to_relabeling(candidate, kept, TOLERANCES["dedup"]) for kept in members):
            members.append(candidate)
    support_plus = tuple(sorted(set().union(*(c.support() for c in members))))
    logger.info(f"Found {len(members)} optimal codebooks with R* = {best_risk:.12g}, S+ = {support_plus}")
    return OptimalSet(codebooks=tuple(members), risk=best_risk, support_plus=support_plus)


def check_no_subcodebook(M: OptimalSet) -> bool:
    """True when no optimal codebook has a support strictly inside another's."""
    supports = [set(s) for s in M.supports()]
    return not any(a < b for a in supports for b in supports)


def restricted_optimum(P: DiscreteDistribution, S: Sequence[int], k: int,
                       threads: Optional[int] = None) -> RestrictedOptimum:
    """Exact best codebook with support inside S, from enumeration on the marginal P^S."""
    coordinates = tuple(sorted(int(p) for p in S))
    moments = coordinate_moments(P)
    off_support = float(np.sum(np.delete(moments, list(coordinates))))
    if not coordinates:
        return RestrictedOptimum(coordinates, Codebook.zeros(k, P.d), off_support)
    marginal = P.atoms[:, list(coordinates)]
    lam_w = np.zeros(len(coordinates))
    assignments, values = _enumerate(marginal, P.masses, k, lam_w, exact=False, threads=threads)
    best = int(np.argmin(values))
    _, codebooks = evaluate_partitions(marginal, P.masses, assignments[best:best + 1], k, lam_w)
    padded = np.zeros((k, P.d))
    padded[:, list(coordinates)] = codebooks[0]
    return RestrictedOptimum(coordinates, Codebook(padded), float(values[best]) + off_support)

