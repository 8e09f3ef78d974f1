"""Margin-function surrogate, kappa0 estimation and sparse w-approximations of optimal codebooks."""
import itertools
import logging
from dataclasses import dataclass, field
from typing import Any, Dict, Optional, Tuple

import numpy as np

from lassokmeans.config import TOLERANCES
from lassokmeans.core import BudgetExceededError, Codebook, DiscreteDistribution, WeightVector
from lassokmeans.estimators.quantizer import discrete_risk
from lassokmeans.estimators.weights import sparsity_norm_sq
from lassokmeans.oracle.exact import OptimalSet, check_budget, restricted_optimum

logger = logging.getLogger(__name__)

# Subsets of S(c*) enumerated by sparse_approx
SUBSET_BUDGET = 2 ** 12


@dataclass(frozen=True)
class Kappa0Estimate:
    """Sampled lower bound on kappa0 = kappa0' v kappa0''."""
    value: float
    samples_used: int
    samples: int
    kappa_prime: float
    kappa_second: float

    def to_dict(self) -> Dict[str, Any]:
        return {
            "value": self.value,
            "samples_used": self.samples_used,
            "samples": self.samples,
            "kappa_prime": self.kappa_prime,
            "kappa_second": self.kappa_second,
        }


@dataclass(frozen=True)
class SparseApprox:
    """Sparse w-approximation: minimizer of 3 R(c) + 8 kappa0 lam^2 ||w_S||^2 over S inside S(c*)."""
    support: Tuple[int, ...]
    codebook: Codebook
    criterion: float
    risk: float
    criteria: Dict[Tuple[int, ...], float] = field(default_factory=dict, compare=False)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "support": list(self.support),
            "codebook": self.codebook.to_dict(),
            "criterion": self.criterion,
            "risk": self.risk,
            "criteria": [{"support": list(s), "criterion": v} for s, v in self.criteria.items()],
        }


def relabelings(c: Codebook) -> np.ndarray:
    """All k! row permutations of a codebook, shape (k!, k, d)."""
    perms = np.array(list(itertools.permutations(range(c.k))))
    return c.codepoints[perms]


def relabeled_distances(c: Codebook, cstar: Codebook) -> np.ndarray:
    """||c - pi(c*)||^2 for every relabeling pi of c*."""
    return np.sum((c.codepoints[np.newaxis] - relabelings(cstar)) ** 2, axis=(1, 2))


def distance_to_set(c: Codebook, M: OptimalSet) -> Tuple[float, int]:
    """Squared distance from c to the nearest member of M over relabelings, and that member's index."""
    distances = [float(relabeled_distances(c, cstar).min()) for cstar in M.codebooks]
    nearest_index = int(np.argmin(distances))
    return distances[nearest_index], nearest_index


def align(c: Codebook, reference: Codebook) -> Codebook:
    """Relabel c to be as close as possible to `reference`."""
    candidates = relabelings(c)
    distances = np.sum((candidates - reference.codepoints[np.newaxis]) ** 2, axis=(1, 2))
    return Codebook(candidates[int(np.argmin(distances))])


def excess_distortion(P: DiscreteDistribution, M: OptimalSet, c: Codebook) -> float:
    """l(c, c*) = R(c) - R*."""
    return discrete_risk(c, P) - M.risk


def kappa_ratio(P: DiscreteDistribution, M: OptimalSet, c: Codebook) -> float:
    """||c - c*(c)||^2 / l(c, c*) with c*(c) the nearest optimal codebook; inf when l vanishes."""
    excess = excess_distortion(P, M, c)
    distance, _ = distance_to_set(c, M)
    if excess < TOLERANCES["kappa_min_excess"]:
        return float("inf")
    return distance / excess


def bisector_distances(points: np.ndarray, c: Codebook) -> np.ndarray:
    """Distance from each point to the nearest bisector hyperplane H_ij of distinct code points."""
    best = np.full(points.shape[0], np.inf)
    for i, j in itertools.combinations(range(c.k), 2):
        direction = c.codepoints[j] - c.codepoints[i]
        length = np.linalg.norm(direction)
        if length == 0:
            continue
        midpoint = 0.5 * (c.codepoints[i] + c.codepoints[j])
        best = np.minimum(best, np.abs((points - midpoint) @ direction) / length)
    return best


def margin_profile(P: DiscreteDistribution, M: OptimalSet) -> Tuple[np.ndarray, np.ndarray]:
    """Breakpoints t and values of the surrogate p_bar(t), which is a right-continuous step function."""
    distances = [bisector_distances(P.atoms, c) for c in M.codebooks]
    finite = np.concatenate([d[np.isfinite(d)] for d in distances])
    thresholds = np.unique(np.concatenate(([0.0], finite)))
    values = np.array([
        max(float(P.masses[d <= t].sum()) for d in distances) for t in thresholds
    ])
    return thresholds, values


def margin_surrogate(P: DiscreteDistribution, M: OptimalSet, t: float) -> float:
    """p_bar(t) = sup over c* in M of the mass within t of a bisector of c*; dominates p(t)."""
    if t < 0:
        raise ValueError(f"t must be nonnegative, got {t}")
    return max(float(P.masses[bisector_distances(P.atoms, c) <= t].sum()) for c in M.codebooks)


def _zero_random_coordinates(c: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    d = c.shape[1]
    size = int(rng.integers(1, d + 1))
    zeroed = c.copy()
    zeroed[:, rng.permutation(d)[:size]] = 0.0
    return zeroed


def _restricted_support_ratio(P: DiscreteDistribution, M: OptimalSet, c: Codebook,
                              excess: float) -> Optional[float]:
    """Largest ||c - pi(c*)||^2 / l over relabeled c* whose support strictly contains S(c)."""
    support = set(c.support())
    ratios = [
        float(relabeled_distances(c, cstar).max()) / excess
        for cstar in M.codebooks if support < set(cstar.support())
    ]
    return max(ratios) if ratios else None


def kappa0_estimate(P: DiscreteDistribution, M: OptimalSet, samples: int, seed: int = 0) -> Kappa0Estimate:
    """Lower-bound estimate of kappa0 from codebooks drawn uniformly on C^k.

    Every other draw has a random set of coordinate blocks zeroed so that the
    restricted-support ratios enter the pool too. Draws with l(c, c*) below the
    exclusion threshold are skipped.
    """
    if samples < 1:
        raise ValueError(f"samples must be >= 1, got {samples}")
    rng = np.random.default_rng(seed)
    k = M.codebooks[0].k
    kappa_prime = 0.0
    kappa_second = 0.0
    used = 0
    for draw in range(samples):
        codepoints = rng.uniform(-P.bounds, P.bounds, size=(k, P.d))
        restricted = draw % 2 == 1
        if restricted:
            codepoints = _zero_random_coordinates(codepoints, rng)
        c = Codebook(codepoints)
        excess = excess_distortion(P, M, c)
        if excess < TOLERANCES["kappa_min_excess"]:
            continue
        used += 1
        distance, _ = distance_to_set(c, M)
        kappa_prime = max(kappa_prime, distance / excess)
        if restricted:
            ratio = _restricted_support_ratio(P, M, c, excess)
            kappa_second = max(kappa_second, ratio if ratio is not None else distance / excess)
    value = max(kappa_prime, kappa_second)
    logger.info(f"kappa0 estimate {value:.6g} from {used} of {samples} draws")
    return Kappa0Estimate(value=value, samples_used=used, samples=samples,
                          kappa_prime=kappa_prime, kappa_second=kappa_second)


def sparse_approx(P: DiscreteDistribution, cstar: Codebook, lam: float, kappa0: float,
                  w: WeightVector, threads: Optional[int] = None) -> SparseApprox:
    """Best trade-off between restricted risk and ||w_S||^2 over every S inside S(c*).

    Restricted risks are exact (enumeration on the marginal). Among minimizers the
    codebook closest to c* over relabelings wins, so lam = 0 returns c* itself.
    """
    base = cstar.support()
    if 2 ** len(base) > SUBSET_BUDGET:
        raise BudgetExceededError(f"{2 ** len(base)} candidate supports exceed the budget of {SUBSET_BUDGET}")
    check_budget(cstar.k, P.m)
    scale = 8.0 * kappa0 * lam ** 2

    candidates = []
    for size in range(len(base) + 1):
        for subset in itertools.combinations(base, size):
            optimum = restricted_optimum(P, subset, cstar.k, threads)
            criterion = 3.0 * optimum.risk + scale * sparsity_norm_sq(w, subset)
            codebook = align(optimum.codebook, cstar)
            candidates.append((subset, criterion, optimum.risk, codebook))

    lowest = min(criterion for _, criterion, _, _ in candidates)
    ties = [c for c in candidates if c[1] <= lowest + TOLERANCES["criterion_tie"]]
    subset, criterion, risk_value, codebook = min(
        ties, key=lambda c: float(np.sum((c[3].codepoints - cstar.codepoints) ** 2)))
    logger.info(f"Sparse approximation at lambda={lam:.6g}: support {subset}, criterion {criterion:.10g}")
    return SparseApprox(
        support=tuple(subset),
        codebook=codebook,
        criterion=criterion,
        risk=risk_value,
        criteria={c[0]: c[1] for c in candidates},
    )
