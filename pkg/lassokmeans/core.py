"""Domain types shared by the estimators, oracles and experiment harness.

All arrays are float64 and frozen (read-only) after construction, so instances
can be shared across threads.
"""
import logging
from dataclasses import dataclass, field
from typing import Any, Dict, Optional, Sequence, Tuple, Union

import numpy as np

from lassokmeans.config import TOLERANCES

logger = logging.getLogger(__name__)

WEIGHT_SCHEMES = ("plain", "normalized", "threshold")


class LassoKMeansError(Exception):
    """Base exception for the Lasso k-means toolkit."""


class DimensionMismatchError(LassoKMeansError, ValueError):
    """Raised when point, codebook or weight dimensions disagree."""


class InvalidDataError(LassoKMeansError, ValueError):
    """Raised when a dataset or distribution violates its invariants."""


class DegenerateWeightsError(LassoKMeansError, ValueError):
    """Raised when a weight scheme cannot produce positive weights."""


class InvalidSpecError(LassoKMeansError, ValueError):
    """Raised for misconfigured mixture specs or violated bound preconditions."""


class BudgetExceededError(LassoKMeansError):
    """Raised when an enumeration oracle would exceed its budget."""


def _frozen(values: Any, ndim: int, name: str) -> np.ndarray:
    array = np.array(values, dtype=np.float64, copy=True)
    if array.ndim != ndim:
        raise InvalidDataError(f"{name} must be {ndim}-dimensional, got shape {array.shape}")
    if not np.all(np.isfinite(array)):
        raise InvalidDataError(f"{name} contains non-finite values")
    array.setflags(write=False)
    return array


def default_bounds(points: np.ndarray) -> np.ndarray:
    """Empirical per-coordinate max-abs; all-zero coordinates get the smallest positive float."""
    bounds = np.max(np.abs(points), axis=0)
    degenerate = np.flatnonzero(bounds == 0)
    if degenerate.size:
        logger.info(f"Coordinates {degenerate.tolist()} are identically zero; M_p set to the smallest positive float")
    return np.where(bounds > 0, bounds, np.finfo(np.float64).tiny)


def _check_bounds(points: np.ndarray, bounds: np.ndarray, name: str) -> None:
    if bounds.shape != (points.shape[1],):
        raise DimensionMismatchError(
            f"{name}: expected {points.shape[1]} bounds, got {bounds.shape[0]}")
    if np.any(bounds <= 0):
        raise InvalidDataError(f"{name}: all bounds M_p must be positive")
    outside = np.abs(points) > bounds
    if np.any(outside):
        rows, cols = np.nonzero(outside)
        raise InvalidDataError(
            f"{name}: point {rows[0]} coordinate {cols[0]} lies outside [-M_p, M_p]")


@dataclass(frozen=True)
class Dataset:
    """n bounded points in d dimensions; bounds are the box C = prod [-M_p, M_p]."""
    points: np.ndarray
    bounds: np.ndarray

    def __post_init__(self):
        points = _frozen(self.points, 2, "points")
        if points.shape[0] < 1 or points.shape[1] < 1:
            raise InvalidDataError(f"dataset needs n >= 1 and d >= 1, got shape {points.shape}")
        bounds = _frozen(self.bounds, 1, "bounds")
        _check_bounds(points, bounds, "Dataset")
        object.__setattr__(self, "points", points)
        object.__setattr__(self, "bounds", bounds)

    @classmethod
    def from_points(cls, points: Any, bounds: Optional[Any] = None) -> "Dataset":
        points = np.asarray(points, dtype=np.float64)
        if points.ndim == 1:
            points = points[:, np.newaxis]
        if bounds is None:
            bounds = default_bounds(points)
        return cls(points=points, bounds=bounds)

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def d(self) -> int:
        return self.points.shape[1]

    @property
    def masses(self) -> np.ndarray:
        """Masses of the empirical measure P_n."""
        return np.full(self.n, 1.0 / self.n)

    def as_distribution(self) -> "DiscreteDistribution":
        return DiscreteDistribution(atoms=self.points, masses=self.masses, bounds=self.bounds)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "n": self.n,
            "d": self.d,
            "bounds": self.bounds.tolist(),
            "points": self.points.tolist(),
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "Dataset":
        points = np.asarray(data["points"], dtype=np.float64)
        if points.ndim != 2 or points.shape != (data["n"], data["d"]):
            raise InvalidDataError(
                f"envelope declares n={data['n']}, d={data['d']} but points have shape {points.shape}")
        return cls.from_points(points, data.get("bounds"))


@dataclass(frozen=True)
class DiscreteDistribution:
    """Finite-support distribution; stands in for P in the exact oracles."""
    atoms: np.ndarray
    masses: np.ndarray
    bounds: np.ndarray

    def __post_init__(self):
        atoms = _frozen(self.atoms, 2, "atoms")
        masses = _frozen(self.masses, 1, "masses")
        if masses.shape[0] != atoms.shape[0]:
            raise DimensionMismatchError(
                f"{atoms.shape[0]} atoms but {masses.shape[0]} masses")
        if np.any(masses <= 0):
            raise InvalidDataError("masses must be positive")
        if abs(masses.sum() - 1.0) > TOLERANCES["mass_sum"]:
            raise InvalidDataError(f"masses sum to {masses.sum()!r}, expected 1")
        bounds = _frozen(self.bounds, 1, "bounds")
        _check_bounds(atoms, bounds, "DiscreteDistribution")
        object.__setattr__(self, "atoms", atoms)
        object.__setattr__(self, "masses", masses)
        object.__setattr__(self, "bounds", bounds)

    @classmethod
    def from_atoms(cls, atoms: Any, masses: Optional[Any] = None,
                   bounds: Optional[Any] = None) -> "DiscreteDistribution":
        atoms = np.asarray(atoms, dtype=np.float64)
        if atoms.ndim == 1:
            atoms = atoms[:, np.newaxis]
        if masses is None:
            masses = np.full(atoms.shape[0], 1.0 / atoms.shape[0])
        if bounds is None:
            bounds = default_bounds(atoms)
        return cls(atoms=atoms, masses=masses, bounds=bounds)

    @property
    def m(self) -> int:
        return self.atoms.shape[0]

    @property
    def d(self) -> int:
        return self.atoms.shape[1]

    def marginal(self, coordinates: Sequence[int]) -> "DiscreteDistribution":
        """Projection P^S onto the given coordinates."""
        coordinates = list(coordinates)
        if not coordinates:
            raise InvalidDataError("marginal needs at least one coordinate")
        return DiscreteDistribution(
            atoms=self.atoms[:, coordinates], masses=self.masses, bounds=self.bounds[coordinates])

    def to_dict(self) -> Dict[str, Any]:
        return {
            "atoms": self.atoms.tolist(),
            "masses": self.masses.tolist(),
            "bounds": self.bounds.tolist(),
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "DiscreteDistribution":
        return cls.from_atoms(data["atoms"], data.get("masses"), data.get("bounds"))


Distribution = Union[Dataset, DiscreteDistribution]


def weighted_points(data: Distribution) -> Tuple[np.ndarray, np.ndarray]:
    """(points, masses) for either a dataset (uniform masses) or a discrete distribution."""
    if isinstance(data, Dataset):
        return data.points, data.masses
    if isinstance(data, DiscreteDistribution):
        return data.atoms, data.masses
    raise TypeError(f"expected Dataset or DiscreteDistribution, got {type(data).__name__}")


@dataclass(frozen=True)
class Codebook:
    """k code points in R^d; block p is the length-k column c^(p)."""
    codepoints: np.ndarray

    def __post_init__(self):
        codepoints = _frozen(self.codepoints, 2, "codepoints")
        if codepoints.shape[0] < 1:
            raise InvalidDataError("a codebook needs at least one code point")
        object.__setattr__(self, "codepoints", codepoints)

    @classmethod
    def zeros(cls, k: int, d: int) -> "Codebook":
        return cls(np.zeros((k, d)))

    @property
    def k(self) -> int:
        return self.codepoints.shape[0]

    @property
    def d(self) -> int:
        return self.codepoints.shape[1]

    @property
    def blocks(self) -> np.ndarray:
        """(d, k) view: row p is c^(p)."""
        return self.codepoints.T

    def block(self, p: int) -> np.ndarray:
        return self.codepoints[:, p]

    def support(self) -> Tuple[int, ...]:
        """Coordinates whose block has any bit-exact nonzero entry."""
        return tuple(int(p) for p in np.flatnonzero(np.any(self.codepoints != 0.0, axis=0)))

    def clamp(self, bounds: np.ndarray) -> "Codebook":
        return Codebook(np.clip(self.codepoints, -bounds, bounds))

    def canonical(self) -> np.ndarray:
        """Code points sorted lexicographically, for comparison up to relabeling."""
        order = np.lexsort(self.codepoints.T[::-1])
        return self.codepoints[order]

    def to_dict(self) -> Dict[str, Any]:
        return {"k": self.k, "d": self.d, "codepoints": self.codepoints.tolist()}

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "Codebook":
        codebook = cls(np.asarray(data["codepoints"], dtype=np.float64))
        if "k" in data and codebook.k != data["k"]:
            raise InvalidDataError(f"codebook declares k={data['k']} but has {codebook.k} points")
        return codebook


@dataclass(frozen=True)
class Assignment:
    """Voronoi partition W_j(c) as labels; weights are the cell masses p_hat_j."""
    labels: np.ndarray
    counts: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        labels = np.array(self.labels, dtype=np.int64, copy=True)
        counts = np.array(self.counts, dtype=np.int64, copy=True)
        weights = _frozen(self.weights, 1, "weights")
        labels.setflags(write=False)
        counts.setflags(write=False)
        if counts.sum() != labels.shape[0]:
            raise InvalidDataError("cell counts must sum to the number of points")
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "counts", counts)
        object.__setattr__(self, "weights", weights)

    @property
    def k(self) -> int:
        return self.counts.shape[0]

    @property
    def empty_cells(self) -> np.ndarray:
        return np.flatnonzero(self.counts == 0)


@dataclass(frozen=True)
class WeightVector:
    """Positive penalty weights w_p with their scheme provenance.

    `bounds` carries M_p so that T(w) = max_p M_p / w_p can be evaluated.
    """
    w: np.ndarray
    scheme: str = "plain"
    delta: Optional[float] = None
    bounds: Optional[np.ndarray] = None

    def __post_init__(self):
        w = _frozen(self.w, 1, "weights")
        if np.any(w <= 0):
            raise DegenerateWeightsError("all weights w_p must be positive")
        if self.scheme not in WEIGHT_SCHEMES:
            raise ValueError(f"unknown weight scheme {self.scheme!r}")
        if self.scheme == "threshold" and (self.delta is None or not self.delta > 0):
            raise ValueError("threshold weights need a positive delta")
        object.__setattr__(self, "w", w)
        if self.bounds is not None:
            bounds = _frozen(self.bounds, 1, "bounds")
            if bounds.shape != w.shape:
                raise DimensionMismatchError(f"{w.shape[0]} weights but {bounds.shape[0]} bounds")
            object.__setattr__(self, "bounds", bounds)

    @property
    def d(self) -> int:
        return self.w.shape[0]

    @property
    def tag(self) -> str:
        return f"threshold({self.delta!r})" if self.scheme == "threshold" else self.scheme

    @property
    def norm_sq(self) -> float:
        return float(np.dot(self.w, self.w))

    def t_value(self, bounds: Optional[np.ndarray] = None) -> float:
        """T(w) = max_p M_p / w_p."""
        bounds = self.bounds if bounds is None else np.asarray(bounds, dtype=np.float64)
        if bounds is None:
            raise InvalidDataError("T(w) needs the coordinate bounds M_p")
        return float(np.max(bounds / self.w))

    def m_bar(self, k: int) -> float:
        """Upper bound sqrt(k) ||w||^2 T(w) on the penalty over C^k."""
        return float(np.sqrt(k) * self.norm_sq * self.t_value())

    def to_dict(self) -> Dict[str, Any]:
        return {
            "w": self.w.tolist(),
            "scheme": self.scheme,
            "delta": self.delta,
            "bounds": None if self.bounds is None else self.bounds.tolist(),
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "WeightVector":
        return cls(
            w=np.asarray(data["w"], dtype=np.float64),
            scheme=data.get("scheme", "plain"),
            delta=data.get("delta"),
            bounds=None if data.get("bounds") is None else np.asarray(data["bounds"], dtype=np.float64),
        )


@dataclass(frozen=True)
class FitResult:
    """Outcome of one penalized fit: codebook, objective P_n gamma + lambda I_w and its trace."""
    codebook: Codebook
    objective: float
    trace: Tuple[float, ...]
    active_set: Tuple[int, ...]
    n_iter: int
    converged: bool
    lam: float = 0.0
    risk: float = 0.0
    penalty: float = 0.0
    restart: int = 0
    metadata: Dict[str, Any] = field(default_factory=dict, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "trace", tuple(float(v) for v in self.trace))
        object.__setattr__(self, "active_set", tuple(int(p) for p in self.active_set))
        if self.active_set != self.codebook.support():
            raise InvalidDataError("active set disagrees with the codebook's nonzero blocks")

    def to_dict(self) -> Dict[str, Any]:
        return {
            "codebook": self.codebook.to_dict(),
            "objective": self.objective,
            "trace": list(self.trace),
            "active_set": list(self.active_set),
            "n_iter": self.n_iter,
            "converged": self.converged,
            "lambda": self.lam,
            "risk": self.risk,
            "penalty": self.penalty,
            "restart": self.restart,
            "metadata": dict(self.metadata),
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "FitResult":
        return cls(
            codebook=Codebook.from_dict(data["codebook"]),
            objective=float(data["objective"]),
            trace=tuple(data["trace"]),
            active_set=tuple(data["active_set"]),
            n_iter=int(data["n_iter"]),
            converged=bool(data["converged"]),
            lam=float(data.get("lambda", 0.0)),
            risk=float(data.get("risk", 0.0)),
            penalty=float(data.get("penalty", 0.0)),
            restart=int(data.get("restart", 0)),
            metadata=dict(data.get("metadata", {})),
        )
