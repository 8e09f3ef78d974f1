"""Consolidated configuration for the Lasso k-means toolkit."""

import os
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path
from typing import Any, Dict, Optional

import toml

PACKAGE_VERSION = "0.3.0"

# Environment
THREADS_ENV_VAR = "LASSOKMEANS_THREADS"

LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"

# Enumeration oracles refuse instances with more than this many assignments (k**m)
ENUMERATION_BUDGET = 10**6

# Numerical tolerances shared across modules
TOLERANCES = {
    "mass_sum": 1e-12,
    "bound_slack": 1e-12,
    "kkt_residual": 1e-8,
    "dedup": 1e-9,
    "optimal_risk": 1e-9,
    "kappa_min_excess": 1e-12,
    "criterion_tie": 1e-12,
    "trace_monotone": 1e-10,
}

# Column definitions for tabular outputs
TRACE_COLUMNS = ["iter", "objective"]

SCREEN_COLUMNS = [
    "coordinate", "weight", "sigma2", "rhat", "statistic", "threshold", "margin", "screened",
]

PATH_COLUMNS = [
    "lambda", "objective", "risk", "penalty", "n_active", "active_set", "n_iter", "converged",
]

RECOVERY_COLUMNS = [
    "n", "alpha", "lambda", "delta", "replicates", "false_inclusion", "false_exclusion",
    "mean_excess_distortion", "reference",
]

BOUND_COLUMNS = ["name", "value", "vacuous"]

# Solver defaults
SOLVER_DEFAULTS = {
    "max_iter": 200,
    "tol": 1e-10,
    "restarts": 16,
    "block_tol": 1e-12,
    "seed": 0,
    "empty_cell_policy": "reseed-farthest",
    "threads": None,
}

EMPTY_CELL_POLICIES = ("reseed-farthest", "drop")

# Restarts used for the approximate multi-coordinate restricted distortion
MARGINAL_LLOYD_RESTARTS = 16

# CLI defaults
CLI_DEFAULTS = {
    "kappa1": 0.5,
    "lambda_scale": 1.0,
    "alpha": 0.25,
    "n_list": (250, 500, 1000, 2000),
    "replicates": 200,
    "reference_n": 20000,
    "evaluation_n": 20000,
    "kappa0_samples": 2000,
    "num_lambdas": 20,
    "lambda_ratio": 1e-3,
    "mc_samples": 100000,
}

# Default quasi-Gaussian mixture used by the experiment commands
DEFAULT_MIXTURE_PARAMS = {
    "k": 2,
    "d": 10,
    "d_active": 2,
    "separation": 2.0,
    "sigma_ratio": 0.05,
}

# JSON schemas for file inputs
DATASET_SCHEMA = {
    "type": "object",
    "required": ["n", "d", "points"],
    "properties": {
        "n": {"type": "integer", "minimum": 1},
        "d": {"type": "integer", "minimum": 1},
        "bounds": {"type": "array", "items": {"type": "number", "exclusiveMinimum": 0}},
        "points": {
            "type": "array",
            "minItems": 1,
            "items": {"type": "array", "items": {"type": "number"}, "minItems": 1},
        },
    },
}

DISTRIBUTION_SCHEMA = {
    "type": "object",
    "required": ["atoms", "masses"],
    "properties": {
        "atoms": {
            "type": "array",
            "minItems": 1,
            "items": {"type": "array", "items": {"type": "number"}, "minItems": 1},
        },
        "masses": {"type": "array", "items": {"type": "number", "exclusiveMinimum": 0}},
        "bounds": {"type": "array", "items": {"type": "number", "exclusiveMinimum": 0}},
    },
}

MIXTURE_SPEC_SCHEMA = {
    "type": "object",
    "required": ["weights", "means", "radius"],
    "properties": {
        "weights": {"type": "array", "minItems": 1, "items": {"type": "number", "exclusiveMinimum": 0}},
        "means": {
            "type": "array",
            "minItems": 1,
            "items": {"type": "array", "items": {"type": "number"}, "minItems": 1},
        },
        "covariances": {
            "type": "array",
            "items": {"type": "array", "items": {"type": "array", "items": {"type": "number"}}},
        },
        "sigma": {"type": "number", "exclusiveMinimum": 0},
        "radius": {"type": "number", "exclusiveMinimum": 0},
    },
    "oneOf": [{"required": ["covariances"]}, {"required": ["sigma"]}],
}


def resolve_threads(threads: Optional[int] = None) -> int:
    """Thread count from the argument, else the environment, else 1."""
    if threads is not None:
        return max(1, int(threads))
    env_value = os.environ.get(THREADS_ENV_VAR)
    if env_value:
        try:
            return max(1, int(env_value))
        except ValueError:
            return 1
    return 1


@dataclass(frozen=True)
class SolverConfig:
    """Configuration for the penalized alternating minimization."""
    max_iter: int = SOLVER_DEFAULTS["max_iter"]
    tol: float = SOLVER_DEFAULTS["tol"]
    restarts: int = SOLVER_DEFAULTS["restarts"]
    block_tol: float = SOLVER_DEFAULTS["block_tol"]
    seed: int = SOLVER_DEFAULTS["seed"]
    empty_cell_policy: str = SOLVER_DEFAULTS["empty_cell_policy"]
    threads: Optional[int] = SOLVER_DEFAULTS["threads"]

    def __post_init__(self):
        if self.max_iter < 1:
            raise ValueError(f"max_iter must be >= 1, got {self.max_iter}")
        if not self.tol > 0 or not self.block_tol > 0:
            raise ValueError("tolerances must be positive")
        if self.restarts < 1:
            raise ValueError(f"restarts must be >= 1, got {self.restarts}")
        if self.empty_cell_policy not in EMPTY_CELL_POLICIES:
            raise ValueError(
                f"empty_cell_policy must be one of {EMPTY_CELL_POLICIES}, got {self.empty_cell_policy!r}")

    @classmethod
    def from_toml(cls, path: Path, **overrides: Any) -> "SolverConfig":
        """Load a `[solver]` table from a TOML file; keyword overrides win."""
        data = toml.load(path)
        table = data.get("solver", data)
        known = {f.name for f in fields(cls)}
        params = {key: value for key, value in table.items() if key in known}
        params.update({key: value for key, value in overrides.items() if value is not None})
        return cls(**params)

    def with_overrides(self, **overrides: Any) -> "SolverConfig":
        """Copy with the non-None overrides applied."""
        return replace(self, **{k: v for k, v in overrides.items() if v is not None})

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)
