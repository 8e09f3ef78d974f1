"""Experiment services behind the command-line harness."""
import logging
import math
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from lassokmeans.config import CLI_DEFAULTS, PACKAGE_VERSION, RECOVERY_COLUMNS, TOLERANCES, SolverConfig
from lassokmeans.core import (
    Dataset,
    DiscreteDistribution,
    Distribution,
    FitResult,
    WeightVector,
    weighted_points,
)
from lassokmeans.estimators.quantizer import empirical_risk
from lassokmeans.estimators.solver import data_point_starts, fit, screen
from lassokmeans.estimators.weights import (
    LambdaTheory,
    lambda_theory,
    limit_threshold_weights,
    normalized_weights,
    penalty,
    plain_weights,
    sparsity_norm_sq,
    threshold_weights,
)
from lassokmeans.oracle.approximation import (
    excess_distortion,
    kappa0_estimate,
    margin_profile,
    sparse_approx,
)
from lassokmeans.oracle.exact import (
    check_budget,
    check_no_subcodebook,
    exact_penalized_opt,
    optimal_codebooks,
    restricted_optimum,
)
from lassokmeans.synth.mixture import MixtureSpec, sample
from lassokmeans.utils.parallel import parallel_map

logger = logging.getLogger(__name__)

# Data-point initializations tried by the oracle check on top of the k-means++ restarts
ORACLE_POINT_STARTS = 2000


class ReportService:
    """Reproducibility metadata embedded in every report."""

    @staticmethod
    def config_block(command: str, params: Dict[str, Any], inputs: Optional[Dict[str, str]] = None) -> Dict[str, Any]:
        return {
            "command": command,
            "version": PACKAGE_VERSION,
            "params": {key: (list(value) if isinstance(value, tuple) else value) for key, value in params.items()},
            "inputs_sha256": dict(inputs or {}),
        }


class WeightService:
    """Resolves a weight scheme name into a WeightVector for the data at hand."""

    @staticmethod
    def parse(scheme: str) -> Tuple[str, Optional[float]]:
        """'plain', 'normalized' or 'threshold:<delta>'."""
        name, _, arg = scheme.partition(":")
        if name in ("plain", "normalized") and not arg:
            return name, None
        if name == "threshold":
            try:
                delta = float(arg)
            except ValueError as e:
                raise ValueError(f"threshold weights need a numeric delta, got {arg!r}") from e
            if not delta > 0:
                raise ValueError(f"threshold delta must be positive, got {delta}")
            return name, delta
        raise ValueError(f"unknown weight scheme {scheme!r}; use plain, normalized or threshold:<delta>")

    @staticmethod
    def resolve(scheme: str, data: Distribution, k: int, cfg: Optional[SolverConfig] = None) -> WeightVector:
        name, delta = WeightService.parse(scheme)
        d = weighted_points(data)[0].shape[1]
        if name == "plain":
            return plain_weights(d, data.bounds)
        if name == "normalized":
            return normalized_weights(data)
        pre_fit = fit(data, k, 0.0, plain_weights(d, data.bounds), cfg)
        logger.info(f"Threshold weights from an unpenalized pre-fit (objective {pre_fit.objective:.6g})")
        if isinstance(data, Dataset):
            return threshold_weights(data, delta, pre_fit.codebook)
        return limit_threshold_weights(pre_fit.codebook, delta, data.bounds)


class FitService:

    @staticmethod
    def theory_lambda(data: Distribution, k: int, w: WeightVector, confidence: Optional[float],
                      kappa1: float) -> Tuple[float, LambdaTheory]:
        """lambda = lambda1(x) / (1 - kappa1) with x defaulting to log n."""
        points, _ = weighted_points(data)
        n, d = points.shape
        x = math.log(n) if confidence is None else confidence
        theory = lambda_theory(k, d, n, w, x, data.bounds)
        return theory.scaled(kappa1), theory


class RecoveryService:
    """Monte Carlo support recovery of the threshold Lasso on mixture data."""

    @staticmethod
    def _replicate(spec: MixtureSpec, n: int, replicate: int, k: int, lam: float, delta: float,
                   seed: int, cfg: SolverConfig, evaluation: Dataset) -> Dict[str, Any]:
        X = sample(spec, n, seed, stream=(n, replicate))
        pre_fit = fit(X, k, 0.0, plain_weights(X.d, X.bounds), cfg)
        w = threshold_weights(X, delta, pre_fit.codebook)
        result = fit(X, k, lam, w, cfg)
        active = set(spec.active_set)
        found = set(result.active_set)
        return {
            "replicate": replicate,
            "false_inclusion": float(bool(found - active)),
            "false_exclusion": float(bool(active - found)),
            "risk": empirical_risk(result.codebook, evaluation),
        }

    @staticmethod
    def run(spec: MixtureSpec, alpha: float, n_list: Sequence[int], replicates: int, seed: int = 0,
            lambda_scale: float = CLI_DEFAULTS["lambda_scale"], k: Optional[int] = None,
            cfg: Optional[SolverConfig] = None, reference_n: int = CLI_DEFAULTS["reference_n"],
            evaluation_n: int = CLI_DEFAULTS["evaluation_n"], threads: Optional[int] = None) -> pd.DataFrame:
        """One row per n: delta = n^-alpha, lambda = lambda_scale n^-alpha, threshold weights.

        Excess distortion is measured on an independent evaluation sample against
        an unpenalized reference fit on `reference_n` points.
        """
        if not 0 < alpha < 0.5:
            raise ValueError(f"alpha must lie in (0, 1/2), got {alpha}")
        if replicates < 1:
            raise ValueError(f"replicates must be >= 1, got {replicates}")
        k = spec.k if k is None else k
        cfg = (cfg or SolverConfig()).with_overrides(threads=1)

        # streams (0, 0) and (0, 1) never collide with replicate streams (n >= 1)
        reference = sample(spec, reference_n, seed, stream=(0, 0))
        evaluation = sample(spec, evaluation_n, seed, stream=(0, 1))
        reference_fit = fit(reference, k, 0.0, plain_weights(spec.d, reference.bounds), cfg)
        reference_risk = empirical_risk(reference_fit.codebook, evaluation)
        reference_tag = f"reference-fit(n={reference_n})"

        rows = []
        for n in sorted(int(v) for v in n_list):
            delta = n ** (-alpha)
            lam = lambda_scale * n ** (-alpha)
            outcomes = parallel_map(
                lambda r, n=n, lam=lam, delta=delta: RecoveryService._replicate(
                    spec, n, r, k, lam, delta, seed, cfg, evaluation),
                list(range(replicates)), threads)
            outcomes.sort(key=lambda o: o["replicate"])
            rows.append({
                "n": n,
                "alpha": alpha,
                "lambda": lam,
                "delta": delta,
                "replicates": replicates,
                "false_inclusion": float(np.mean([o["false_inclusion"] for o in outcomes])),
                "false_exclusion": float(np.mean([o["false_exclusion"] for o in outcomes])),
                "mean_excess_distortion": float(np.mean([o["risk"] for o in outcomes]) - reference_risk),
                "reference": reference_tag,
            })
            logger.info(f"n={n}: false inclusion {rows[-1]['false_inclusion']:.3f}, "
                        f"false exclusion {rows[-1]['false_exclusion']:.3f}")
        return pd.DataFrame(rows, columns=RECOVERY_COLUMNS)


class OracleCheckService:
    """Compares a solver fit with enumeration ground truth and the theory surfaces."""

    @staticmethod
    def _sml_surface(P: DiscreteDistribution, M, k: int, lam: float, lambda0: float, kappa1: float,
                     w: WeightVector) -> float:
        """min over enumerated candidates c of l(c, c*) + (3 - kappa1) lam max(I_w(c), lambda0).

        Candidates are the restricted optima for every S inside S+ and the members of M.
        """
        candidates = list(M.codebooks)
        support_plus = list(M.support_plus)
        for mask in range(2 ** len(support_plus)):
            subset = [p for i, p in enumerate(support_plus) if mask >> i & 1]
            candidates.append(restricted_optimum(P, subset, k).codebook)
        return min(
            excess_distortion(P, M, c) + (3.0 - kappa1) * lam * max(penalty(c, w), lambda0)
            for c in candidates
        )

    @staticmethod
    def run(data: Distribution, k: int, lam: float, w: WeightVector, kappa0_samples: int,
            seed: int = 0, cfg: Optional[SolverConfig] = None, kappa1: float = CLI_DEFAULTS["kappa1"],
            confidence: Optional[float] = None) -> Dict[str, Any]:
        P = data.as_distribution() if isinstance(data, Dataset) else data
        check_budget(k, P.m)
        slack = TOLERANCES["bound_slack"]

        exact = exact_penalized_opt(P, k, lam, w)
        solver_fit: FitResult = fit(data, k, lam, w, cfg, initial_codebooks=data_point_starts(data, k, ORACLE_POINT_STARTS))
        screened = screen(P, k, lam, w)
        exact_support = set(exact.codebook.support())

        M = optimal_codebooks(P, k)
        excess = excess_distortion(P, M, solver_fit.codebook)
        x = math.log(P.m) if confidence is None else confidence
        theory = lambda_theory(k, P.d, P.m, w, x, P.bounds)
        lambda0 = theory.lambda0

        sml_bound = min(4.0 * lam * max(penalty(c, w), lambda0) for c in M.codebooks)
        surface = OracleCheckService._sml_surface(P, M, k, lam, lambda0, kappa1, w)
        kappa0 = kappa0_estimate(P, M, kappa0_samples, seed)

        sparse = []
        for cstar in M.codebooks:
            approx = sparse_approx(P, cstar, lam, kappa0.value, w)
            oracle_bound = max(8.0 * kappa0.value * lam ** 2 * sparsity_norm_sq(w, cstar.support()),
                               3.0 * lam * lambda0)
            sparse.append({
                "reference": cstar.to_dict(),
                "approximation": approx.to_dict(),
                "sparse_oracle_bound": oracle_bound,
                "holds": bool(excess <= oracle_bound + slack),
            })
        thresholds, values = margin_profile(P, M)

        report = {
            "objective_gap": solver_fit.objective - exact.objective,
            "solver": solver_fit.to_dict(),
            "exact": exact.to_dict(),
            "screened": list(screened),
            "screening_sound": not (set(screened) & exact_support),
            "optimal_set": M.to_dict(),
            "no_subcodebook": check_no_subcodebook(M),
            "excess_distortion": excess,
            "lambda_theory": theory.to_dict(),
            "regime": {
                "sml": bool(lam >= theory.scaled(kappa1)),
                "sparse_oracle": bool(lam >= 2.0 * theory.scaled(kappa1)),
            },
            "sml_consequence": {"bound": sml_bound, "holds": bool(excess <= sml_bound + slack)},
            "sml_surface": {"value": surface, "violated": bool(excess > surface + slack)},
            "kappa0": kappa0.to_dict(),
            "sparse_approximations": sparse,
            "margin_profile": {"t": thresholds.tolist(), "p_bar": values.tolist()},
        }
        if report["sml_surface"]["violated"]:
            logger.warning(f"excess distortion {excess:.6g} exceeds the SML surface {surface:.6g}")
        return report


def parse_n_list(text: str) -> List[int]:
    try:
        values = [int(part) for part in text.split(",") if part.strip()]
    except ValueError as e:
        raise ValueError(f"n-list must be comma-separated integers, got {text!r}") from e
    if not values or any(v < 1 for v in values):
        raise ValueError(f"n-list needs positive integers, got {text!r}")
    return values
