"""Command-line harness: data generation, fits, screening, paths and the experiment checks.

Every command is deterministic given its seed options. JSON reports carry a
`config` block; CSV reports get a `<name>.config.json` sidecar.
Exit codes: 0 success, 2 usage or input error, 3 enumeration budget exceeded.
"""
import functools
import logging
from pathlib import Path
from typing import Any, Dict, Optional

import click
import pandas as pd

from lassokmeans.config import (
    BOUND_COLUMNS,
    CLI_DEFAULTS,
    EMPTY_CELL_POLICIES,
    LOG_FORMAT,
    THREADS_ENV_VAR,
    SolverConfig,
)
from lassokmeans.core import BudgetExceededError, LassoKMeansError
from lassokmeans.estimators.solver import fit, lambda_grid, reg_path, screening_table
from lassokmeans.synth.bounds import bound_margin, bound_means_risk, bound_risk_lower, localization_certificate
from lassokmeans.synth.mixture import default_spec, eta_estimate, sample
from lassokmeans.cli.services import (
    FitService,
    OracleCheckService,
    RecoveryService,
    ReportService,
    WeightService,
    parse_n_list,
)
from lassokmeans.utils.data_loader import (
    file_sha256,
    load_dataset,
    load_input,
    load_mixture_spec,
    save_dataset_csv,
    save_frame,
    save_json,
    save_trace_csv,
)

logger = logging.getLogger(__name__)


class BudgetExceeded(click.ClickException):
    exit_code = 3


def handle_errors(func):
    """Map domain errors onto the documented exit codes."""
    @functools.wraps(func)
    def wrapper(*args, **kwargs):
        try:
            return func(*args, **kwargs)
        except BudgetExceededError as e:
            logger.error(f"{func.__name__}: {e}")
            raise BudgetExceeded(str(e)) from e
        except (LassoKMeansError, ValueError) as e:
            logger.error(f"{func.__name__}: {e}")
            raise click.UsageError(str(e)) from e
    return wrapper


def solver_options(func):
    """Solver flags shared by the fitting commands; a TOML `[solver]` table supplies the base values."""
    options = [
        click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False, path_type=Path),
                     help="TOML file with a [solver] table."),
        click.option("--restarts", type=click.IntRange(min=1), help="k-means++ restarts."),
        click.option("--max-iter", type=click.IntRange(min=1), help="Iterations per restart."),
        click.option("--tol", type=float, help="Relative objective tolerance."),
        click.option("--seed", type=int, help="Master seed."),
        click.option("--empty-cell-policy", type=click.Choice(EMPTY_CELL_POLICIES)),
    ]
    for option in reversed(options):
        func = option(func)
    return func


def build_solver_config(ctx: click.Context, config_path: Optional[Path], **overrides: Any) -> SolverConfig:
    overrides["threads"] = ctx.obj.get("threads")
    if config_path is not None:
        return SolverConfig.from_toml(config_path, **overrides)
    return SolverConfig().with_overrides(**overrides)


def _sidecar(path: Path) -> Path:
    return path.with_suffix(".config.json")


@click.group()
@click.option("--log-level", default="WARNING", show_default=True,
              type=click.Choice(["DEBUG", "INFO", "WARNING", "ERROR"], case_sensitive=False))
@click.option("--threads", type=click.IntRange(min=1), envvar=THREADS_ENV_VAR,
              help=f"Worker threads (default: ${THREADS_ENV_VAR} or 1).")
@click.pass_context
def cli(ctx: click.Context, log_level: str, threads: Optional[int]):
    """Weighted-Lasso k-means: fits, oracles and experiments."""
    logging.basicConfig(level=getattr(logging, log_level.upper()), format=LOG_FORMAT)
    ctx.ensure_object(dict)
    ctx.obj["threads"] = threads


@cli.command()
@click.option("--spec", "spec_path", type=click.Path(exists=True, dir_okay=False, path_type=Path),
              help="MixtureSpec JSON; the default mixture when omitted.")
@click.option("--n", type=click.IntRange(min=1), required=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", type=click.Path(dir_okay=False, path_type=Path), required=True)
@handle_errors
def generate(spec_path: Optional[Path], n: int, seed: int, out: Path):
    """Sample a dataset from a mixture; writes CSV plus a .spec.json sidecar."""
    spec = load_mixture_spec(spec_path) if spec_path else default_spec()
    X = sample(spec, n, seed)
    save_dataset_csv(X, out)
    inputs = {str(spec_path): file_sha256(spec_path)} if spec_path else {}
    save_json({
        "spec": spec.to_dict(),
        "n": n,
        "seed": seed,
        "stream": [],
        "config": ReportService.config_block("generate", {"n": n, "seed": seed}, inputs),
    }, out.with_suffix(".spec.json"))


@cli.command(name="fit")
@click.argument("data", type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.option("--k", type=click.IntRange(min=1), required=True)
@click.option("--lambda", "lam", type=click.FloatRange(min=0), help="Regularization level.")
@click.option("--lambda-theory", is_flag=True, help="Use lambda1(x) / (1 - kappa1).")
@click.option("--confidence", type=click.FloatRange(min=0, min_open=True), help="x in lambda1(x); default log n.")
@click.option("--kappa1", type=click.FloatRange(0, 1, max_open=True), default=CLI_DEFAULTS["kappa1"], show_default=True)
@click.option("--weights", "scheme", default="plain", show_default=True, help="plain | normalized | threshold:<delta>")
@click.option("--out", type=click.Path(dir_okay=False, path_type=Path), required=True)
@click.option("--trace", "trace_path", type=click.Path(dir_okay=False, path_type=Path), help="Objective trace CSV.")
@solver_options
@click.pass_context
@handle_errors
def fit_command(ctx, data, k, lam, lambda_theory, confidence, kappa1, scheme, out, trace_path, config_path, **solver):
    """Fit the Lasso k-means codebook and write the FitResult JSON."""
    if (lam is None) == (not lambda_theory):
        raise click.UsageError("give exactly one of --lambda or --lambda-theory")
    cfg = build_solver_config(ctx, config_path, **solver)
    X = load_dataset(data)
    w = WeightService.resolve(scheme, X, k, cfg)
    theory = None
    if lambda_theory:
        lam, theory = FitService.theory_lambda(X, k, w, confidence, kappa1)
    result = fit(X, k, lam, w, cfg)
    save_json({
        "result": result.to_dict(),
        "lambda": lam,
        "weights": w.to_dict(),
        "lambda_theory": theory.to_dict() if theory else None,
        "config": ReportService.config_block(
            "fit", {"k": k, "weights": scheme, "kappa1": kappa1, "confidence": confidence, **cfg.to_dict()},
            {str(data): file_sha256(data)}),
    }, out)
    if trace_path:
        save_trace_csv(result.trace, trace_path)
    click.echo(f"objective={result.objective:.10g} active_set={list(result.active_set)}")


@cli.command()
@click.argument("data", type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.option("--k", type=click.IntRange(min=1), required=True)
@click.option("--lambda", "lam", type=click.FloatRange(min=0), required=True)
@click.option("--weights", "scheme", default="plain", show_default=True)
@click.option("--out", type=click.Path(dir_okay=False, path_type=Path), required=True)
@solver_options
@click.pass_context
@handle_errors
def screen(ctx, data, k, lam, scheme, out, config_path, **solver):
    """Per-coordinate screening report: sigma2_p, Rhat_p and the test margin."""
    cfg = build_solver_config(ctx, config_path, **solver)
    X = load_dataset(data)
    w = WeightService.resolve(scheme, X, k, cfg)
    table = screening_table(X, k, lam, w)
    save_frame(table, out)
    save_json({"config": ReportService.config_block(
        "screen", {"k": k, "lambda": lam, "weights": scheme}, {str(data): file_sha256(data)})}, _sidecar(out))
    click.echo(f"screened={table.loc[table['screened'], 'coordinate'].tolist()}")


@cli.command()
@click.argument("data", type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.option("--k", type=click.IntRange(min=1), required=True)
@click.option("--weights", "scheme", default="plain", show_default=True)
@click.option("--num-lambdas", type=click.IntRange(min=1), default=CLI_DEFAULTS["num_lambdas"], show_default=True)
@click.option("--lambda-ratio", type=click.FloatRange(0, 1, min_open=True, max_open=True),
              default=CLI_DEFAULTS["lambda_ratio"], show_default=True)
@click.option("--include-zero", is_flag=True, help="Append lambda = 0 to the grid.")
@click.option("--out", type=click.Path(dir_okay=False, path_type=Path), required=True)
@click.option("--json", "json_path", type=click.Path(dir_okay=False, path_type=Path), help="Full PathResult JSON.")
@solver_options
@click.pass_context
@handle_errors
def path(ctx, data, k, scheme, num_lambdas, lambda_ratio, include_zero, out, json_path, config_path, **solver):
    """Warm-started regularization path; one CSV row per lambda."""
    cfg = build_solver_config(ctx, config_path, **solver)
    X = load_dataset(data)
    w = WeightService.resolve(scheme, X, k, cfg)
    grid = lambda_grid(X, w, num_lambdas, lambda_ratio, include_zero)
    result = reg_path(X, k, grid, w, cfg)
    save_frame(result.to_frame(), out)
    config = ReportService.config_block(
        "path", {"k": k, "weights": scheme, "num_lambdas": num_lambdas, "lambda_ratio": lambda_ratio,
                 "include_zero": include_zero, **cfg.to_dict()}, {str(data): file_sha256(data)})
    save_json({"config": config}, _sidecar(out))
    if json_path:
        save_json({**result.to_dict(), "config": config}, json_path)


@cli.command(name="mc-recovery")
@click.option("--spec", "spec_path", type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.option("--alpha", type=float, default=CLI_DEFAULTS["alpha"], show_default=True)
@click.option("--n-list", default=",".join(str(n) for n in CLI_DEFAULTS["n_list"]), show_default=True)
@click.option("--replicates", type=click.IntRange(min=1), default=CLI_DEFAULTS["replicates"], show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--lambda-scale", type=click.FloatRange(min=0, min_open=True),
              default=CLI_DEFAULTS["lambda_scale"], show_default=True)
@click.option("--k", type=click.IntRange(min=1), help="Clusters; defaults to the number of components.")
@click.option("--reference-n", type=click.IntRange(min=1), default=CLI_DEFAULTS["reference_n"], show_default=True)
@click.option("--evaluation-n", type=click.IntRange(min=1), default=CLI_DEFAULTS["evaluation_n"], show_default=True)
@click.option("--restarts", type=click.IntRange(min=1), help="k-means++ restarts per fit.")
@click.option("--out", type=click.Path(dir_okay=False, path_type=Path), required=True)
@click.pass_context
@handle_errors
def mc_recovery(ctx, spec_path, alpha, n_list, replicates, seed, lambda_scale, k, reference_n,
                evaluation_n, restarts, out):
    """Support-recovery Monte Carlo for the threshold Lasso with lambda ~ n^-alpha."""
    if not 0 < alpha < 0.5:
        raise click.BadParameter(f"alpha must lie in (0, 1/2), got {alpha}", param_hint="--alpha")
    spec = load_mixture_spec(spec_path) if spec_path else default_spec()
    cfg = SolverConfig().with_overrides(restarts=restarts)
    report = RecoveryService.run(
        spec, alpha, parse_n_list(n_list), replicates, seed, lambda_scale, k, cfg,
        reference_n, evaluation_n, ctx.obj.get("threads"))
    save_frame(report, out)
    inputs = {str(spec_path): file_sha256(spec_path)} if spec_path else {}
    save_json({"spec": spec.to_dict(), "config": ReportService.config_block(
        "mc-recovery", {"alpha": alpha, "n_list": n_list, "replicates": replicates, "seed": seed,
                        "lambda_scale": lambda_scale, "k": k, "reference_n": reference_n,
                        "evaluation_n": evaluation_n, **cfg.to_dict()}, inputs)}, _sidecar(out))


@cli.command(name="oracle-check")
@click.argument("data", type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.option("--k", type=click.IntRange(min=1), required=True)
@click.option("--lambda", "lam", type=click.FloatRange(min=0), required=True)
@click.option("--weights", "scheme", default="plain", show_default=True)
@click.option("--kappa0-samples", type=click.IntRange(min=1), default=CLI_DEFAULTS["kappa0_samples"], show_default=True)
@click.option("--kappa1", type=click.FloatRange(0, 1, max_open=True), default=CLI_DEFAULTS["kappa1"], show_default=True)
@click.option("--confidence", type=click.FloatRange(min=0, min_open=True))
@click.option("--out", type=click.Path(dir_okay=False, path_type=Path), required=True)
@solver_options
@click.pass_context
@handle_errors
def oracle_check(ctx, data, k, lam, scheme, kappa0_samples, kappa1, confidence, out, config_path, **solver):
    """Solver against enumeration: objective gap, screening soundness and theory surfaces."""
    cfg = build_solver_config(ctx, config_path, **solver)
    X = load_input(data)
    w = WeightService.resolve(scheme, X, k, cfg)
    report = OracleCheckService.run(X, k, lam, w, kappa0_samples, cfg.seed, cfg, kappa1, confidence)
    report["config"] = ReportService.config_block(
        "oracle-check", {"k": k, "lambda": lam, "weights": scheme, "kappa0_samples": kappa0_samples,
                         "kappa1": kappa1, "confidence": confidence, **cfg.to_dict()},
        {str(data): file_sha256(data)})
    save_json(report, out)
    click.echo(f"objective_gap={report['objective_gap']:.3g} screening_sound={report['screening_sound']}")


@cli.command()
@click.option("--spec", "spec_path", type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.option("--tau", type=float, default=0.1, show_default=True)
@click.option("--tau-prime", type=float, default=0.2, show_default=True)
@click.option("--c-minus", type=float, default=1.0, show_default=True)
@click.option("--eta", type=click.FloatRange(0, 1, max_open=True), help="Truncation defect; estimated when omitted.")
@click.option("--mc-samples", type=click.IntRange(min=1000), default=CLI_DEFAULTS["mc_samples"], show_default=True)
@click.option("--t", "t_value", type=click.FloatRange(min=0), help="Margin radius; defaults to tau' B~.")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", type=click.Path(dir_okay=False, path_type=Path), required=True)
@handle_errors
def bounds(spec_path, tau, tau_prime, c_minus, eta, mc_samples, t_value, seed, out):
    """Evaluate the mixture bounds and the localization certificate."""
    spec = load_mixture_spec(spec_path) if spec_path else default_spec()
    if eta is None:
        eta = eta_estimate(spec, mc_samples, seed)
    t_value = tau_prime * spec.b_tilde if t_value is None else t_value
    lower = bound_risk_lower(spec, tau)
    certificate = localization_certificate(spec, tau, tau_prime, eta)
    rows = [
        {"name": "eta", "value": eta, "vacuous": False},
        {"name": "means_risk", "value": bound_means_risk(spec, eta), "vacuous": False},
        {"name": "risk_lower", "value": lower.value, "vacuous": lower.vacuous},
        {"name": "margin", "value": bound_margin(spec, tau, tau_prime, c_minus, eta, t_value), "vacuous": False},
        {"name": "uniqueness_radius", "value": certificate.uniqueness_radius, "vacuous": False},
        {"name": "localization_certified", "value": float(certificate.certified), "vacuous": False},
    ]
    save_frame(pd.DataFrame(rows, columns=BOUND_COLUMNS), out)
    inputs = {str(spec_path): file_sha256(spec_path)} if spec_path else {}
    params: Dict[str, Any] = {"tau": tau, "tau_prime": tau_prime, "c_minus": c_minus, "eta": eta,
                              "mc_samples": mc_samples, "t": t_value, "seed": seed}
    save_json({"certificate": certificate.to_dict(),
               "config": ReportService.config_block("bounds", params, inputs)}, _sidecar(out))


def main():
    cli(obj={})
