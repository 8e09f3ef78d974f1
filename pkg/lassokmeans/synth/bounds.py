"""Closed-form bounds for quasi-Gaussian mixtures.

- means risk:   R(m) <= sigma^2 k theta_max d / (1 - eta)
- risk lower:   a codebook with a code point farther than tau B~ from every mean has
                R(c) > (tau^2 B~^2 theta_min / 4) (1 - 2 sigma sqrt(d) / (sqrt(2 pi) tau B~) e^{-tau^2 B~^2 / (4 d sigma^2)})^d
- margin:       p(t) <= t 2 k^2 theta_max M^{d-1} S_{d-1} / ((2 pi)^{d/2} (1 - eta) c_-^d sigma^d)
                        e^{-(1/2 - (2 tau + tau'))^2 B~^2 / (2 sigma^2)}   for t <= tau' B~
"""
import logging
import math
from dataclasses import asdict, dataclass
from typing import Any, Dict

from scipy import special

from lassokmeans.core import InvalidSpecError
from lassokmeans.synth.mixture import MixtureSpec

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class BoundValue:
    value: float
    vacuous: bool = False


@dataclass(frozen=True)
class LocalizationCertificate:
    """Whether the bounds force every optimal codebook near the means, and uniquely so."""
    means_risk: float
    risk_lower: float
    localized: bool
    uniqueness_radius: float
    unique: bool

    @property
    def certified(self) -> bool:
        return self.localized and self.unique

    def to_dict(self) -> Dict[str, Any]:
        data = asdict(self)
        data["certified"] = self.certified
        return data


def _check_eta(eta: float) -> None:
    if not 0 <= eta < 1:
        raise InvalidSpecError(f"eta must lie in [0, 1), got {eta}")


def unit_ball_volume(dim: int) -> float:
    """Lebesgue measure of the unit ball in R^dim."""
    return float(math.pi ** (dim / 2.0) / special.gamma(dim / 2.0 + 1.0))


def bound_means_risk(spec: MixtureSpec, eta: float) -> float:
    _check_eta(eta)
    return spec.sigma2 * spec.k * spec.theta_max * spec.d / (1.0 - eta)


def bound_risk_lower(spec: MixtureSpec, tau: float) -> BoundValue:
    """Lower bound on the risk of codebooks with a code point far from all means; vacuous when <= 0."""
    if not 0 < tau < 0.5:
        raise InvalidSpecError(f"tau must lie in (0, 1/2), got {tau}")
    scale = tau ** 2 * spec.b_tilde ** 2 * spec.theta_min / 4.0
    sigma, d, reach = spec.sigma, spec.d, tau * spec.b_tilde
    tail = 2.0 * sigma * math.sqrt(d) / (math.sqrt(2.0 * math.pi) * reach) \
        * math.exp(-reach ** 2 / (4.0 * d * spec.sigma2))
    base = 1.0 - tail
    value = scale * base ** d
    vacuous = base <= 0 or value <= 0
    if vacuous:
        logger.warning(f"risk lower bound is vacuous (base {base:.4g}) at sigma={sigma:.4g}, tau={tau}")
    return BoundValue(value=value, vacuous=vacuous)


def bound_margin(spec: MixtureSpec, tau: float, tau_prime: float, c_minus: float,
                 eta: float, t: float) -> float:
    """Upper bound on the margin function p(t), evaluated in log space."""
    _check_eta(eta)
    if not (tau > 0 and tau_prime > 0 and 2.0 * tau + tau_prime < 0.5):
        raise InvalidSpecError(f"need tau, tau' > 0 and 2 tau + tau' < 1/2, got tau={tau}, tau'={tau_prime}")
    if not c_minus > 0 or spec.sigma_minus < c_minus * spec.sigma * (1.0 - 1e-12):
        raise InvalidSpecError(f"sigma_- = {spec.sigma_minus:.6g} is below c_- sigma = {c_minus * spec.sigma:.6g}")
    if not 0 <= t <= tau_prime * spec.b_tilde:
        raise InvalidSpecError(f"t must lie in [0, tau' B~ = {tau_prime * spec.b_tilde:.6g}], got {t}")
    if t == 0:
        return 0.0
    d = spec.d
    log_value = (
        math.log(t) + math.log(2.0 * spec.k ** 2 * spec.theta_max)
        + (d - 1) * math.log(spec.radius) + math.log(unit_ball_volume(d - 1))
        - (d / 2.0) * math.log(2.0 * math.pi) - math.log(1.0 - eta)
        - d * math.log(c_minus) - d * math.log(spec.sigma)
        - (0.5 - (2.0 * tau + tau_prime)) ** 2 * spec.b_tilde ** 2 / (2.0 * spec.sigma2)
    )
    return math.exp(log_value)


def localization_certificate(spec: MixtureSpec, tau: float, tau_prime: float, eta: float) -> LocalizationCertificate:
    """Means-risk bound below the risk lower bound localizes optimal codebooks within tau B~ of the means;
    tau' > 8 sqrt(2) M tau / ((1 - 2 tau) B~) with 2 tau + tau' < 1/2 then makes the optimum unique."""
    means_risk = bound_means_risk(spec, eta)
    lower = bound_risk_lower(spec, tau)
    uniqueness_radius = 8.0 * math.sqrt(2.0) * spec.radius * tau / ((1.0 - 2.0 * tau) * spec.b_tilde)
    unique = tau_prime > uniqueness_radius and 2.0 * tau + tau_prime < 0.5
    return LocalizationCertificate(
        means_risk=means_risk,
        risk_lower=lower.value,
        localized=(not lower.vacuous) and means_risk < lower.value,
        uniqueness_radius=uniqueness_radius,
        unique=unique,
    )
