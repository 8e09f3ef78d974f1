import math

import mpmath
import numpy as np
import pytest

from lassokmeans.core import Codebook, InvalidSpecError
from lassokmeans.estimators.quantizer import empirical_risk, squared_distances
from lassokmeans.synth.bounds import (
    bound_margin,
    bound_means_risk,
    bound_risk_lower,
    localization_certificate,
    unit_ball_volume,
)
from lassokmeans.synth.mixture import (
    MixtureSpec,
    component_frequency_test,
    cross_covariance,
    default_spec,
    eta_estimate,
    sample,
    sample_with_labels,
    truncation_mass,
)


def isotropic_spec(means, sigma, radius, weights=None):
    means = np.asarray(means, dtype=np.float64)
    k, d = means.shape
    weights = np.full(k, 1.0 / k) if weights is None else np.asarray(weights)
    return MixtureSpec(weights=weights, means=means,
                       covariances=np.broadcast_to(sigma ** 2 * np.eye(d), (k, d, d)), radius=radius)


def test_spec_rejects_small_radius():
    with pytest.raises(InvalidSpecError, match="radius"):
        isotropic_spec([[-1.0], [1.0]], 0.1, 1.5)


def test_spec_rejects_indefinite_covariance():
    with pytest.raises(InvalidSpecError, match="positive definite"):
        MixtureSpec(weights=np.array([0.5, 0.5]), means=np.array([[-1.0], [1.0]]),
                    covariances=np.array([[[0.0]], [[1.0]]]), radius=4.0)


def test_spec_rejects_repeated_means():
    with pytest.raises(InvalidSpecError, match="distinct"):
        isotropic_spec([[1.0, 0.0], [1.0, 0.0]], 0.1, 4.0)


def test_spec_rejects_bad_weights():
    with pytest.raises(InvalidSpecError):
        isotropic_spec([[-1.0], [1.0]], 0.1, 4.0, weights=[0.7, 0.7])


def test_spec_summaries():
    spec = MixtureSpec(weights=np.array([0.25, 0.75]), means=np.array([[0.0, 2.0, 0.0], [0.0, -1.0, 0.0]]),
                       covariances=np.array([np.diag([1.0, 4.0, 0.25]), np.eye(3)]), radius=5.0)
    assert spec.sigma2 == 4.0
    assert spec.sigma_minus2 == 0.25
    assert spec.b_tilde == 3.0
    assert (spec.theta_min, spec.theta_max) == (0.25, 0.75)
    assert spec.active_set == (1,)
    np.testing.assert_array_equal(spec.bounds, [5.0, 5.0, 5.0])


def test_spec_from_dict_with_sigma():
    spec = MixtureSpec.from_dict({"weights": [0.5, 0.5], "means": [[-1.0, 0.0], [1.0, 0.0]],
                                  "sigma": 0.2, "radius": 3.0})
    np.testing.assert_allclose(spec.covariances[1], 0.04 * np.eye(2))
    assert MixtureSpec.from_dict(spec.to_dict()).radius == 3.0


def test_default_spec_geometry():
    spec = default_spec()
    assert (spec.k, spec.d) == (2, 10)
    assert spec.active_set == (0, 1)
    assert spec.b_tilde == pytest.approx(2.0)
    assert spec.sigma == pytest.approx(0.1)
    assert spec.radius >= 2.0 * np.max(np.linalg.norm(spec.means, axis=1))


def test_default_spec_on_a_line():
    spec = default_spec(k=3, d=4, d_active=1)
    np.testing.assert_allclose(spec.means[:, 0], [-2.0, 0.0, 2.0])
    assert spec.active_set == (0,)


def test_default_spec_validates_active_dimension():
    with pytest.raises(InvalidSpecError):
        default_spec(d=3, d_active=4)


def test_samples_lie_in_ball_and_are_reproducible():
    spec = default_spec(k=3, d=3)
    X = sample(spec, 500, seed=11)
    assert X.n == 500
    assert np.all(np.linalg.norm(X.points, axis=1) <= spec.radius)
    np.testing.assert_array_equal(X.points, sample(spec, 500, seed=11).points)
    assert not np.array_equal(X.points, sample(spec, 500, seed=11, stream=(500, 1)).points)


def test_component_means_are_recovered():
    spec = isotropic_spec([[-1.0], [1.0]], 0.05, 4.0)
    drawn = sample_with_labels(spec, 10_000, seed=5)
    points = drawn.dataset.points[:, 0]
    assert points[drawn.labels == 0].mean() == pytest.approx(-1.0, abs=0.01)
    assert points[drawn.labels == 1].mean() == pytest.approx(1.0, abs=0.01)


def test_default_spec_sampler_fidelity():
    spec = default_spec()
    n = 10_000
    drawn = sample_with_labels(spec, n, seed=2)
    X = drawn.dataset
    assert np.all(np.linalg.norm(X.points, axis=1) <= spec.radius)
    assert component_frequency_test(drawn.labels, spec.weights) > 1e-3
    frequencies = np.bincount(drawn.labels, minlength=spec.k) / n
    envelope = 4.0 * np.sqrt(spec.weights * (1.0 - spec.weights) / n)
    assert np.all(np.abs(frequencies - spec.weights) <= envelope)
    assert np.all(np.abs(cross_covariance(X, active=spec.active_set)) <= 4.0 / math.sqrt(n))


def test_component_frequencies_match_unequal_weights():
    spec = isotropic_spec([[-1.0, 0.0], [1.0, 0.0], [0.0, 2.0]], 1e-3, 5.0, weights=[0.2, 0.3, 0.5])
    drawn = sample_with_labels(spec, 5000, seed=2)
    assert component_frequency_test(drawn.labels, spec.weights) > 1e-3
    frequencies = np.bincount(drawn.labels, minlength=3) / 5000
    envelope = 4.0 * np.sqrt(spec.weights * (1.0 - spec.weights) / 5000)
    assert np.all(np.abs(frequencies - spec.weights) <= envelope)


def test_sampler_rejects_hopeless_truncation():
    spec = isotropic_spec([[0.0] * 8, [0.1] + [0.0] * 7], 10.0, 0.5)
    with pytest.raises(InvalidSpecError, match="acceptance"):
        sample(spec, 10, seed=0)


def test_truncation_mass_of_wide_ball():
    spec = isotropic_spec([[0.0, 0.0], [0.5, 0.0]], 0.1, 1.0)
    mass = truncation_mass(spec, 0, mc_samples=20_000, seed=4)
    assert mass.value == pytest.approx(1.0, abs=1e-3)
    assert mass == truncation_mass(spec, 0, mc_samples=20_000, seed=4)
    assert eta_estimate(spec, 20_000, seed=4) < 1e-3


def test_truncation_mass_needs_enough_samples():
    with pytest.raises(ValueError):
        truncation_mass(default_spec(), 0, mc_samples=10)


def test_active_and_inactive_blocks_are_uncorrelated():
    X = sample(default_spec(), 2000, seed=8)
    block = cross_covariance(X, active=(0, 1))
    assert block.shape == (2, 8)
    assert np.all(np.abs(block) <= 4.0 / math.sqrt(2000))


def test_unit_ball_volume():
    assert unit_ball_volume(1) == pytest.approx(2.0)
    assert unit_ball_volume(2) == pytest.approx(math.pi)
    assert unit_ball_volume(3) == pytest.approx(4.0 * math.pi / 3.0)


def test_means_risk_worked_value():
    spec = isotropic_spec([[1.0, 0.0, 0.0, 0.0], [-1.0, 0.0, 0.0, 0.0]], 0.1, 4.0)
    assert bound_means_risk(spec, 0.01) == pytest.approx(0.04 / 0.99, rel=1e-12)


@pytest.mark.parametrize("seed, spec", [
    (1, default_spec(k=2, d=4)),
    (2, default_spec()),
    (3, default_spec(k=3, d=6, sigma_ratio=0.1)),
    (4, default_spec(k=4, d=3, d_active=1, sigma_ratio=0.2)),
    (5, isotropic_spec([[-1.0, 0.5], [1.0, 0.0]], 0.4, 2.5)),
])
def test_means_risk_covers_sampled_risk(seed, spec):
    n = 100_000
    eta = eta_estimate(spec, n, seed=seed)
    X = sample(spec, n, seed=seed, stream=(1,))
    distortion = squared_distances(X.points, spec.means).min(axis=1)
    stderr = distortion.std(ddof=1) / math.sqrt(n)
    assert distortion.mean() == pytest.approx(empirical_risk(Codebook(spec.means), X), rel=1e-12)
    assert distortion.mean() <= bound_means_risk(spec, eta) + 3.0 * stderr


def test_risk_lower_small_sigma_limit():
    spec = isotropic_spec([[-1.0, 0.0], [1.0, 0.0]], 1e-4, 4.0)
    lower = bound_risk_lower(spec, 0.25)
    assert not lower.vacuous
    assert lower.value == pytest.approx(0.25 ** 2 * 4.0 * 0.5 / 4.0, rel=1e-12)


def test_risk_lower_matches_high_precision():
    spec = isotropic_spec([[-1.0, 0.0], [1.0, 0.0]], 0.05, 4.0)
    mpmath.mp.dps = 50
    tau, b, theta, sigma, d = mpmath.mpf("0.25"), 2, mpmath.mpf("0.5"), mpmath.mpf("0.05"), 2
    reach = tau * b
    tail = 2 * sigma * mpmath.sqrt(d) / (mpmath.sqrt(2 * mpmath.pi) * reach) \
        * mpmath.exp(-reach ** 2 / (4 * d * sigma ** 2))
    expected = tau ** 2 * b ** 2 * theta / 4 * (1 - tail) ** d
    assert bound_risk_lower(spec, 0.25).value == pytest.approx(float(expected), rel=1e-12)


def test_risk_lower_flags_vacuous_regime():
    spec = isotropic_spec([[-1.0, 0.0], [1.0, 0.0]], 2.0, 4.0)
    assert bound_risk_lower(spec, 0.25).vacuous


def test_margin_bound_is_linear_in_t():
    spec = isotropic_spec([[-1.0, 0.0], [1.0, 0.0]], 0.2, 4.0)
    assert bound_margin(spec, 0.1, 0.2, 1.0, 0.0, 0.0) == 0.0
    once = bound_margin(spec, 0.1, 0.2, 1.0, 0.0, 0.1)
    assert once > 0
    assert bound_margin(spec, 0.1, 0.2, 1.0, 0.0, 0.2) == pytest.approx(2.0 * once, rel=1e-12)


def test_margin_bound_vanishes_with_sigma():
    wide = isotropic_spec([[-1.0, 0.0], [1.0, 0.0]], 0.2, 4.0)
    narrow = isotropic_spec([[-1.0, 0.0], [1.0, 0.0]], 0.005, 4.0)
    assert bound_margin(narrow, 0.1, 0.2, 1.0, 0.0, 0.1) < 1e-100 < bound_margin(wide, 0.1, 0.2, 1.0, 0.0, 0.1)


def test_margin_bound_two_dimensional_value():
    spec = isotropic_spec([[-1.0, 0.0], [1.0, 0.0]], 0.2, 4.0)
    t, tau, tau_prime = 0.1, 0.1, 0.2
    expected = (t * 2 * 4 * 0.5 * 4.0 * 2.0 / (2 * math.pi * 0.04)
                * math.exp(-(0.5 - (2 * tau + tau_prime)) ** 2 * 4.0 / (2 * 0.04)))
    assert bound_margin(spec, tau, tau_prime, 1.0, 0.0, t) == pytest.approx(expected, rel=1e-12)


@pytest.mark.parametrize("tau, tau_prime, t", [(0.2, 0.2, 0.1), (0.1, 0.2, 1.0)])
def test_margin_bound_preconditions(tau, tau_prime, t):
    spec = isotropic_spec([[-1.0, 0.0], [1.0, 0.0]], 0.2, 4.0)
    with pytest.raises(InvalidSpecError):
        bound_margin(spec, tau, tau_prime, 1.0, 0.0, t)


def test_localization_certificate_for_separated_mixture():
    spec = isotropic_spec([[-1.0, 0.0], [1.0, 0.0]], 1e-3, 2.0)
    certificate = localization_certificate(spec, 0.01, 0.2, 0.0)
    assert certificate.localized
    assert certificate.unique
    assert certificate.certified
    assert certificate.to_dict()["certified"]


def test_localization_fails_for_noisy_mixture():
    certificate = localization_certificate(default_spec(), 0.1, 0.2, 0.0)
    assert not certificate.certified
