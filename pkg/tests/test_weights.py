import math

import mpmath
import numpy as np
import pytest

from lassokmeans.core import Codebook, Dataset, DegenerateWeightsError, DiscreteDistribution, WeightVector
from lassokmeans.estimators.weights import (
    lambda_formula,
    lambda_theory,
    limit_threshold_weights,
    normalized_weights,
    penalty,
    plain_weights,
    sparsity_norm_sq,
    threshold_weights,
)


def reference_lambdas(k, d, n, t_value, norm_sq, x):
    mpmath.mp.dps = 50
    log_kd = mpmath.log(k * d)
    lambda0 = 16 * mpmath.sqrt(2 * mpmath.pi) * mpmath.sqrt(k * log_kd / n) * t_value
    u = mpmath.log(norm_sq * mpmath.sqrt(n) / mpmath.sqrt(log_kd))
    lambda1 = mpmath.e * lambda0 * (1 + mpmath.sqrt((u + x) / (k * log_kd)))
    return float(lambda0), float(u), float(lambda1)


def test_plain_weights():
    w = plain_weights(3, bounds=np.array([1.0, 4.0, 2.0]))
    np.testing.assert_array_equal(w.w, [1.0, 1.0, 1.0])
    assert w.t_value() == 4.0
    c = Codebook(np.array([[3.0, 0.0, 1.0], [4.0, 0.0, 0.0]]))
    assert penalty(c, w) == pytest.approx(6.0)


def test_penalty_three_four_five():
    c = Codebook(np.array([[3.0], [4.0]]))
    assert penalty(c, plain_weights(1)) == 5.0
    assert penalty(Codebook.zeros(2, 1), plain_weights(1)) == 0.0


def test_penalty_counts_unit_blocks():
    c = Codebook(np.array([[1.0, 0.0, 0.0, 0.0], [0.0, 0.0, 1.0, 0.0]]))
    assert penalty(c, plain_weights(4)) == 2.0


def test_normalized_weights_are_uncentered():
    X = Dataset.from_points([[2.0, -1.0], [2.0, 1.0]])
    np.testing.assert_allclose(normalized_weights(X).w, [2.0, 1.0])


def test_normalized_weights_scale_with_data(gaussian_dataset):
    scaled = Dataset.from_points(3.0 * gaussian_dataset.points)
    np.testing.assert_allclose(normalized_weights(scaled).w, 3.0 * normalized_weights(gaussian_dataset).w)


def test_normalized_weights_on_distribution():
    P = DiscreteDistribution.from_atoms([[1.0], [3.0]], masses=[0.5, 0.5])
    assert normalized_weights(P).w[0] == pytest.approx(math.sqrt(5.0))


def test_normalized_weights_reject_zero_coordinate():
    X = Dataset.from_points([[0.0, 1.0], [0.0, 2.0]])
    with pytest.raises(DegenerateWeightsError, match="remove"):
        normalized_weights(X)


def test_threshold_weights():
    X = Dataset.from_points([[2.0, 0.0], [-2.0, 0.0]])
    kmeans_cb = Codebook(np.array([[2.0, 0.0], [0.0, 0.0]]))
    w = threshold_weights(X, 0.1, kmeans_cb)
    np.testing.assert_allclose(w.w, [0.5, 10.0])
    assert w.scheme == "threshold"
    assert w.tag == "threshold(0.1)"


def test_limit_threshold_weights_large_delta_is_uniform(horizontal_split):
    w = limit_threshold_weights(horizontal_split, 1e6, np.ones(2))
    np.testing.assert_allclose(w.w, 1e-6)


def test_threshold_weights_reject_nonpositive_delta(square_dataset, horizontal_split):
    with pytest.raises(ValueError):
        threshold_weights(square_dataset, 0.0, horizontal_split)


def test_penalty_is_a_norm(rng):
    w = WeightVector(w=rng.uniform(0.5, 2.0, size=4))
    for _ in range(20):
        a = Codebook(rng.standard_normal((3, 4)))
        b = Codebook(rng.standard_normal((3, 4)))
        t = rng.uniform(-3.0, 3.0)
        assert penalty(Codebook(t * a.codepoints), w) == pytest.approx(abs(t) * penalty(a, w))
        assert penalty(Codebook(a.codepoints + b.codepoints), w) <= penalty(a, w) + penalty(b, w) + 1e-12
        assert penalty(a, w) > 0


def test_penalty_bounded_by_m_bar(rng):
    bounds = np.array([1.0, 2.0, 0.5])
    w = WeightVector(w=np.array([0.3, 1.0, 2.0]), bounds=bounds)
    for _ in range(50):
        c = Codebook(rng.uniform(-bounds, bounds, size=(4, 3)))
        assert penalty(c, w) <= w.m_bar(4)


def test_sparsity_norm_sq():
    w = WeightVector(w=np.array([1.0, 2.0, 3.0]))
    assert sparsity_norm_sq(w, (0, 2)) == 10.0
    assert sparsity_norm_sq(w, ()) == 0.0


def test_lambda0_worked_value():
    theory = lambda_formula(k=2, d=2, n=1024, t_value=1.0, norm_sq=2.0, x=1.0)
    assert theory.lambda0 == pytest.approx(2.0869, abs=1e-4)
    assert theory.lambda1 >= math.e * theory.lambda0


def test_lambda_formula_matches_high_precision(rng):
    for _ in range(100):
        k = int(rng.integers(1, 6))
        d = int(rng.integers(2, 50))
        n = int(rng.integers(16, 100_000))
        t_value = float(rng.uniform(0.1, 10.0))
        norm_sq = float(rng.uniform(1.0, 100.0))
        x = float(rng.uniform(0.01, 20.0))
        theory = lambda_formula(k, d, n, t_value, norm_sq, x)
        lambda0, u, lambda1 = reference_lambdas(k, d, n, t_value, norm_sq, x)
        assert theory.lambda0 == pytest.approx(lambda0, rel=1e-12)
        assert theory.u == pytest.approx(u, rel=1e-12)
        assert theory.lambda1 == pytest.approx(lambda1, rel=1e-12)


def test_lambda0_halves_when_n_quadruples():
    small = lambda_formula(3, 5, 1000, 1.0, 5.0, 1.0)
    large = lambda_formula(3, 5, 4000, 1.0, 5.0, 1.0)
    assert large.lambda0 == pytest.approx(small.lambda0 / 2.0, rel=1e-12)


def test_lambda1_tends_to_e_lambda0():
    k, d, n = 2, 3, 400
    norm_sq = math.sqrt(math.log(k * d)) / math.sqrt(n)
    theory = lambda_formula(k, d, n, 1.0, norm_sq, 1e-14)
    assert theory.lambda1 == pytest.approx(math.e * theory.lambda0, rel=1e-5)


def test_nonpositive_u_is_flagged(caplog):
    theory = lambda_formula(2, 2, 100, 1.0, 1e-3, 0.5)
    assert theory.u_nonpositive
    assert "u =" in caplog.text
    assert theory.lambda1 >= math.e * theory.lambda0


def test_lambda_theory_uses_weight_bounds():
    w = plain_weights(2, bounds=np.array([3.0, 1.0]))
    theory = lambda_theory(2, 2, 1024, w, 1.0)
    assert theory.lambda0 == pytest.approx(3.0 * lambda_formula(2, 2, 1024, 1.0, 2.0, 1.0).lambda0)
    assert theory.scaled(0.5) == pytest.approx(2.0 * theory.lambda1)
