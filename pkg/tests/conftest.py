import numpy as np
import pytest

from lassokmeans.core import Codebook, Dataset, DiscreteDistribution


@pytest.fixture
def square_points():
    """The four corners (+-1, +-1)."""
    return np.array([[1.0, 1.0], [-1.0, 1.0], [-1.0, -1.0], [1.0, -1.0]])


@pytest.fixture
def square_dataset(square_points):
    return Dataset.from_points(square_points)


@pytest.fixture
def square_distribution(square_points):
    return DiscreteDistribution.from_atoms(square_points)


@pytest.fixture
def horizontal_split():
    return Codebook(np.array([[-1.0, 0.0], [1.0, 0.0]]))


@pytest.fixture
def vertical_split():
    return Codebook(np.array([[0.0, -1.0], [0.0, 1.0]]))


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def gaussian_dataset(rng):
    """200 points in R^3 with two clusters on the first coordinate."""
    centers = np.array([[-2.0, 0.0, 0.0], [2.0, 0.0, 0.0]])
    labels = rng.integers(0, 2, size=200)
    return Dataset.from_points(centers[labels] + 0.3 * rng.standard_normal((200, 3)))
