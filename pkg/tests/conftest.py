import numpy as np
import pytest

from fairdp.dataset import EncodedDataset


def random_unit_rows(rng, n, d):
    """Nonnegative rows with L2 norm <= 1 (the domain every bound assumes)."""
    X = rng.random((n, d))
    norms = np.linalg.norm(X, axis=1)
    scale = rng.uniform(0.05, 1.0, size=n) / np.maximum(norms, 1e-12)
    return X * np.minimum(scale, 1.0 / np.maximum(norms, 1e-12))[:, None]


def random_dataset(rng, n, d):
    return EncodedDataset(
        X=random_unit_rows(rng, n, d),
        y=rng.integers(0, 2, size=n),
        z=rng.integers(0, 2, size=n),
        feature_names=tuple(f"f{i}" for i in range(d)),
    )


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def tiny_ds():
    """Handmade 4-row dataset, d=2, both protected groups present."""
    X = np.array([[0.6, 0.3], [0.1, 0.8], [0.5, 0.5], [0.2, 0.1]])
    return EncodedDataset(
        X=X, y=[1, 0, 1, 0], z=[1, 0, 0, 1], feature_names=("a", "b")
    )


@pytest.fixture
def conditioned_ds():
    """Well-spread 200-row dataset whose clean quadratic has its smallest
    eigenvalue comfortably above the default spectral floor, so tiny noise
    perturbs the minimizer only tinily."""
    gen = np.random.default_rng(7)
    X = random_unit_rows(gen, 200, 3)
    y = gen.integers(0, 2, size=200)
    z = gen.integers(0, 2, size=200)
    ds = EncodedDataset(X=X, y=y, z=z, feature_names=("a", "b", "c"))
    gram_min_eig = np.linalg.eigvalsh(X.T @ X / 8.0)[0]
    assert gram_min_eig > 0.05  # guards the fixture's purpose
    return ds
