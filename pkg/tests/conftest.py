import numpy as np
import pytest

from cgmix import Dataset


def random_mixture_dataset(rng, n=60, q=2, p=2, G=2, missing=0.3):
    """Small mixture-of-regressions dataset with mixed missingness."""
    x = rng.standard_normal((n, q))
    z = rng.integers(0, G, size=n)
    y = np.empty((n, p))
    for g in range(G):
        B = rng.standard_normal((q + 1, p)) + 3.0 * g
        rows = z == g
        xa = np.hstack([np.ones((rows.sum(), 1)), x[rows]])
        y[rows] = xa @ B + 0.5 * rng.standard_normal((rows.sum(), p))
    delta = (rng.random((n, p)) > missing).astype(int)
    # keep at least one fully observed row so every column has data
    delta[0] = 1
    for j in range(p):
        if delta[:, j].sum() < 3:
            delta[rng.choice(n, 3, replace=False), j] = 1
    y = np.where(delta.astype(bool), y, np.nan)
    return Dataset(x, y, delta)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
