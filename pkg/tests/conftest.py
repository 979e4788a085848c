import numpy as np
import pytest
from hypothesis import settings

from fedcausal.model import ClientDataset, sigmoid

settings.register_profile("default", max_examples=50, deadline=None)
settings.load_profile("default")


def random_spd(rng, d, lo=0.5, hi=3.0):
    q, _ = np.linalg.qr(rng.standard_normal((d, d)))
    return q @ np.diag(rng.uniform(lo, hi, d)) @ q.T


def logistic_data(rng, n, theta):
    theta = np.asarray(theta, dtype=float)
    x = rng.standard_normal((n, theta.size))
    w = (rng.random(n) < sigmoid(x @ theta)).astype(np.int8)
    return ClientDataset(x, w, x.sum(axis=1) + rng.standard_normal(n))


def grid_map(data, prior_precision=0.0, lo=-3, hi=3, step=0.01):
    g = np.arange(lo, hi + step / 2, step)
    a, b = np.meshgrid(g, g, indexing="ij")
    thetas = np.column_stack([a.ravel(), b.ravel()])
    z = data.x @ thetas.T
    ll = (data.w[:, None] * z - np.logaddexp(0, z)).sum(axis=0)
    ll -= 0.5 * prior_precision * (thetas**2).sum(axis=1)
    return thetas[np.argmax(ll)]


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
