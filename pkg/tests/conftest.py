"""Shared builders for the test suite."""

import numpy as np
import pytest

from cwm.classifier import MlpClassifier, make_constant_classifier
from cwm.components import DiagGaussianComponent
from cwm.gmm import Gmm
from cwm.model import CwmModel
from cwm.rng import RngHandle


def random_components(d, K, rng, spread=2.0, log_var_scale=0.3):
    comps = []
    for _ in range(K):
        mu = rng.normal(d) * spread
        log_var = rng.normal(d) * log_var_scale
        comps.append(DiagGaussianComponent(mu, log_var))
    return comps


def random_classifier(d, K, hidden, rng, weight_scale=0.5):
    sizes = [d, *hidden, K]
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        bound = np.sqrt(6.0 / (fan_in + fan_out))
        weights.append((rng.uniform((fan_in, fan_out)) * 2.0 - 1.0) * bound * weight_scale)
        biases.append(rng.normal(fan_out) * 0.1)
    return MlpClassifier(weights, biases)


def random_model(d, K, hidden=(8,), seed=0, spread=2.0):
    rng = RngHandle(seed)
    comps = random_components(d, K, rng, spread=spread)
    clf = random_classifier(d, K, hidden, rng)
    return CwmModel(comps, clf)


def random_simplex(K, rng):
    raw = rng.uniform(K) + 0.1
    return raw / raw.sum()


def random_gmm(d, K, seed=0, spread=2.0):
    rng = RngHandle(seed)
    comps = random_components(d, K, rng, spread=spread)
    pis = random_simplex(K, rng)
    return Gmm(pis, comps)


def constant_model(d, K, pis=None, hidden=(8,), seed=0, spread=2.0):
    """CWM whose classifier outputs fixed weights, plus the matching Gmm."""
    rng = RngHandle(seed)
    comps = random_components(d, K, rng, spread=spread)
    if pis is None:
        pis = random_simplex(K, rng)
    pis = np.asarray(pis, dtype=np.float64)
    clf = make_constant_classifier(d, pis, hidden_sizes=hidden, rng=rng)
    return CwmModel(comps, clf), Gmm(pis, comps)


def central_diff(f, x0, eps=1e-5):
    """Central finite-difference gradient of scalar f at flat vector x0."""
    x0 = np.asarray(x0, dtype=np.float64)
    g = np.zeros_like(x0)
    for i in range(x0.size):
        hi = x0.copy()
        lo = x0.copy()
        hi[i] += eps
        lo[i] -= eps
        g[i] = (f(hi) - f(lo)) / (2.0 * eps)
    return g


def rel_err(analytic, numeric, floor=1e-6):
    analytic = np.asarray(analytic, dtype=np.float64)
    numeric = np.asarray(numeric, dtype=np.float64)
    return np.abs(analytic - numeric) / (np.abs(analytic) + np.abs(numeric) + floor)


@pytest.fixture
def rng():
    return RngHandle(12345)
