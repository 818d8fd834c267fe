"""Constant-weight diagonal Gaussian mixture with EM fitting.

Serves two roles: the density-estimation baseline, and the warm start for the
classifier-weighted model. A fitted mixture converts exactly into a
classifier-weighted model by building a constant classifier (zero last-layer
weights, log(pi) biases), so gradient training starts from the EM optimum.
"""

from dataclasses import dataclass

import numpy as np

from .classifier import make_constant_classifier
from .components import DiagGaussianComponent, stack_components
from .mathutils import LOG_TWO_PI, log_sum_exp
from .model import CwmModel
from .rng import RngHandle, SIMPLEX_TOL

VAR_FLOOR = 1e-6  # M-step variance floor against singular collapse


@dataclass
class Gmm:
    """Constant mixture weights plus diagonal-Gaussian components."""

    pis: np.ndarray
    components: list

    def __post_init__(self):
        pis = np.asarray(self.pis, dtype=np.float64)
        if pis.ndim != 1 or pis.size != len(self.components):
            raise ValueError("pis must be one weight per component")
        if np.any(pis <= 0.0) or np.any(pis > 1.0):
            raise ValueError("weights must lie in (0, 1]")
        if abs(float(pis.sum()) - 1.0) > SIMPLEX_TOL:
            raise ValueError("weights must sum to 1 within 1e-9")
        self.pis = pis

    @property
    def dim(self) -> int:
        return self.components[0].dim

    @property
    def n_components(self) -> int:
        return self.pis.size

    def log_joint_rows(self, X) -> np.ndarray:
        """(n, K) matrix of log[pi_k * N(x; mu_k, Sigma_k)]."""
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != self.dim:
            raise ValueError(f"expected (n, {self.dim}) row points, got shape {X.shape}")
        mus, log_vars = stack_components(self.components)
        Z = (X[:, None, :] - mus[None, :, :]) * np.exp(-0.5 * log_vars)[None, :, :]
        # Same term order as DiagGaussianComponent.logpdf, so K=1 reduces to
        # the component density bit-for-bit.
        comp_lp = (-0.5 * self.dim * LOG_TWO_PI - 0.5 * np.sum(Z * Z, axis=2)) + (
            -0.5 * np.sum(log_vars, axis=1)
        )[None, :]
        return np.log(self.pis)[None, :] + comp_lp

    def log_prob(self, x) -> float:
        x = np.asarray(x, dtype=np.float64)
        return float(log_sum_exp(self.log_joint_rows(x[None, :]), axis=1)[0])

    def log_prob_batch(self, X) -> np.ndarray:
        return log_sum_exp(self.log_joint_rows(X), axis=1)

    def responsibilities_rows(self, X) -> np.ndarray:
        """(n, K) posterior membership probabilities; rows sum to 1."""
        rows = self.log_joint_rows(X)
        return np.exp(rows - log_sum_exp(rows, axis=1)[:, None])

    def sample_arrays(self, rng: RngHandle, n: int):
        """(Z, R, X) arrays of ancestral draws from the constant-weight mixture."""
        R = rng.categorical(self.pis, size=n)
        mus, log_vars = stack_components(self.components)
        Z = rng.normal((n, self.dim))
        X = mus[R] + np.exp(0.5 * log_vars[R]) * Z
        return Z, R, X

    @classmethod
    def init_from_data(cls, X, K: int, rng: RngHandle) -> "Gmm":
        """EM starting point: means at K distinct random data points, variances
        set to the global per-dimension data variance, uniform weights."""
        X = np.asarray(X, dtype=np.float64)
        n = X.shape[0]
        if K < 1 or n < K:
            raise ValueError("need at least K data points")
        order = rng.permutation(n)[:K]
        global_var = np.maximum(X.var(axis=0), VAR_FLOOR)
        comps = [DiagGaussianComponent(X[i], np.log(global_var)) for i in order]
        return cls(np.full(K, 1.0 / K), comps)


def _as_points(data):
    """Accept a raw (n, d) array or anything exposing train_points."""
    pts = getattr(data, "train_points", data)
    X = np.asarray(pts, dtype=np.float64)
    if X.ndim != 2:
        raise ValueError("expected a 2-D array of row points")
    return X


def em_fit(g: Gmm, data, max_iters: int = 500, tol: float = 1e-6):
    """Fit by expectation-maximization; returns (fitted Gmm, loglik trace).

    E-step: responsibilities gamma_ik proportional to pi_k N(x_i; mu_k, Sigma_k).
    M-step: pi_k = mean_i gamma_ik, mu_k = weighted mean, sigma2_k = weighted
    spread (floored at VAR_FLOOR). The trace records the dataset mean
    log-likelihood before each M-step and is non-decreasing; fitting stops at
    max_iters or when the improvement drops below tol.
    """
    if max_iters < 1:
        raise ValueError("max_iters must be >= 1")
    X = _as_points(data)
    n = X.shape[0]
    if n == 0:
        raise ValueError("empty dataset")
    K = g.n_components
    if n < K:
        raise ValueError(f"need at least K={K} points, got {n}")

    pis = g.pis.copy()
    mus, log_vars = stack_components(g.components)
    trace = []
    for _ in range(max_iters):
        current = Gmm(pis, [DiagGaussianComponent(mus[k], log_vars[k]) for k in range(K)])
        rows = current.log_joint_rows(X)
        lse = log_sum_exp(rows, axis=1)
        trace.append(float(np.mean(lse)))
        if len(trace) > 1 and trace[-1] - trace[-2] < tol:
            break
        gamma = np.exp(rows - lse[:, None])  # (n, K)
        nk = gamma.sum(axis=0)
        if not np.all(np.isfinite(nk)):
            raise RuntimeError("EM produced non-finite responsibilities")
        nk = np.maximum(nk, 1e-300)
        pis = np.maximum(nk / n, 1e-12)
        pis = pis / pis.sum()
        mus = (gamma.T @ X) / nk[:, None]
        diff = X[:, None, :] - mus[None, :, :]
        var = np.einsum("nk,nkd->kd", gamma, diff * diff) / nk[:, None]
        log_vars = np.log(np.maximum(var, VAR_FLOOR))

    fitted = Gmm(pis, [DiagGaussianComponent(mus[k], log_vars[k]) for k in range(K)])
    return fitted, trace


def init_cwm_from_gmm(g: Gmm, hidden_sizes=(64, 64), rng=None) -> CwmModel:
    """Exactly equivalent classifier-weighted model: same components, constant
    classifier outputting g.pis everywhere. Densities agree to float precision
    at construction; gradient training then frees the weights."""
    clf = make_constant_classifier(g.dim, g.pis, hidden_sizes=hidden_sizes, rng=rng)
    comps = [DiagGaussianComponent(c.mu.copy(), c.log_var.copy()) for c in g.components]
    return CwmModel(comps, clf)


def gmm_parameter_count(g: Gmm) -> int:
    """Free parameters: (K - 1) simplex weights plus K*(2d) component entries."""
    return (g.n_components - 1) + g.n_components * 2 * g.dim
