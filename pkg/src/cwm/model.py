"""Gaussian mixture with input-dependent weights produced by a softmax classifier.

The density of a model with components N(mu_k, diag(exp(log_var_k))) and
classifier w is

    p(x) = sum_k w_k(z_k(x)) * N(x; mu_k, Sigma_k),   z_k(x) = (x - mu_k) / sigma_k,

where each component's weight is evaluated at that component's own whitened
point. The model is a latent variable model over (Z, R, X): Z is standard
normal, R | Z is categorical with probabilities w(Z), and X = mu_R + sigma_R * Z,
which gives ancestral sampling and makes the density above the exact marginal
of X. All densities and gradients are computed in the log domain.
"""

from dataclasses import dataclass

import numpy as np

from .classifier import ClassifierGrads, MlpClassifier, log_softmax
from .components import DiagGaussianComponent, stack_components
from .mathutils import LOG_TWO_PI, log_sum_exp
from .rng import RngHandle

# Chunk size for whole-dataset evaluations: bounds the (n*K, hidden) activations.
_EVAL_CHUNK = 4096


@dataclass
class CwmGrads:
    """Gradient container congruent with a CwmModel: stacked (K, d) component
    gradients plus classifier gradients."""

    d_mu: np.ndarray
    d_log_var: np.ndarray
    classifier: ClassifierGrads


@dataclass(frozen=True)
class SampleTrace:
    """One ancestral draw with its latent values: base point z, label r, output x."""

    z: np.ndarray
    r: int
    x: np.ndarray


class CwmModel:
    """K diagonal-Gaussian components plus a classifier over the base space."""

    def __init__(self, components, classifier: MlpClassifier):
        components = list(components)
        mus, log_vars = stack_components(components)
        d = mus.shape[1]
        if classifier.input_dim != d:
            raise ValueError("classifier input dimension must equal the data dimension")
        if classifier.n_classes != len(components):
            raise ValueError("classifier must output one logit per component")
        self.components = components
        self.classifier = classifier
        self._mus = mus
        self._log_vars = log_vars

    @property
    def dim(self) -> int:
        return self._mus.shape[1]

    @property
    def n_components(self) -> int:
        return self._mus.shape[0]

    @property
    def mus(self) -> np.ndarray:
        """Stacked (K, d) component means."""
        return self._mus.copy()

    @property
    def log_vars(self) -> np.ndarray:
        """Stacked (K, d) component log variances."""
        return self._log_vars.copy()

    # -- density ------------------------------------------------------------

    def log_joint_rows(self, X):
        """(n, K) matrix of log[w_k(z_k(x)) * N(x; mu_k, Sigma_k)] for row points."""
        X = self._as_rows(X)
        n, d = X.shape
        K = self.n_components
        Z = self._whitened(X)  # (n, K, d)
        # Term order mirrors DiagGaussianComponent.logpdf (std-normal part
        # first, then the log-det), so K=1 reduces to the component density
        # bit-for-bit.
        comp_lp = (-0.5 * d * LOG_TWO_PI - 0.5 * np.sum(Z * Z, axis=2)) + (
            -0.5 * np.sum(self._log_vars, axis=1)
        )[None, :]
        log_w_all = log_softmax(self.classifier.logits(Z.reshape(n * K, d)))
        log_w = log_w_all[np.arange(n * K), np.tile(np.arange(K), n)].reshape(n, K)
        return log_w + comp_lp

    def log_prob(self, x) -> float:
        """Log-density at a single point."""
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 1:
            raise ValueError("log_prob expects a single point; use log_prob_batch")
        return float(log_sum_exp(self.log_joint_rows(x[None, :]), axis=1)[0])

    def log_prob_batch(self, X) -> np.ndarray:
        """Vector of log-densities for a (n, d) batch, evaluated in chunks."""
        X = self._as_rows(X)
        out = np.empty(X.shape[0])
        for lo in range(0, X.shape[0], _EVAL_CHUNK):
            rows = self.log_joint_rows(X[lo : lo + _EVAL_CHUNK])
            out[lo : lo + _EVAL_CHUNK] = log_sum_exp(rows, axis=1)
        return out

    def log_joint(self, x, k: int) -> float:
        """log p(x, R=k); log_sum_exp over k recovers log_prob(x)."""
        if not 0 <= k < self.n_components:
            raise IndexError(f"component index {k} out of range [0, {self.n_components})")
        x = np.asarray(x, dtype=np.float64)
        return float(self.log_joint_rows(x[None, :])[0, k])

    def responsibilities(self, x) -> np.ndarray:
        """Posterior membership probabilities p(R=k | x); sums to 1."""
        rows = self.log_joint_rows(np.asarray(x, dtype=np.float64)[None, :])
        return np.exp(rows[0] - log_sum_exp(rows[0]))

    # -- sampling -----------------------------------------------------------

    def sample_arrays(self, rng: RngHandle, n: int):
        """(Z, R, X) arrays of n ancestral draws: Z ~ N(0, I), R ~ Cat(w(Z)),
        X = mu_R + sigma_R * Z."""
        if n < 1:
            raise ValueError("need n >= 1 samples")
        Z = np.asarray(rng.normal((n, self.dim)), dtype=np.float64)
        W = np.exp(log_softmax(self.classifier.logits(Z)))
        R = rng.categorical_rows(W)
        sigmas = np.exp(0.5 * self._log_vars)
        X = self._mus[R] + sigmas[R] * Z
        return Z, R, X

    def sample(self, rng: RngHandle, n: int):
        """List of n SampleTrace records retaining the latent (z, r) values."""
        Z, R, X = self.sample_arrays(rng, n)
        return [SampleTrace(Z[i], int(R[i]), X[i]) for i in range(n)]

    # -- gradients ------------------------------------------------------------

    def log_prob_backward(self, x):
        """(log_prob(x), exact gradients of log_prob with respect to all parameters).

        The chain rule routes through both occurrences of the component
        parameters: the Gaussian density and the classifier input z_k(x).
        """
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 1:
            raise ValueError("log_prob_backward expects a single point")
        lps, grads = self.log_prob_backward_batch(x[None, :])
        return float(lps[0]), grads

    def log_prob_backward_batch(self, X, weights=None):
        """Per-point log-probs and gradients of sum_i c_i * log_prob(x_i).

        ``weights`` (default all-ones) are the per-point coefficients c_i; the
        score-function estimator uses them to weight per-sample scores without
        materializing per-sample gradients.
        """
        X = self._as_rows(X)
        n, d = X.shape
        K = self.n_components
        var = np.exp(self._log_vars)  # (K, d)
        inv_sigma = np.exp(-0.5 * self._log_vars)

        diff = X[:, None, :] - self._mus[None, :, :]  # (n, K, d)
        Z = diff * inv_sigma[None, :, :]
        # Same term order as log_joint_rows so returned values match
        # log_prob_batch bit-for-bit.
        comp_lp = (-0.5 * d * LOG_TWO_PI - 0.5 * np.sum(Z * Z, axis=2)) + (
            -0.5 * np.sum(self._log_vars, axis=1)
        )[None, :]
        Z_flat = Z.reshape(n * K, d)
        logits, acts = self.classifier.forward_cache(Z_flat)
        log_w_all = log_softmax(logits)  # (nK, K)
        own = np.tile(np.arange(K), n)
        log_w = log_w_all[np.arange(n * K), own].reshape(n, K)

        joint = log_w + comp_lp
        lps = log_sum_exp(joint, axis=1)
        rho = np.exp(joint - lps[:, None])  # responsibilities, (n, K)
        if weights is not None:
            rho = rho * np.asarray(weights, dtype=np.float64)[:, None]

        # Gaussian-density path.
        d_mu = np.einsum("nk,nkd->kd", rho, diff / var[None, :, :])
        d_log_var = np.einsum("nk,nkd->kd", rho, 0.5 * (Z * Z - 1.0))

        # Classifier path: upstream on the logits at each z_k is
        # rho_k * d(log_softmax_k)/dlogits = rho_k * (e_k - softmax(logits)).
        upstream = -np.exp(log_w_all) * rho.reshape(n * K)[:, None]
        upstream[np.arange(n * K), own] += rho.reshape(n * K)
        cg = self.classifier.backprop(Z_flat, upstream, acts=acts)

        # z_k = (x - mu_k) / sigma_k also depends on the component parameters.
        dz = cg.d_input.reshape(n, K, d)
        d_mu -= np.sum(dz * inv_sigma[None, :, :], axis=0)
        d_log_var -= 0.5 * np.sum(dz * Z, axis=0)

        grads = CwmGrads(d_mu, d_log_var, ClassifierGrads(cg.d_weights, cg.d_biases, None))
        return lps, grads

    # -- plumbing -------------------------------------------------------------

    def _whitened(self, X):
        return (X[:, None, :] - self._mus[None, :, :]) * np.exp(
            -0.5 * self._log_vars[None, :, :]
        )

    def _as_rows(self, X):
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != self.dim:
            raise ValueError(f"expected (n, {self.dim}) row points, got shape {X.shape}")
        return X

    def with_parameters(self, mus, log_vars, classifier) -> "CwmModel":
        """New model with replaced parameter arrays (training-step output)."""
        comps = [DiagGaussianComponent(mus[k], log_vars[k]) for k in range(mus.shape[0])]
        return CwmModel(comps, classifier)
