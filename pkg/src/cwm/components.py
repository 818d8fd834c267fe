"""Diagonal-Gaussian mixture components as invertible affine maps.

A component with mean ``mu`` and elementwise log-variance ``log_var``
represents N(mu, diag(exp(log_var))). Its whitening map

    z = (x - mu) * exp(-log_var / 2)

carries the component onto the standard normal base; the inverse map
``x = mu + z * exp(log_var / 2)`` turns base samples into component samples.
The forward Jacobian is constant with log|det| = -0.5 * sum(log_var), and the
component log-density is the change-of-variables composition

    logpdf(x) = std_normal_logpdf(z) + log|det J|.
"""

from dataclasses import dataclass

import numpy as np

from .mathutils import LOG_TWO_PI, std_normal_logpdf

# |log_var| clamp applied by optimizer updates; keeps exp() finite.
LOG_VAR_BOUND = 30.0


@dataclass(frozen=True)
class DiagGaussianComponent:
    """Immutable mean / log-variance pair defining one mixture component."""

    mu: np.ndarray
    log_var: np.ndarray

    def __post_init__(self):
        mu = np.asarray(self.mu, dtype=np.float64)
        log_var = np.asarray(self.log_var, dtype=np.float64)
        if mu.ndim != 1 or log_var.ndim != 1:
            raise ValueError("mu and log_var must be 1-D vectors")
        if mu.shape != log_var.shape:
            raise ValueError("mu and log_var must have equal dimension")
        if not (np.all(np.isfinite(mu)) and np.all(np.isfinite(log_var))):
            raise ValueError("mu and log_var must be finite")
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "log_var", log_var)

    @property
    def dim(self) -> int:
        return self.mu.shape[0]

    @property
    def sigma(self) -> np.ndarray:
        """Elementwise standard deviations exp(log_var / 2); always positive."""
        return np.exp(0.5 * self.log_var)

    def forward(self, x):
        """Whitening map z = (x - mu) / sigma. Accepts a point or batch of rows."""
        x = self._check_dim(x)
        return (x - self.mu) * np.exp(-0.5 * self.log_var)

    def inverse(self, z):
        """Inverse map x = mu + sigma * z; forward(inverse(z)) == z."""
        z = self._check_dim(z)
        return self.mu + z * np.exp(0.5 * self.log_var)

    def log_abs_det_jacobian(self) -> float:
        """log|det J| of the forward map: -0.5 * sum(log_var) (constant in x)."""
        return float(-0.5 * np.sum(self.log_var))

    def logpdf(self, x):
        """Component log-density via the change of variables through forward()."""
        return std_normal_logpdf(self.forward(x)) + self.log_abs_det_jacobian()

    def logpdf_grad(self, x):
        """(logpdf, d/d_mu, d/d_log_var) at a single point x.

        Closed forms for the diagonal Gaussian:
            d/d_mu_i      = (x_i - mu_i) / sigma_i^2
            d/d_log_var_i = ((x_i - mu_i)^2 / sigma_i^2 - 1) / 2
        """
        x = self._check_dim(x)
        if x.ndim != 1:
            raise ValueError("logpdf_grad expects a single point")
        var = np.exp(self.log_var)
        diff = x - self.mu
        value = float(
            -0.5 * self.dim * LOG_TWO_PI
            - 0.5 * np.sum(self.log_var)
            - 0.5 * np.sum(diff * diff / var)
        )
        d_mu = diff / var
        d_log_var = 0.5 * (diff * diff / var - 1.0)
        return value, d_mu, d_log_var

    def _check_dim(self, x):
        x = np.asarray(x, dtype=np.float64)
        if x.shape[-1] != self.dim:
            raise ValueError(
                f"dimension mismatch: component dim {self.dim}, point dim {x.shape[-1]}"
            )
        return x


def stack_components(components):
    """(mus, log_vars) as (K, d) arrays; validates that dimensions agree."""
    if not components:
        raise ValueError("at least one component required")
    d = components[0].dim
    if any(c.dim != d for c in components):
        raise ValueError("all components must share one dimension")
    mus = np.stack([c.mu for c in components])
    log_vars = np.stack([c.log_var for c in components])
    return mus, log_vars
