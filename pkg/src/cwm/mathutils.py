"""Shared numerical primitives: stable log-sum-exp and the standard-normal log-density.

Everything in this package computes in float64; log-domain arithmetic is the
default currency so that mixtures with tiny per-component masses neither
underflow nor need special-casing.
"""

import numpy as np

LOG_TWO_PI = float(np.log(2.0 * np.pi))


def log_sum_exp(terms, axis=None):
    """log(sum(exp(terms))), computed as m + log(sum(exp(terms - m))) with m = max.

    Entries must lie in [-inf, +inf); an all-(-inf) reduction returns -inf
    (the mass is exactly zero, which is a value, not an error). An empty
    reduction is a contract violation.

    With ``axis=None`` the whole array reduces to a float; otherwise the given
    axis is reduced.
    """
    a = np.asarray(terms, dtype=np.float64)
    if a.size == 0 or (axis is not None and a.shape[axis] == 0):
        raise ValueError("log_sum_exp requires at least one term")
    if np.isnan(a).any() or (a == np.inf).any():
        raise ValueError("log_sum_exp terms must lie in [-inf, +inf)")
    m = np.max(a, axis=axis, keepdims=True)
    shift = np.where(np.isfinite(m), m, 0.0)
    with np.errstate(divide="ignore"):
        out = shift + np.log(np.sum(np.exp(a - shift), axis=axis, keepdims=True))
    if axis is None:
        return float(out.reshape(()))
    return np.squeeze(out, axis=axis)


def std_normal_logpdf(z):
    """Log-density of N(0, I) at z: -(d/2) log(2 pi) - ||z||^2 / 2.

    A 1-D ``z`` is a single point in R^d and yields a float; a 2-D ``z`` is a
    batch of row points and yields a vector of log-densities.
    """
    z = np.asarray(z, dtype=np.float64)
    if not np.all(np.isfinite(z)):
        raise ValueError("std_normal_logpdf requires finite input")
    if z.ndim == 0:
        z = z.reshape(1)
    d = z.shape[-1]
    out = -0.5 * d * LOG_TWO_PI - 0.5 * np.sum(z * z, axis=-1)
    if out.ndim == 0:
        return float(out)
    return out
