"""Seed-deterministic random number generation.

Every stochastic operation in the package draws through :class:`RngHandle`,
so a run is fully determined by its seeds. Normal variates come from the
inverse normal CDF applied to uniforms of the underlying PCG64 stream (a
deterministic transform, so sample streams are identical across platforms for
a fixed seed), and categorical draws use a cumulative-sum inverse CDF on a
single uniform with ties broken toward the lower index.

The handle counts how many draws of each kind it has served, which lets tests
assert structural properties of estimators, e.g. that an estimator which
marginalizes out the mixture label never actually samples it.
"""

import numpy as np
from scipy.special import ndtri

_TWO_53 = float(2**53)

SIMPLEX_TOL = 1e-9


def _size_count(size):
    if size is None:
        return 1
    if np.isscalar(size):
        return int(size)
    return int(np.prod(size))


class RngHandle:
    """Seedable RNG with uniform, standard-normal, and categorical draws.

    Single-owner mutable state: safe to move between threads, not to share.
    Identical seed + identical call sequence gives a bit-identical stream.
    """

    def __init__(self, seed: int):
        self.seed = int(seed)
        self._gen = np.random.Generator(np.random.PCG64(self.seed))
        self.uniform_draws = 0
        self.normal_draws = 0
        self.categorical_draws = 0

    def uniform(self, size=None):
        """Uniform draws on [0, 1). Scalar float when ``size`` is None."""
        self.uniform_draws += _size_count(size)
        return self._gen.random(size)

    def normal(self, size=None):
        """Standard-normal draws via ndtri((k + 0.5) / 2^53), k a 53-bit integer.

        The offset keeps the uniform strictly inside (0, 1) so the inverse CDF
        is always finite, and the transform is exactly antithetic-symmetric.
        """
        self.normal_draws += _size_count(size)
        k = self._gen.integers(0, 2**53, size=size)
        u = (np.asarray(k, dtype=np.float64) + 0.5) / _TWO_53
        out = ndtri(u)
        if size is None:
            return float(out)
        return out

    def categorical(self, probs, size=None):
        """Index draws from a probability vector via inverse CDF.

        ``probs`` must be nonnegative and sum to 1 within 1e-9. One uniform is
        consumed per draw; the returned index is the smallest k with
        u <= cumsum(probs)[k] (ties toward the lower index). Returns an int
        when ``size`` is None, else an int array.
        """
        p = np.asarray(probs, dtype=np.float64)
        _check_simplex(p)
        c = np.cumsum(p)
        n = _size_count(size)
        self.categorical_draws += n
        u = self._gen.random(size)
        idx = np.minimum(np.searchsorted(c, u, side="left"), p.size - 1)
        if size is None:
            return int(idx)
        return idx

    def categorical_rows(self, prob_rows):
        """One categorical draw per row of a (n, K) matrix of probability rows."""
        p = np.asarray(prob_rows, dtype=np.float64)
        if p.ndim != 2:
            raise ValueError("categorical_rows expects a 2-D array of probability rows")
        _check_simplex(p, axis=1)
        c = np.cumsum(p, axis=1)
        n = p.shape[0]
        self.categorical_draws += n
        u = self._gen.random(n)
        idx = np.sum(c < u[:, None], axis=1)
        return np.minimum(idx, p.shape[1] - 1)

    def permutation(self, n: int):
        """Deterministic shuffled index array of range(n)."""
        return self._gen.permutation(n)

    def spawn(self, index: int) -> "RngHandle":
        """Independent handle derived from (seed, index); stable across calls."""
        derived = np.random.SeedSequence([self.seed & 0xFFFFFFFFFFFFFFFF, int(index)])
        return RngHandle(int(derived.generate_state(1, np.uint64)[0]))


def _check_simplex(p, axis=None):
    if np.any(p < 0):
        raise ValueError("probabilities must be nonnegative")
    sums = np.sum(p, axis=axis)
    if np.any(np.abs(sums - 1.0) > SIMPLEX_TOL):
        raise ValueError("probabilities must sum to 1 within 1e-9")
