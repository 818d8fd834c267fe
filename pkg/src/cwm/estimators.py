"""Monte Carlo estimators for E[h(X)] under a classifier-weighted mixture.

Three routes:

* crude: average h over ancestral samples (Z, R, X all drawn);
* score-function (REINFORCE): gradient estimate mean_i h(x_i) * dlogp(x_i)/dtheta,
  unbiased for the gradient of E[h(X)] and usable for discrete labels, but
  high-variance;
* Rao-Blackwellized: condition on the base draw Z and sum the label out,

      E[h(X) | Z = z] = sum_k w_k(z) h(mu_k + sigma_k * z),

  so only Z is sampled. By the law of total variance the conditioned
  estimator's variance never exceeds the crude one's, and with no categorical
  draw left in the estimate it is differentiable in all parameters.

A replication harness measures the empirical variance of each estimator at a
fixed sampling budget.
"""

from dataclasses import dataclass

import numpy as np

from .classifier import ClassifierGrads, log_softmax
from .components import stack_components
from .model import CwmGrads, CwmModel
from .rng import RngHandle
from .training import grads_to_vector


@dataclass(frozen=True)
class TestFunction:
    """Scalar function h on R^d with an optional gradient.

    ``fn`` maps (n, d) row points to (n,) values; ``grad`` maps them to (n, d)
    gradients. ``grad=None`` declares an almost-everywhere-zero gradient
    (indicators), in which case gradient estimators propagate only through the
    mixture weights.
    """

    name: str
    fn: object
    grad: object = None

    def __call__(self, X):
        out = np.asarray(self.fn(np.asarray(X, dtype=np.float64)), dtype=np.float64)
        if not np.all(np.isfinite(out)):
            raise ValueError(f"test function {self.name!r} produced non-finite values")
        return out

    def gradient(self, X):
        X = np.asarray(X, dtype=np.float64)
        if self.grad is None:
            return np.zeros_like(X)
        return np.asarray(self.grad(X), dtype=np.float64)


CATALOG = ("constant-one", "coordinate-sum", "squared-norm", "indicator-of-halfspace")


def make_test_function(tag: str, **params) -> TestFunction:
    """Catalog lookup. ``indicator-of-halfspace`` takes ``normal`` and
    ``offset`` (default: x_0 >= 0)."""
    if tag == "constant-one":
        return TestFunction(tag, lambda X: np.ones(X.shape[0]))
    if tag == "coordinate-sum":
        return TestFunction(tag, lambda X: X.sum(axis=1), lambda X: np.ones_like(X))
    if tag == "squared-norm":
        return TestFunction(tag, lambda X: np.sum(X * X, axis=1), lambda X: 2.0 * X)
    if tag == "indicator-of-halfspace":
        normal = np.asarray(params["normal"] if "normal" in params else [1.0], dtype=np.float64)
        offset = float(params.get("offset", 0.0))

        def indicator(X, a=normal, b=offset):
            return (X[:, : a.size] @ a >= b).astype(np.float64)

        return TestFunction(tag, indicator)
    raise ValueError(f"unknown test function tag: {tag!r}")


def from_callable(name: str, fn, grad=None) -> TestFunction:
    """User-supplied h; pass ``grad`` when gradient estimators should route
    through h itself."""
    return TestFunction(name, fn, grad)


def crude_mc(model: CwmModel, h: TestFunction, M: int, rng: RngHandle) -> float:
    """Plain Monte Carlo: mean of h over M ancestral samples."""
    if M < 1:
        raise ValueError("need M >= 1")
    _, _, X = model.sample_arrays(rng, M)
    return float(np.mean(h(X)))


def _rb_terms(model: CwmModel, h: TestFunction, M: int, rng: RngHandle):
    """Shared plumbing: base draws Z, weights W, per-component points and h values."""
    if M < 1:
        raise ValueError("need M >= 1")
    d, K = model.dim, model.n_components
    Z = np.asarray(rng.normal((M, d)), dtype=np.float64)
    W = np.exp(log_softmax(model.classifier.logits(Z)))  # (M, K)
    mus, log_vars = stack_components(model.components)
    sigmas = np.exp(0.5 * log_vars)
    Xk = mus[None, :, :] + sigmas[None, :, :] * Z[:, None, :]  # (M, K, d)
    H = h(Xk.reshape(M * K, d)).reshape(M, K)
    return Z, W, Xk, H, sigmas


def _rb_inner(W, H):
    # Divide by the computed weight sum (==1 up to rounding) so that the
    # simplex identity sum_k w_k h ≡ h holds bit-exactly for constant h.
    return np.sum(W * H, axis=1) / np.sum(W, axis=1)


def rb_expectation(model: CwmModel, h: TestFunction, M: int, rng: RngHandle) -> float:
    """Conditioned estimate: mean_i sum_k w_k(z_i) h(mu_k + sigma_k z_i).

    Only base draws occur; the label is summed out, never sampled.
    """
    _, W, _, H, _ = _rb_terms(model, h, M, rng)
    return float(np.mean(_rb_inner(W, H)))


def rb_expectation_grad(model: CwmModel, h: TestFunction, M: int, rng: RngHandle) -> CwmGrads:
    """Exact gradient of the conditioned estimate at fixed base draws.

    Classifier parameters enter through w_k(z_i); component parameters through
    x_ik = mu_k + sigma_k * z_i. The base draws are parameter-free, so no
    gradient flows through them.
    """
    Z, W, Xk, H, sigmas = _rb_terms(model, h, M, rng)
    M_, K = W.shape
    G = h.gradient(Xk.reshape(M_ * K, model.dim)).reshape(M_, K, model.dim)

    # d/dlogit_j of sum_k w_k h_k = w_j (h_j - sum_k w_k h_k), per base draw.
    inner = _rb_inner(W, H)
    upstream = W * (H - inner[:, None]) / M_
    cg = model.classifier.backprop(Z, upstream)

    WG = W[:, :, None] * G
    d_mu = WG.mean(axis=0)
    d_log_var = 0.5 * np.mean(WG * sigmas[None, :, :] * Z[:, None, :], axis=0)
    return CwmGrads(d_mu, d_log_var, ClassifierGrads(cg.d_weights, cg.d_biases, None))


def reinforce_grad(model: CwmModel, h: TestFunction, M: int, rng: RngHandle) -> CwmGrads:
    """Score-function estimate: mean_i h(x_i) * dlogp(x_i)/dtheta over ancestral
    samples; unbiased for the gradient of E[h(X)]."""
    if M < 1:
        raise ValueError("need M >= 1")
    _, _, X = model.sample_arrays(rng, M)
    values = h(X)
    _, grads = model.log_prob_backward_batch(X, weights=values / M)
    return grads


@dataclass
class EstimatorReport:
    """One benchmark row: replicated estimates of a single estimator.

    For the expectation estimators ``values`` holds the M_rep scalar
    estimates. For the gradient estimators it holds the flattened gradient
    vector of each replication, ``estimate`` is the norm of the mean gradient,
    and ``variance`` is the total (summed per-coordinate) variance.
    """

    estimator: str
    h_name: str
    estimate: float
    values: np.ndarray
    variance: float
    M: int
    M_rep: int


def _report(name, h, values, M, M_rep) -> EstimatorReport:
    values = np.asarray(values, dtype=np.float64)
    if values.ndim == 1:
        est = float(values.mean())
        var = float(values.var(ddof=1))
    else:
        est = float(np.linalg.norm(values.mean(axis=0)))
        var = float(values.var(axis=0, ddof=1).sum())
    return EstimatorReport(name, h.name, est, values, var, M, M_rep)


def variance_bench(model: CwmModel, h: TestFunction, M: int, M_rep: int, rng: RngHandle):
    """Replicate each estimator M_rep times at budget M with per-replication
    seeds rng.seed + j; returns a list of EstimatorReport rows.

    Rows: "crude" and "rb" estimate E[h(X)]; "reinforce-grad" and "rb-grad"
    estimate its parameter gradient (see EstimatorReport for their metrics).
    """
    if M_rep < 2:
        raise ValueError("need M_rep >= 2 replications")
    base = rng.seed
    crude_vals = np.empty(M_rep)
    rb_vals = np.empty(M_rep)
    rf_grads = []
    rb_grads = []
    for j in range(M_rep):
        crude_vals[j] = crude_mc(model, h, M, RngHandle(base + j))
        rb_vals[j] = rb_expectation(model, h, M, RngHandle(base + j))
        rf_grads.append(grads_to_vector(reinforce_grad(model, h, M, RngHandle(base + j))))
        rb_grads.append(grads_to_vector(rb_expectation_grad(model, h, M, RngHandle(base + j))))
    return [
        _report("crude", h, crude_vals, M, M_rep),
        _report("rb", h, rb_vals, M, M_rep),
        _report("reinforce-grad", h, np.stack(rf_grads), M, M_rep),
        _report("rb-grad", h, np.stack(rb_grads), M, M_rep),
    ]


def bench_table(reports, sep=",") -> str:
    """Delimiter-separated table (estimator, h, mean, variance, M, M_rep)."""
    lines = [sep.join(["estimator", "h", "mean", "variance", "M", "M_rep"])]
    for r in reports:
        lines.append(
            sep.join(
                [r.estimator, r.h_name, f"{r.estimate:.17g}", f"{r.variance:.17g}", str(r.M), str(r.M_rep)]
            )
        )
    return "\n".join(lines)
