"""Maximum-likelihood training of classifier-weighted mixtures.

Pipeline: EM pre-training of a constant-weight mixture, exact conversion into
a classifier-weighted model (the warm start), then shuffled minibatch ascent
of the mean log-likelihood with an adaptive-moment (Adam) optimizer. The
objective handed to the optimizer is the negative mean log-likelihood, so the
optimizer minimizes throughout.

Parameters travel through the optimizer as one flat float64 vector:
classifier weights and biases in layer order, then all means, then all
log-variances. The log-variance block is clamped to +-LOG_VAR_BOUND after
each step.
"""

import time
from dataclasses import dataclass, field

import numpy as np

from .classifier import ClassifierGrads, MlpClassifier
from .components import LOG_VAR_BOUND, stack_components
from .gmm import Gmm, em_fit, init_cwm_from_gmm
from .model import CwmGrads, CwmModel
from .rng import RngHandle


@dataclass
class TrainConfig:
    learning_rate: float = 1e-3
    batch_size: int = 256
    epochs: int = 120
    seed: int = 0
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    pretrain: bool = True
    em_max_iters: int = 500
    em_tol: float = 1e-6
    hidden_sizes: tuple = (64, 64)

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be > 0")
        if not (0 <= self.adam_beta1 < 1 and 0 <= self.adam_beta2 < 1):
            raise ValueError("betas must lie in [0, 1)")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        self.hidden_sizes = tuple(int(h) for h in self.hidden_sizes)

    def to_dict(self) -> dict:
        return {
            "learning_rate": self.learning_rate,
            "batch_size": self.batch_size,
            "epochs": self.epochs,
            "seed": self.seed,
            "adam_beta1": self.adam_beta1,
            "adam_beta2": self.adam_beta2,
            "adam_eps": self.adam_eps,
            "pretrain": self.pretrain,
            "em_max_iters": self.em_max_iters,
            "em_tol": self.em_tol,
            "hidden_sizes": list(self.hidden_sizes),
        }


@dataclass
class TrainReport:
    train_ll: list = field(default_factory=list)  # per-epoch train mean LL
    val_ll: list = field(default_factory=list)  # per-epoch validation mean LL
    wall_time: float = 0.0
    n_parameters: int = 0


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    t: int = 0

    @classmethod
    def zeros(cls, n: int) -> "AdamState":
        return cls(np.zeros(n), np.zeros(n), 0)


def adam_step(params, grads, state: AdamState, config: TrainConfig):
    """One bias-corrected adaptive-moment update; pure in all inputs.

    Returns (new_params, new_state). Gradients are of the minimized objective,
    so the step is params - lr * m_hat / (sqrt(v_hat) + eps).
    """
    params = np.asarray(params, dtype=np.float64)
    grads = np.asarray(grads, dtype=np.float64)
    if params.shape != grads.shape:
        raise ValueError("params and grads must have identical shape")
    t = state.t + 1
    m = config.adam_beta1 * state.m + (1.0 - config.adam_beta1) * grads
    v = config.adam_beta2 * state.v + (1.0 - config.adam_beta2) * grads * grads
    m_hat = m / (1.0 - config.adam_beta1**t)
    v_hat = v / (1.0 - config.adam_beta2**t)
    new_params = params - config.learning_rate * m_hat / (np.sqrt(v_hat) + config.adam_eps)
    return new_params, AdamState(m, v, t)


# -- flat parameter vector <-> model ------------------------------------------


def model_to_vector(model: CwmModel) -> np.ndarray:
    parts = []
    for w, b in zip(model.classifier.weights, model.classifier.biases):
        parts.append(w.ravel())
        parts.append(b)
    mus, log_vars = stack_components(model.components)
    parts.append(mus.ravel())
    parts.append(log_vars.ravel())
    return np.concatenate(parts)


def grads_to_vector(grads: CwmGrads) -> np.ndarray:
    parts = []
    for dw, db in zip(grads.classifier.d_weights, grads.classifier.d_biases):
        parts.append(dw.ravel())
        parts.append(db)
    parts.append(grads.d_mu.ravel())
    parts.append(grads.d_log_var.ravel())
    return np.concatenate(parts)


def vector_to_model(vec: np.ndarray, template: CwmModel) -> CwmModel:
    """Rebuild a model with ``template``'s shapes from a flat vector, clamping
    the log-variance block to +-LOG_VAR_BOUND."""
    vec = np.asarray(vec, dtype=np.float64)
    pos = 0
    weights, biases = [], []
    for w, b in zip(template.classifier.weights, template.classifier.biases):
        weights.append(vec[pos : pos + w.size].reshape(w.shape).copy())
        pos += w.size
        biases.append(vec[pos : pos + b.size].copy())
        pos += b.size
    K, d = template.n_components, template.dim
    mus = vec[pos : pos + K * d].reshape(K, d).copy()
    pos += K * d
    log_vars = vec[pos : pos + K * d].reshape(K, d).copy()
    pos += K * d
    if pos != vec.size:
        raise ValueError("flat vector length does not match the model")
    log_vars = np.clip(log_vars, -LOG_VAR_BOUND, LOG_VAR_BOUND)
    return template.with_parameters(mus, log_vars, MlpClassifier(weights, biases))


def count_parameters(model: CwmModel) -> int:
    """Exact count: sum over layers of (in*out + out), plus K*2d for components."""
    clf = sum(w.size + b.size for w, b in zip(model.classifier.weights, model.classifier.biases))
    return clf + model.n_components * 2 * model.dim


# -- objective ----------------------------------------------------------------


def nll_batch_grad(model: CwmModel, batch):
    """Mean negative log-likelihood over a batch and its gradient.

    The gradient is the mean of per-point log_prob gradients, negated; by
    linearity it equals the batch objective's exact gradient.
    """
    X = np.asarray(batch, dtype=np.float64)
    if X.ndim == 1:
        X = X[None, :]
    if X.shape[0] == 0:
        raise ValueError("empty batch")
    lps, grads = model.log_prob_backward_batch(X)
    n = X.shape[0]
    scale = -1.0 / n
    neg = CwmGrads(
        scale * grads.d_mu,
        scale * grads.d_log_var,
        ClassifierGrads(
            [scale * dw for dw in grads.classifier.d_weights],
            [scale * db for db in grads.classifier.d_biases],
            None,
        ),
    )
    return float(-np.mean(lps)), neg


def _random_init_model(X, K: int, hidden_sizes, rng: RngHandle) -> CwmModel:
    g = Gmm.init_from_data(X, K, rng)
    clf = MlpClassifier.random_init([X.shape[1], *hidden_sizes, K], rng.spawn(17))
    return CwmModel(g.components, clf)


def fit_cwm(data, K: int, config: TrainConfig, progress=None):
    """EM pre-training, warm start, then minibatch gradient ascent.

    ``data`` provides train_points / val_points (see DensityDataset); the
    validation mean log-likelihood is recomputed after every epoch. The
    per-epoch train value is the average over that epoch's minibatch
    objectives. ``progress(epoch, train_ll, val_ll)`` is called per epoch when
    given. Returns (model, TrainReport).
    """
    t0 = time.perf_counter()
    X = np.asarray(data.train_points, dtype=np.float64)
    X_val = np.asarray(data.val_points, dtype=np.float64)
    n = X.shape[0]
    if n < K:
        raise ValueError(f"need at least K={K} training points, got {n}")
    rng = RngHandle(config.seed)

    if config.pretrain:
        g0 = Gmm.init_from_data(X, K, rng.spawn(1))
        g, _ = em_fit(g0, X, max_iters=config.em_max_iters, tol=config.em_tol)
        model = init_cwm_from_gmm(g, hidden_sizes=config.hidden_sizes, rng=rng.spawn(2))
    else:
        model = _random_init_model(X, K, config.hidden_sizes, rng.spawn(1))

    report = TrainReport(n_parameters=count_parameters(model))
    vec = model_to_vector(model)
    state = AdamState.zeros(vec.size)
    shuffle_rng = rng.spawn(3)
    log_var_slice = slice(vec.size - K * model.dim, vec.size)

    for epoch in range(config.epochs):
        perm = shuffle_rng.permutation(n)
        nll_sum = 0.0
        n_seen = 0
        for lo in range(0, n, config.batch_size):
            idx = perm[lo : lo + config.batch_size]
            nll, grads = nll_batch_grad(model, X[idx])
            if not np.isfinite(nll):
                raise RuntimeError(
                    f"non-finite loss at epoch {epoch}, batch offset {lo}: {nll}"
                )
            vec, state = adam_step(vec, grads_to_vector(grads), state, config)
            vec[log_var_slice] = np.clip(vec[log_var_slice], -LOG_VAR_BOUND, LOG_VAR_BOUND)
            model = vector_to_model(vec, model)
            nll_sum += nll * idx.size
            n_seen += idx.size
        train_ll = -nll_sum / n_seen
        val_ll = float(np.mean(model.log_prob_batch(X_val))) if X_val.size else float("nan")
        report.train_ll.append(train_ll)
        report.val_ll.append(val_ll)
        if progress is not None:
            progress(epoch, train_ll, val_ll)

    model = vector_to_model(vec, model)
    report.wall_time = time.perf_counter() - t0
    return model, report
