"""Feed-forward softmax classifier with exact reverse-mode gradients.

The network maps R^d to K logits through tanh hidden layers; softmax of the
logits is the classifying weight vector w(z), a point on the probability
simplex for every input. Gradients are computed by hand-rolled backprop for
all weights, biases, and the input, so the surrounding mixture code can route
chain-rule terms through both the classifier parameters and its input.
"""

from dataclasses import dataclass

import numpy as np

from .rng import RngHandle, SIMPLEX_TOL


def log_softmax(logits):
    """logits - log_sum_exp(logits) along the last axis; exp sums to 1."""
    a = np.asarray(logits, dtype=np.float64)
    if not np.all(np.isfinite(a)):
        raise ValueError("log_softmax requires finite logits")
    m = np.max(a, axis=-1, keepdims=True)
    shifted = a - m
    return shifted - np.log(np.sum(np.exp(shifted), axis=-1, keepdims=True))


def softmax(logits):
    return np.exp(log_softmax(logits))


@dataclass
class ClassifierGrads:
    """Gradients congruent with an MlpClassifier, plus the input gradient.

    For batched backprop the parameter gradients are summed over rows and
    ``d_input`` keeps the per-row input gradients.
    """

    d_weights: list
    d_biases: list
    d_input: np.ndarray


class MlpClassifier:
    """Fully connected tanh network producing K logits.

    ``weights[i]`` has shape (layer_sizes[i], layer_sizes[i+1]) so the forward
    pass is ``a @ W + b`` on row batches; the final layer is linear.
    """

    def __init__(self, weights, biases):
        weights = [np.asarray(w, dtype=np.float64) for w in weights]
        biases = [np.asarray(b, dtype=np.float64) for b in biases]
        if len(weights) == 0 or len(weights) != len(biases):
            raise ValueError("need matching non-empty weight and bias lists")
        sizes = [weights[0].shape[0]]
        for w, b in zip(weights, biases):
            if w.ndim != 2 or b.ndim != 1 or w.shape[1] != b.shape[0]:
                raise ValueError("weight/bias shape mismatch")
            if w.shape[0] != sizes[-1]:
                raise ValueError("consecutive layer shapes do not chain")
            if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
                raise ValueError("parameters must be finite")
            sizes.append(w.shape[1])
        self.weights = weights
        self.biases = biases
        self.layer_sizes = sizes

    @property
    def input_dim(self) -> int:
        return self.layer_sizes[0]

    @property
    def n_classes(self) -> int:
        return self.layer_sizes[-1]

    @classmethod
    def random_init(cls, layer_sizes, rng: RngHandle) -> "MlpClassifier":
        """Glorot-uniform weights in +-sqrt(6 / (fan_in + fan_out)), zero biases."""
        if len(layer_sizes) < 2:
            raise ValueError("layer_sizes needs at least input and output sizes")
        weights, biases = [], []
        for n_in, n_out in zip(layer_sizes[:-1], layer_sizes[1:]):
            limit = np.sqrt(6.0 / (n_in + n_out))
            w = (2.0 * rng.uniform((n_in, n_out)) - 1.0) * limit
            weights.append(w)
            biases.append(np.zeros(n_out))
        return cls(weights, biases)

    def logits(self, z):
        """Forward pass; a 1-D input returns a length-K vector, rows map to rows."""
        z2, squeeze = self._as_rows(z)
        out, _ = self.forward_cache(z2)
        return out[0] if squeeze else out

    def log_weights(self, z):
        """log w(z) = log_softmax(logits(z))."""
        return log_softmax(self.logits(z))

    def forward_cache(self, z_rows):
        """(logits, activations) for a (m, d) batch; activations[0] is the input."""
        acts = [np.asarray(z_rows, dtype=np.float64)]
        a = acts[0]
        for w, b in zip(self.weights[:-1], self.biases[:-1]):
            h = a @ w
            h += b
            a = np.tanh(h, out=h)
            acts.append(a)
        logits = a @ self.weights[-1]
        logits += self.biases[-1]
        return logits, acts

    def backprop(self, z, upstream, acts=None) -> ClassifierGrads:
        """Reverse-mode gradients given upstream = dL/dlogits.

        Parameter gradients are exact and summed over batch rows; ``d_input``
        has one row of dL/dz per input row (or a vector for a 1-D input).
        Pass the activations list of a prior forward_cache(z) call as ``acts``
        to skip recomputing the forward pass; the hidden-layer buffers are
        consumed as scratch, so a cache must not be passed twice.
        """
        z2, squeeze = self._as_rows(z)
        u2 = np.asarray(upstream, dtype=np.float64)
        if squeeze:
            u2 = u2[None, :]
        if u2.shape != (z2.shape[0], self.n_classes):
            raise ValueError("upstream shape must match (rows, n_classes)")
        if acts is None:
            _, acts = self.forward_cache(z2)
        d_weights = [None] * len(self.weights)
        d_biases = [None] * len(self.biases)
        delta = u2
        for layer in range(len(self.weights) - 1, -1, -1):
            d_weights[layer] = acts[layer].T @ delta
            d_biases[layer] = delta.sum(axis=0)
            g = delta @ self.weights[layer].T
            if layer > 0:
                # tanh'(h) = 1 - tanh(h)^2, written into the (now spent)
                # activation buffer to avoid large temporaries
                a = acts[layer]
                np.multiply(a, a, out=a)
                np.subtract(1.0, a, out=a)
                delta = np.multiply(g, a, out=a)
            else:
                d_input = g
        return ClassifierGrads(d_weights, d_biases, d_input[0] if squeeze else d_input)

    def copy(self) -> "MlpClassifier":
        return MlpClassifier([w.copy() for w in self.weights], [b.copy() for b in self.biases])

    def _as_rows(self, z):
        z = np.asarray(z, dtype=np.float64)
        if z.ndim == 1:
            z = z[None, :]
            squeeze = True
        elif z.ndim == 2:
            squeeze = False
        else:
            raise ValueError("input must be a vector or a 2-D batch of rows")
        if z.shape[1] != self.input_dim:
            raise ValueError(
                f"dimension mismatch: classifier input dim {self.input_dim}, got {z.shape[1]}"
            )
        return z, squeeze


def make_constant_classifier(dim, pis, hidden_sizes=(64, 64), rng=None) -> "MlpClassifier":
    """Classifier whose output is the constant simplex vector ``pis``.

    Zeroing the last layer's weights masks everything upstream, and setting its
    biases to log(pis) makes softmax(logits) == pis for every input. Earlier
    layers are randomly initialized; they only start to matter once training
    moves the last layer away from zero.
    """
    pis = np.asarray(pis, dtype=np.float64)
    if pis.ndim != 1:
        raise ValueError("pis must be a vector")
    if np.any(pis <= 0):
        raise ValueError("pis must be strictly positive (log would be undefined)")
    if abs(float(pis.sum()) - 1.0) > SIMPLEX_TOL:
        raise ValueError("pis must sum to 1 within 1e-9")
    if rng is None:
        rng = RngHandle(0)
    sizes = [int(dim), *[int(h) for h in hidden_sizes], pis.size]
    clf = MlpClassifier.random_init(sizes, rng)
    clf.weights[-1] = np.zeros_like(clf.weights[-1])
    clf.biases[-1] = np.log(pis)
    return clf


