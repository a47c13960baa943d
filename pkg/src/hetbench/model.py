"""Plain-numpy MLP with ReLU hidden layers and a softmax head.

Gradients are hand-derived backprop over the exact log-softmax cross-entropy,
so they agree with central finite differences to first order. Everything runs
in float64 and is deterministic given the seeds passed in.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidInput, NumericalError, ShapeMismatch
from .seeds import rng_from
from .vecmath import ParamVector, flatten_params, unflatten_params

MAX_HIDDEN_LAYERS = 3


@dataclass
class MlpModel:
    """Layer list [(W, b), ...]; the final layer feeds the softmax."""

    layers: list

    def __post_init__(self):
        if not self.layers:
            raise InvalidInput("model needs at least one layer")
        for w, b in self.layers:
            if w.ndim != 2 or b.ndim != 1 or b.size != w.shape[1]:
                raise ShapeMismatch("inconsistent layer arrays")
        for (_, b_prev), (w_next, _) in zip(self.layers, self.layers[1:]):
            if b_prev.size != w_next.shape[0]:
                raise ShapeMismatch("consecutive layers disagree on width")

    @property
    def dim_in(self) -> int:
        return self.layers[0][0].shape[0]

    @property
    def num_classes(self) -> int:
        return self.layers[-1][0].shape[1]

    @property
    def shapes(self) -> tuple:
        return tuple((w.shape[0], w.shape[1]) for w, _ in self.layers)

    def copy(self) -> "MlpModel":
        return MlpModel([(w.copy(), b.copy()) for w, b in self.layers])


@dataclass
class SgdState:
    """Momentum SGD hyperparameters; velocity starts at zero when None."""

    learning_rate: float = 0.01
    momentum: float = 0.9
    velocity: np.ndarray | None = None

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise InvalidInput("learning_rate must be > 0")
        if not (0.0 <= self.momentum < 1.0):
            raise InvalidInput("momentum must be in [0, 1)")


@dataclass(frozen=True)
class LossReport:
    mean_loss: float
    accuracy: float
    count: int


def init_mlp(dim_in: int, hidden: tuple, num_classes: int, seed: int) -> MlpModel:
    """Glorot-uniform weights, zero biases. ``hidden`` may be empty (softmax
    regression) and holds at most MAX_HIDDEN_LAYERS widths."""
    if dim_in < 1 or num_classes < 2:
        raise InvalidInput("need dim_in >= 1 and num_classes >= 2")
    hidden = tuple(int(h) for h in hidden)
    if any(h < 1 for h in hidden):
        raise InvalidInput("hidden widths must be >= 1")
    if len(hidden) > MAX_HIDDEN_LAYERS:
        raise InvalidInput(f"at most {MAX_HIDDEN_LAYERS} hidden layers supported")
    rng = rng_from(seed, "init")
    widths = (dim_in,) + hidden + (num_classes,)
    layers = []
    for fan_in, fan_out in zip(widths, widths[1:]):
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        layers.append(
            (rng.uniform(-limit, limit, size=(fan_in, fan_out)), np.zeros(fan_out))
        )
    return MlpModel(layers)


def model_to_params(model: MlpModel) -> ParamVector:
    return flatten_params(model.layers)


def model_from_params(pv: ParamVector) -> MlpModel:
    return MlpModel(unflatten_params(pv))


def _log_softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def _forward_cached(model: MlpModel, x: np.ndarray):
    """Returns (activations per layer input, logits)."""
    acts = [x]
    h = x
    for w, b in model.layers[:-1]:
        h = np.maximum(h @ w + b, 0.0)
        acts.append(h)
    w, b = model.layers[-1]
    return acts, h @ w + b


def _check_batch(model: MlpModel, x: np.ndarray, y: np.ndarray | None = None):
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != model.dim_in:
        raise ShapeMismatch(f"batch shape {x.shape} does not match dim_in {model.dim_in}")
    if x.shape[0] < 1:
        raise InvalidInput("empty batch")
    if y is None:
        return x, None
    y = np.asarray(y, dtype=np.int64)
    if y.shape != (x.shape[0],):
        raise ShapeMismatch("labels do not match batch rows")
    if y.min() < 0 or y.max() >= model.num_classes:
        raise InvalidInput("labels out of range")
    return x, y


def forward(model: MlpModel, x: np.ndarray) -> np.ndarray:
    """Class probabilities, rows summing to 1. All-zero parameters yield the
    uniform distribution."""
    x, _ = _check_batch(model, x)
    _, logits = _forward_cached(model, x)
    return np.exp(_log_softmax(logits))


def loss_and_grad(model: MlpModel, x: np.ndarray, y: np.ndarray):
    """Mean cross-entropy over the batch and its gradient as a ParamVector."""
    x, y = _check_batch(model, x, y)
    acts, logits = _forward_cached(model, x)
    log_probs = _log_softmax(logits)
    n = x.shape[0]
    loss = float(-log_probs[np.arange(n), y].mean())
    delta = np.exp(log_probs)
    delta[np.arange(n), y] -= 1.0
    delta /= n
    grads = [None] * len(model.layers)
    for layer in range(len(model.layers) - 1, -1, -1):
        w, _ = model.layers[layer]
        grads[layer] = (acts[layer].T @ delta, delta.sum(axis=0))
        if layer > 0:
            delta = (delta @ w.T) * (acts[layer] > 0.0)
    if not np.isfinite(loss):
        raise NumericalError("non-finite loss")
    return loss, flatten_params(grads)


def evaluate(model: MlpModel, x: np.ndarray, y: np.ndarray) -> LossReport:
    """Mean cross-entropy and top-1 accuracy (argmax, ties to the lowest class)."""
    x, y = _check_batch(model, x, y)
    _, logits = _forward_cached(model, x)
    log_probs = _log_softmax(logits)
    n = x.shape[0]
    loss = float(-log_probs[np.arange(n), y].mean())
    accuracy = float((np.argmax(log_probs, axis=1) == y).mean())
    return LossReport(loss, accuracy, n)


def local_train(
    model: MlpModel,
    x: np.ndarray,
    y: np.ndarray,
    epochs: int,
    batch_size: int,
    sgd: SgdState,
    seed: int,
) -> MlpModel:
    """Minibatch momentum SGD; returns a trained copy, inputs untouched.

    velocity <- momentum * velocity - lr * grad; params += velocity.
    The shuffle order is drawn from (seed, epoch) so equal seeds reproduce
    training bit-for-bit.
    """
    if epochs < 0 or batch_size < 1:
        raise InvalidInput("need epochs >= 0 and batch_size >= 1")
    x, y = _check_batch(model, x, y)
    out = model.copy()
    velocity = (
        np.zeros(model_to_params(out).flat.size)
        if sgd.velocity is None
        else sgd.velocity.copy()
    )
    n = x.shape[0]
    for epoch in range(epochs):
        order = rng_from(seed, "shuffle", epoch).permutation(n)
        for start in range(0, n, batch_size):
            batch = order[start : start + batch_size]
            _, grad = loss_and_grad(out, x[batch], y[batch])
            velocity = sgd.momentum * velocity - sgd.learning_rate * grad.flat
            pv = model_to_params(out)
            out = model_from_params(ParamVector(pv.flat + velocity, pv.shapes))
    return out
