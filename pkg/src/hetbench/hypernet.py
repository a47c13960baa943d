"""Preference-conditioned hypernetwork for collaboration weighting.

An affine map theta = W r + b turns a preference vector r on the simplex into
model parameters. Training minimizes the r-scalarized sum of client losses
with r resampled uniformly each step; afterwards each client solves for the
preference that minimizes its own loss, and those preferences become the
collaboration matrix rows (fixed for the whole FL run).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidInput, NumericalError, ShapeMismatch
from .model import MlpModel, loss_and_grad, model_from_params, model_to_params
from .seeds import rng_from
from .vecmath import ParamVector, project_to_simplex

HN_STEPS = 2000
HN_LR = 0.05
PREF_STEPS = 300
PREF_LR = 0.1


@dataclass
class HyperNetwork:
    """Affine parameter generator: weight (P, N), bias (P,)."""

    weight: np.ndarray
    bias: np.ndarray
    target_shapes: tuple

    def __post_init__(self):
        w = np.asarray(self.weight, dtype=np.float64)
        b = np.asarray(self.bias, dtype=np.float64)
        if w.ndim != 2 or b.shape != (w.shape[0],):
            raise ShapeMismatch("weight must be (P, N) with bias length P")
        if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
            raise InvalidInput("hypernetwork parameters must be finite")
        self.weight, self.bias = w, b

    @property
    def num_params(self) -> int:
        return self.bias.shape[0]

    @property
    def num_clients(self) -> int:
        return self.weight.shape[1]


def make_hypernet(shared_init: MlpModel, num_clients: int) -> HyperNetwork:
    """Zero mixing matrix plus the shared model init as the bias."""
    if num_clients < 1:
        raise InvalidInput("need at least one client")
    params = model_to_params(shared_init)
    weight = np.zeros((params.flat.size, num_clients))
    return HyperNetwork(weight, params.flat.copy(), params.shapes)


def hn_forward(hn: HyperNetwork, r) -> ParamVector:
    r = np.asarray(r, dtype=np.float64)
    if r.shape != (hn.num_clients,):
        raise ShapeMismatch(f"preference must have length {hn.num_clients}")
    return ParamVector(hn.weight @ r + hn.bias, hn.target_shapes)


def _client_loss_grad(hn: HyperNetwork, theta: np.ndarray, features, labels):
    model = model_from_params(ParamVector(theta, hn.target_shapes))
    loss, grad = loss_and_grad(model, features, labels)
    return loss, grad.flat


def scalarized_grad(hn: HyperNetwork, r, batches) -> tuple:
    """Gradients of sum_k r_k * L_k(W r + b): returns (dW, db, loss).

    dW = g r^T and db = g with g = sum_k r_k grad_theta L_k(theta).
    """
    r = np.asarray(r, dtype=np.float64)
    if len(batches) != hn.num_clients:
        raise InvalidInput("one batch per client required")
    theta = hn.weight @ r + hn.bias
    g = np.zeros(hn.num_params)
    total = 0.0
    for r_k, (x, y) in zip(r, batches):
        loss_k, grad_k = _client_loss_grad(hn, theta, x, y)
        total += r_k * loss_k
        g += r_k * grad_k
    return np.outer(g, r), g, total


def hn_train(
    hn: HyperNetwork,
    train_splits,
    steps: int = HN_STEPS,
    lr: float = HN_LR,
    batch_size: int = 32,
    seed: int = 0,
) -> HyperNetwork:
    """SGD on the preference-scalarized loss; r resampled each step."""
    n = hn.num_clients
    if len(train_splits) != n:
        raise InvalidInput("one train split per client required")
    if steps < 1 or lr <= 0:
        raise InvalidInput("need steps >= 1 and lr > 0")
    weight = hn.weight.copy()
    bias = hn.bias.copy()
    for t in range(steps):
        rng = rng_from(seed, "hn-step", t)
        r = rng.dirichlet(np.ones(n))
        batches = []
        for x, y in train_splits:
            take = min(batch_size, y.shape[0])
            idx = rng.choice(y.shape[0], size=take, replace=False)
            batches.append((x[idx], y[idx]))
        step_hn = HyperNetwork(weight, bias, hn.target_shapes)
        d_weight, d_bias, _ = scalarized_grad(step_hn, r, batches)
        if not (np.all(np.isfinite(d_weight)) and np.all(np.isfinite(d_bias))):
            raise NumericalError("non-finite hypernetwork gradient")
        weight = weight - lr * d_weight
        bias = bias - lr * d_bias
    return HyperNetwork(weight, bias, hn.target_shapes)


def preference_grad(hn: HyperNetwork, r, features, labels) -> tuple:
    """Gradient of L_i(W r + b) with respect to r: W^T g; returns (grad, loss)."""
    r = np.asarray(r, dtype=np.float64)
    theta = hn.weight @ r + hn.bias
    loss, g = _client_loss_grad(hn, theta, features, labels)
    return hn.weight.T @ g, loss


def solve_preference(
    hn: HyperNetwork, features, labels, steps: int = PREF_STEPS, lr: float = PREF_LR
) -> np.ndarray:
    """Projected gradient descent from uniform; returns the best iterate."""
    n = hn.num_clients
    r = np.full(n, 1.0 / n)
    best_r = r.copy()
    _, best_loss = preference_grad(hn, r, features, labels)
    for _ in range(steps):
        grad, _ = preference_grad(hn, r, features, labels)
        if not np.all(np.isfinite(grad)):
            raise NumericalError("non-finite preference gradient")
        r = project_to_simplex(r - lr * grad)
        _, loss = preference_grad(hn, r, features, labels)
        if loss < best_loss:
            best_loss = loss
            best_r = r.copy()
    return best_r


@dataclass(frozen=True)
class PreferenceResult:
    """Per-client optimal preferences (the collaboration rows), generated
    parameters, and the achieved losses."""

    alpha: np.ndarray  # (N, N), row i = r_i*
    personalized: list  # ParamVector per client
    losses: np.ndarray  # (N,)


def ce_alpha_matrix(
    hn: HyperNetwork, train_splits, steps: int = PREF_STEPS, lr: float = PREF_LR
) -> PreferenceResult:
    """Solve every client's preference against the frozen hypernetwork."""
    n = hn.num_clients
    if len(train_splits) != n:
        raise InvalidInput("one train split per client required")
    alpha = np.zeros((n, n))
    personalized = []
    losses = np.zeros(n)
    for i, (x, y) in enumerate(train_splits):
        r_star = solve_preference(hn, x, y, steps, lr)
        alpha[i] = r_star
        params = hn_forward(hn, r_star)
        personalized.append(params)
        model = model_from_params(params)
        losses[i] = loss_and_grad(model, x, y)[0]
    return PreferenceResult(alpha, personalized, losses)
