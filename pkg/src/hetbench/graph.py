"""Graph-style collaboration rows.

Each client's aggregation row minimizes: empirical loss of the aggregated
model on a fixed validation batch, minus a cosine-similarity bonus toward
parameter-space neighbors. Rows are optimized with projected gradient descent
using the analytic gradient d/d_alpha_j = <grad_w L(w_bar), w_j> -
(lambda/2) cos(w_i, w_j), warm-started from the previous round.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidInput, NumericalError
from .model import loss_and_grad, model_from_params, model_to_params
from .seeds import rng_from
from .vecmath import ParamVector, check_prob_vector, cosine_similarity, project_to_simplex


@dataclass(frozen=True)
class GraphConfig:
    lam: float = 0.3
    inner_steps: int = 50
    inner_lr: float = 0.1
    loss_batch: int = 64

    def __post_init__(self):
        if self.lam < 0:
            raise InvalidInput("lam must be >= 0")
        if self.inner_steps < 1 or self.inner_lr <= 0 or self.loss_batch < 1:
            raise InvalidInput("need inner_steps >= 1, inner_lr > 0, loss_batch >= 1")


def _cosine_row(flats: np.ndarray, self_idx: int) -> np.ndarray:
    return np.array(
        [cosine_similarity(flats[self_idx], flats[j]) for j in range(flats.shape[0])]
    )


def objective_row(alpha_row, flats, self_idx, loss_fn, lam) -> float:
    """Loss of the row-aggregated parameters minus the cosine bonus."""
    alpha = check_prob_vector(alpha_row, "alpha_row", atol=1e-6)
    if flats.ndim != 2 or alpha.size != flats.shape[0]:
        raise InvalidInput("flats must be (N, P) matching the row length")
    w_bar = alpha @ flats
    loss = float(loss_fn(w_bar)[0])
    return loss - 0.5 * lam * float(alpha @ _cosine_row(flats, self_idx))


def grad_alpha_row(alpha_row, flats, self_idx, loss_fn, lam) -> np.ndarray:
    """Analytic gradient of objective_row with respect to the row."""
    alpha = np.asarray(alpha_row, dtype=np.float64)
    w_bar = alpha @ flats
    _, grad_flat = loss_fn(w_bar)
    g = flats @ np.asarray(grad_flat, dtype=np.float64)
    return g - 0.5 * lam * _cosine_row(flats, self_idx)


def optimize_alpha_row(self_idx, flats, loss_fn, cfg: GraphConfig, init=None) -> np.ndarray:
    """Projected gradient descent on the simplex; returns the best iterate."""
    n = flats.shape[0]
    alpha = (
        np.full(n, 1.0 / n) if init is None else check_prob_vector(init, "init", atol=1e-6)
    ).copy()
    cos_row = _cosine_row(flats, self_idx)

    def objective(a):
        w_bar = a @ flats
        return float(loss_fn(w_bar)[0]) - 0.5 * cfg.lam * float(a @ cos_row)

    best_alpha = alpha.copy()
    best_obj = objective(alpha)
    for _ in range(cfg.inner_steps):
        w_bar = alpha @ flats
        _, grad_flat = loss_fn(w_bar)
        g = flats @ np.asarray(grad_flat, dtype=np.float64) - 0.5 * cfg.lam * cos_row
        if not np.all(np.isfinite(g)):
            raise NumericalError("non-finite row gradient")
        alpha = project_to_simplex(alpha - cfg.inner_lr * g)
        obj = objective(alpha)
        if obj < best_obj:
            best_obj = obj
            best_alpha = alpha.copy()
    return best_alpha


def seeded_batch(features, labels, batch_size: int, seed_parts: tuple) -> tuple:
    """Fixed evaluation batch: same seed parts, same subset, any round."""
    n = labels.shape[0]
    if n == 0:
        raise InvalidInput("empty split")
    take = min(batch_size, n)
    idx = rng_from(*seed_parts).choice(n, size=take, replace=False)
    return features[idx], labels[idx]


def make_loss_callback(shapes, features, labels):
    """flat parameters -> (loss, flat gradient) on a fixed batch."""

    def callback(flat):
        model = model_from_params(ParamVector(np.asarray(flat, dtype=np.float64), shapes))
        loss, grad = loss_and_grad(model, features, labels)
        return loss, grad.flat

    return callback


def pfedgraph_round(models, val_splits, cfg: GraphConfig, prev_alpha=None, seed=0):
    """Optimize every client's row against the round-start snapshot.

    ``val_splits`` holds one (features, labels) pair per client; a seeded
    subsample of at most cfg.loss_batch points forms the fixed loss batch.
    Rows warm-start from ``prev_alpha`` when given.
    """
    n = len(models)
    if n < 2:
        raise InvalidInput("need at least two clients")
    if len(val_splits) != n:
        raise InvalidInput("one validation split per client required")
    if prev_alpha is not None and np.asarray(prev_alpha).shape != (n, n):
        raise InvalidInput("prev_alpha must be (N, N)")
    params = [model_to_params(m) for m in models]
    flats = np.stack([p.flat for p in params])
    alpha = np.zeros((n, n))
    for i in range(n):
        x, y = val_splits[i]
        bx, by = seeded_batch(x, y, cfg.loss_batch, (seed, "graph-batch", i))
        loss_fn = make_loss_callback(params[i].shapes, bx, by)
        init = None if prev_alpha is None else prev_alpha[i]
        alpha[i] = optimize_alpha_row(i, flats, loss_fn, cfg, init)
    return alpha
