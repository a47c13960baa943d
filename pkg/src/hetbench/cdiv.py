"""Classifier-based pairwise divergence and coalition formation (FedCollab).

The divergence between two clients is estimated by how well a linear logistic
discriminator separates their (feature, one-hot label) samples:
D = |Pr_i[f=1] + Pr_j[f=0] - 1| on held-out data, 0 for indistinguishable
splits and 1 for perfectly separable ones. Clients are then grouped by greedy
local search on a cost that trades a 1/sqrt(coalition size) sampling term
against size-weighted within-coalition divergence; each coalition aggregates
internally with data-size weights.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidInput
from .seeds import rng_from


@dataclass(frozen=True)
class CollabConfig:
    steps: int = 300
    lr: float = 0.05
    holdout_fraction: float = 0.25
    q1: float = 1.0
    q2: float = 0.25

    def __post_init__(self):
        if self.steps < 1 or self.lr <= 0:
            raise InvalidInput("need steps >= 1 and lr > 0")
        if not (0.0 < self.holdout_fraction < 1.0):
            raise InvalidInput("holdout_fraction must be in (0, 1)")
        if self.q1 < 0 or self.q2 < 0:
            raise InvalidInput("q1 and q2 must be >= 0")


def _encode(features: np.ndarray, labels: np.ndarray, num_classes: int) -> np.ndarray:
    onehot = np.zeros((labels.size, num_classes))
    onehot[np.arange(labels.size), labels] = 1.0
    return np.hstack([features, onehot])


def estimate_cdiv_pair(
    features_i: np.ndarray,
    labels_i: np.ndarray,
    features_j: np.ndarray,
    labels_j: np.ndarray,
    num_classes: int,
    cfg: CollabConfig,
    seed: int,
) -> float:
    """Held-out discriminability of client i's samples from client j's.

    The larger side is subsampled to balance the classes, a quarter of each
    side is held out, and a zero-initialized linear logistic model is fit with
    full-batch gradient descent on standardized inputs (the raw feature scale
    is otherwise too poorly conditioned for the fixed step budget). Returns a
    value clamped into [0, 1].
    """
    xi = np.asarray(features_i, dtype=np.float64)
    xj = np.asarray(features_j, dtype=np.float64)
    yi = np.asarray(labels_i, dtype=np.int64)
    yj = np.asarray(labels_j, dtype=np.int64)
    if xi.ndim != 2 or xj.ndim != 2 or xi.shape[1] != xj.shape[1]:
        raise InvalidInput("feature matrices must be 2-D with equal dim")
    if yi.shape != (xi.shape[0],) or yj.shape != (xj.shape[0],):
        raise InvalidInput("label shapes do not match features")
    if min(xi.shape[0], xj.shape[0]) < 4:
        raise InvalidInput("need at least 4 samples per side")
    rng = rng_from(seed, "cdiv-pair")
    size = min(xi.shape[0], xj.shape[0])
    keep_i = rng.choice(xi.shape[0], size=size, replace=False)
    keep_j = rng.choice(xj.shape[0], size=size, replace=False)
    zi = _encode(xi[keep_i], yi[keep_i], num_classes)
    zj = _encode(xj[keep_j], yj[keep_j], num_classes)
    n_hold = max(1, int(round(cfg.holdout_fraction * size)))
    if n_hold >= size:
        n_hold = size - 1
    perm_i = rng.permutation(size)
    perm_j = rng.permutation(size)
    hold_i, train_i = zi[perm_i[:n_hold]], zi[perm_i[n_hold:]]
    hold_j, train_j = zj[perm_j[:n_hold]], zj[perm_j[n_hold:]]

    x = np.vstack([train_i, train_j])
    mean = x.mean(axis=0)
    std = x.std(axis=0)
    std = np.where(std > 0.0, std, 1.0)
    x = np.hstack([(x - mean) / std, np.ones((x.shape[0], 1))])  # bias column
    t = np.concatenate([np.ones(train_i.shape[0]), np.zeros(train_j.shape[0])])
    w = np.zeros(x.shape[1])
    for _ in range(cfg.steps):
        z = np.clip(x @ w, -500.0, 500.0)
        p = 1.0 / (1.0 + np.exp(-z))
        w -= cfg.lr * (x.T @ (p - t)) / x.shape[0]

    def predict_one(block):
        scaled = (block - mean) / std
        with_bias = np.hstack([scaled, np.ones((block.shape[0], 1))])
        return (with_bias @ w > 0.0).astype(np.float64)

    pr_i_one = float(predict_one(hold_i).mean())
    pr_j_zero = float(1.0 - predict_one(hold_j).mean())
    return float(np.clip(abs(pr_i_one + pr_j_zero - 1.0), 0.0, 1.0))


def estimate_cdiv_matrix(splits: list, num_classes: int, cfg: CollabConfig, seed: int) -> np.ndarray:
    """Pairwise matrix over per-client (features, labels) tuples.

    Each unordered pair is estimated once (lower client id first, pair-keyed
    seed) and mirrored, so the result is exactly symmetric with a zero diagonal.
    """
    n = len(splits)
    if n < 1:
        raise InvalidInput("need at least one client split")
    out = np.zeros((n, n))
    for i in range(n):
        for j in range(i + 1, n):
            xi, yi = splits[i]
            xj, yj = splits[j]
            out[i, j] = out[j, i] = estimate_cdiv_pair(
                xi, yi, xj, yj, num_classes, cfg, rng_from(seed, "cdiv", i, j).integers(2**31)
            )
    return out


def _check_cost_inputs(divergences: np.ndarray, sizes: np.ndarray):
    d = np.asarray(divergences, dtype=np.float64)
    m = np.asarray(sizes, dtype=np.float64)
    n = d.shape[0]
    if d.shape != (n, n) or m.shape != (n,):
        raise InvalidInput("divergences must be (n, n) and sizes (n,)")
    if not np.allclose(d, d.T, atol=1e-9) or np.any(np.abs(np.diag(d)) > 1e-12):
        raise InvalidInput("divergence matrix must be symmetric with zero diagonal")
    if np.any(d < -1e-12) or np.any(d > 1.0 + 1e-9):
        raise InvalidInput("divergences must lie in [0, 1]")
    if np.any(m < 1):
        raise InvalidInput("sizes must be >= 1")
    return d, m


def coalition_cost(
    assignment: tuple, divergences: np.ndarray, sizes: np.ndarray, q1: float, q2: float
) -> float:
    """sum_i [ q1 / sqrt(M_{C(i)}) + q2 * sum_{j in C(i)} (m_j / M_{C(i)}) D_ij ]."""
    d, m = _check_cost_inputs(divergences, sizes)
    n = d.shape[0]
    labels = np.asarray(assignment, dtype=np.int64)
    if labels.shape != (n,):
        raise InvalidInput("assignment length must match the divergence matrix")
    total = 0.0
    for cid in np.unique(labels):
        members = np.nonzero(labels == cid)[0]
        mass = m[members].sum()
        for i in members:
            total += q1 / np.sqrt(mass)
            total += q2 * float(np.dot(m[members] / mass, d[i, members]))
    return total


@dataclass(frozen=True)
class CoalitionStructure:
    """Client -> coalition id map, ids numbered by first appearance."""

    assignment: tuple

    def __post_init__(self):
        labels = list(self.assignment)
        if not labels:
            raise InvalidInput("empty assignment")
        remap, canon = {}, []
        for cid in labels:
            if cid not in remap:
                remap[cid] = len(remap)
            canon.append(remap[cid])
        object.__setattr__(self, "assignment", tuple(canon))

    @property
    def num_coalitions(self) -> int:
        return len(set(self.assignment))

    def members(self, cid: int) -> tuple:
        return tuple(i for i, c in enumerate(self.assignment) if c == cid)


def optimize_coalitions(
    divergences: np.ndarray, sizes: np.ndarray, q1: float, q2: float, seed: int = 0
) -> CoalitionStructure:
    """Greedy local search from all-singletons.

    Repeatedly applies the single-client move (to another coalition or to a
    fresh one) with the largest cost reduction; ties prefer the lowest client
    index, then the lowest target coalition id, with a fresh coalition
    considered last. Deterministic; ``seed`` is unused by this reference
    search and kept for interface stability.
    """
    d, m = _check_cost_inputs(divergences, sizes)
    n = d.shape[0]
    labels = list(range(n))
    current = coalition_cost(tuple(labels), d, m, q1, q2)
    while True:
        best_cost, best_move = current - 1e-12, None
        for client in range(n):
            old = labels[client]
            targets = sorted(set(labels) - {old})
            fresh = max(labels) + 1
            if sum(1 for c in labels if c == old) > 1:
                targets.append(fresh)  # moving out of a singleton to fresh is a no-op
            for target in targets:
                labels[client] = target
                cost = coalition_cost(tuple(labels), d, m, q1, q2)
                if cost < best_cost - 1e-12:
                    best_cost, best_move = cost, (client, target)
            labels[client] = old
        if best_move is None:
            return CoalitionStructure(tuple(labels))
        labels[best_move[0]] = best_move[1]
        current = best_cost


def coalitions_to_alpha(structure: CoalitionStructure, sizes: np.ndarray) -> np.ndarray:
    """Within-coalition data-size weights; zero across coalitions."""
    m = np.asarray(sizes, dtype=np.float64)
    n = len(structure.assignment)
    if m.shape != (n,) or np.any(m < 1):
        raise InvalidInput("sizes must be n positive entries")
    out = np.zeros((n, n))
    for cid in set(structure.assignment):
        members = np.array(structure.members(cid))
        mass = m[members].sum()
        for i in members:
            out[i, members] = m[members] / mass
    return out
