"""Distribution-space heterogeneity: KL/JS divergence and the pFedJS weights.

pFedJS turns pairwise Jensen-Shannon divergences between client label (or
joint label-feature) histograms into one collaboration row per client by
minimizing  q1 * sqrt(sum_j a_j^2 / m_j) + q2 * sum_j a_j D_ij  over the
probability simplex with projected gradient descent.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidInput, SupportError
from .vecmath import check_prob_vector, project_to_simplex


@dataclass(frozen=True)
class JsConfig:
    """Histogram space and solver hyperparameters for pFedJS."""

    space: str = "label"
    feature_bins: int = 10
    q1: float = 1.0
    q2: float = 5.0
    steps: int = 500
    lr: float = 0.05

    def __post_init__(self):
        if self.space not in ("label", "joint"):
            raise InvalidInput("space must be 'label' or 'joint'")
        if self.feature_bins < 1 or self.steps < 1 or self.lr <= 0:
            raise InvalidInput("need feature_bins >= 1, steps >= 1, lr > 0")
        if self.q1 < 0 or self.q2 < 0:
            raise InvalidInput("q1 and q2 must be >= 0")


def label_histogram(labels: np.ndarray, num_classes: int) -> np.ndarray:
    labels = np.asarray(labels, dtype=np.int64)
    if labels.ndim != 1 or labels.size == 0:
        raise InvalidInput("labels must be a non-empty 1-D array")
    if labels.min() < 0 or labels.max() >= num_classes:
        raise InvalidInput("labels out of range")
    counts = np.bincount(labels, minlength=num_classes).astype(np.float64)
    return counts / counts.sum()


def joint_histogram(
    features: np.ndarray,
    labels: np.ndarray,
    num_classes: int,
    bins: int,
    value_range: tuple | None = None,
) -> np.ndarray:
    """Histogram over (label, binned feature statistic) cells.

    The per-sample statistic is the mean over feature dimensions; bins are
    equal width across ``value_range`` (defaults to this split's min/max) and
    out-of-range values land in the edge bins, so one shared range can be used
    across clients.
    """
    features = np.asarray(features, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if features.ndim != 2 or features.shape[0] != labels.shape[0] or labels.size == 0:
        raise InvalidInput("features/labels shape mismatch or empty")
    if labels.min() < 0 or labels.max() >= num_classes:
        raise InvalidInput("labels out of range")
    if bins < 1:
        raise InvalidInput("bins must be >= 1")
    stat = features.mean(axis=1)
    lo, hi = value_range if value_range is not None else (stat.min(), stat.max())
    if not np.isfinite(lo) or not np.isfinite(hi) or hi < lo:
        raise InvalidInput(f"bad value range ({lo}, {hi})")
    if hi == lo:
        binned = np.zeros(stat.size, dtype=np.int64)
    else:
        binned = np.clip(((stat - lo) / (hi - lo) * bins).astype(np.int64), 0, bins - 1)
    cells = labels * bins + binned
    counts = np.bincount(cells, minlength=num_classes * bins).astype(np.float64)
    return counts / counts.sum()


def kl_divergence(p, q) -> float:
    """KL(P || Q) = sum_z P(z) ln(P(z)/Q(z)); natural log, zero-mass terms skipped."""
    p = check_prob_vector(p, "p")
    q = check_prob_vector(q, "q")
    if p.shape != q.shape:
        raise InvalidInput("p and q must share support")
    mask = p > 0.0
    if np.any(q[mask] == 0.0):
        raise SupportError("P has mass where Q is zero; KL(P||Q) is infinite")
    return float(np.sum(p[mask] * np.log(p[mask] / q[mask])))


def js_divergence(p, q) -> float:
    """Jensen-Shannon divergence (natural log, so the range is [0, ln 2])."""
    p = check_prob_vector(p, "p")
    q = check_prob_vector(q, "q")
    if p.shape != q.shape:
        raise InvalidInput("p and q must share support")
    m = 0.5 * (p + q)
    return 0.5 * kl_divergence(p, m) + 0.5 * kl_divergence(q, m)


def divergence_matrix(histograms: list) -> np.ndarray:
    """Symmetric zero-diagonal matrix of pairwise JS divergences."""
    n = len(histograms)
    if n < 1:
        raise InvalidInput("need at least one histogram")
    out = np.zeros((n, n))
    for i in range(n):
        for j in range(i + 1, n):
            d = js_divergence(histograms[i], histograms[j])
            out[i, j] = d
            out[j, i] = d
    return out


def solve_alpha_eq1(
    self_idx: int, div_row: np.ndarray, sample_counts: np.ndarray, cfg: JsConfig
) -> np.ndarray:
    """Minimize the generalization-style bound for one client's row.

    Projected gradient descent from the uniform row; returns the best iterate
    seen, so the result is never worse than uniform.
    """
    div_row = np.asarray(div_row, dtype=np.float64)
    counts = np.asarray(sample_counts, dtype=np.float64)
    n = div_row.size
    if counts.shape != (n,) or n < 1:
        raise InvalidInput("div_row and sample_counts must be equal-length vectors")
    if not (0 <= self_idx < n):
        raise InvalidInput("self_idx out of range")
    if np.any(div_row < 0) or not np.all(np.isfinite(div_row)):
        raise InvalidInput("divergences must be finite and >= 0")
    if abs(div_row[self_idx]) > 1e-12:
        raise InvalidInput("self-divergence must be zero")
    if np.any(counts < 1):
        raise InvalidInput("sample counts must be >= 1")

    def objective(alpha):
        return cfg.q1 * np.sqrt(np.sum(alpha**2 / counts)) + cfg.q2 * float(
            np.dot(alpha, div_row)
        )

    alpha = np.full(n, 1.0 / n)
    best = alpha.copy()
    best_obj = objective(alpha)
    # adaptive step keeps descent monotone: grow while improving so slow
    # drifts toward a vertex finish inside the budget, halve on a miss
    step = cfg.lr
    for _ in range(cfg.steps):
        root = np.sqrt(max(np.sum(alpha**2 / counts), 1e-30))
        grad = cfg.q1 * (alpha / counts) / root + cfg.q2 * div_row
        candidate = project_to_simplex(alpha - step * grad)
        obj = objective(candidate)
        if obj < best_obj:
            alpha, best, best_obj = candidate, candidate.copy(), obj
            step = min(step * 2.0, 1.0)
        else:
            step = max(step * 0.5, 1e-12)
    return best


def pfedjs_alpha_matrix(
    histograms: list, sample_counts: np.ndarray, cfg: JsConfig
) -> np.ndarray:
    """Row-stochastic collaboration matrix from per-client histograms."""
    div = divergence_matrix(histograms)
    counts = np.asarray(sample_counts, dtype=np.float64)
    if counts.shape != (div.shape[0],):
        raise InvalidInput("sample_counts must match the number of histograms")
    rows = [solve_alpha_eq1(i, div[i], counts, cfg) for i in range(div.shape[0])]
    return np.vstack(rows)
