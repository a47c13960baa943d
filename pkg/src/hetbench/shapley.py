"""Shapley-value collaboration weighting.

Each round, every client picks its top-K peers by relevance score, computes
exact Shapley values of those peers' models on its own validation split,
folds them into a relevance EMA, and converts them to an aggregation row:
raw_j = max(sv_j, 0) / ||w_i - w_j||, self weight fixed, rest proportional.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import CoalitionTooLarge, InvalidInput, NumericalError
from .model import MlpModel, evaluate, model_from_params, model_to_params
from .vecmath import ParamVector, euclidean_distance

EFFICIENCY_ATOL = 1e-9


@dataclass
class RelevanceState:
    """Per-client relevance rows phi (N, N), smoothed across rounds."""

    phi: np.ndarray
    ema_eta: float
    top_k: int

    def __post_init__(self):
        phi = np.asarray(self.phi, dtype=np.float64)
        n = phi.shape[0]
        if phi.shape != (n, n) or not np.all(np.isfinite(phi)):
            raise InvalidInput("phi must be a finite square matrix")
        if not 0.0 <= self.ema_eta <= 1.0:
            raise InvalidInput("ema_eta must be in [0, 1]")
        if not 1 <= self.top_k <= n - 1:
            raise InvalidInput(f"top_k must be in [1, {n - 1}]")
        self.phi = phi

    @property
    def num_clients(self) -> int:
        return self.phi.shape[0]


def initial_relevance(num_clients: int, top_k: int, ema_eta: float = 0.5) -> RelevanceState:
    if num_clients < 2:
        raise InvalidInput("need at least two clients")
    phi = np.full((num_clients, num_clients), 1.0 / num_clients)
    return RelevanceState(phi, ema_eta, top_k)


@dataclass(frozen=True)
class SvResult:
    """Shapley values aligned with the coalition's member order."""

    coalition: tuple
    values: np.ndarray


def make_model_utility(self_model: MlpModel, models: dict, x_val, y_val):
    """V(S): accuracy of the unweighted mean of the members' models on the
    caller's validation split; V(empty) falls back to the caller's own model.

    ``models`` maps client id -> MlpModel. The returned callable accepts a
    tuple of member ids.
    """
    x = np.asarray(x_val, dtype=np.float64)
    y = np.asarray(y_val, dtype=np.int64)
    if x.shape[0] == 0:
        raise InvalidInput("validation split is empty")

    def utility(ids: tuple) -> float:
        if len(ids) == 0:
            return evaluate(self_model, x, y).accuracy
        flats = [model_to_params(models[j]).flat for j in ids]
        shapes = model_to_params(models[ids[0]]).shapes
        blended = model_from_params(ParamVector(np.mean(flats, axis=0), shapes))
        return evaluate(blended, x, y).accuracy

    return utility


def exact_shapley(coalition, utility) -> SvResult:
    """Subset-enumeration Shapley values for every coalition member.

    Uses the standard weighting |S|! (k-1-|S|)! / k!, which equals the average
    marginal contribution over all k! join orders. The utility callable
    receives member ids as a tuple in coalition order.
    """
    members = tuple(coalition)
    k = len(members)
    if k == 0:
        raise InvalidInput("coalition is empty")
    if k > 10:
        raise CoalitionTooLarge(f"coalition of {k} needs 2^{k} utility calls")

    cache = {}

    def value(mask: int) -> float:
        if mask not in cache:
            ids = tuple(members[b] for b in range(k) if mask >> b & 1)
            v = float(utility(ids))
            if not math.isfinite(v):
                raise NumericalError("utility returned a non-finite value")
            cache[mask] = v
        return cache[mask]

    fact = [math.factorial(t) for t in range(k + 1)]
    values = np.zeros(k)
    full = (1 << k) - 1
    for b in range(k):
        bit = 1 << b
        for mask in range(full + 1):
            if mask & bit:
                continue
            t = bin(mask).count("1")
            weight = fact[t] * fact[k - 1 - t] / fact[k]
            values[b] += weight * (value(mask | bit) - value(mask))
    gap = abs(values.sum() - (value(full) - value(0)))
    if gap > EFFICIENCY_ATOL:
        raise NumericalError(f"efficiency axiom violated by {gap:.3e}")
    return SvResult(members, values)


def update_relevance(state: RelevanceState, i: int, sv: SvResult) -> RelevanceState:
    """phi_j <- eta * phi_j + (1 - eta) * sv_j for coalition members only."""
    n = state.num_clients
    if not 0 <= i < n:
        raise InvalidInput("client index out of range")
    if any(not 0 <= j < n for j in sv.coalition):
        raise InvalidInput("coalition members out of range")
    phi = state.phi.copy()
    eta = state.ema_eta
    for j, value in zip(sv.coalition, sv.values):
        phi[i, j] = eta * phi[i, j] + (1.0 - eta) * value
    return RelevanceState(phi, eta, state.top_k)


def top_k_peers(state: RelevanceState, i: int) -> tuple:
    """K peers j != i with the largest phi[i, j]; ties go to lower index."""
    n = state.num_clients
    others = np.array([j for j in range(n) if j != i])
    order = np.lexsort((others, -state.phi[i, others]))
    return tuple(int(j) for j in others[order][: state.top_k])


def alpha_row_from_sv(
    i: int, sv: SvResult, models: dict, num_clients: int, self_weight: float = 0.4
) -> np.ndarray:
    """Aggregation row: clipped SV over parameter distance, fixed self mass.

    All-nonpositive SVs (or zero distances clamped away) collapse to a
    one-hot self row, keeping the client on its own model.
    """
    if not 0.0 <= self_weight < 1.0:
        raise InvalidInput("self_weight must be in [0, 1)")
    flat_i = model_to_params(models[i]).flat
    raw = np.zeros(num_clients)
    for j, value in zip(sv.coalition, sv.values):
        if j == i:
            raise InvalidInput("coalition must exclude the client itself")
        dist = euclidean_distance(flat_i, model_to_params(models[j]).flat)
        raw[j] = max(float(value), 0.0) / max(dist, 1e-9)
    row = np.zeros(num_clients)
    if raw.sum() <= 0.0:
        row[i] = 1.0
        return row
    row = (1.0 - self_weight) * raw / raw.sum()
    row[i] = self_weight
    return row


def pfedsv_round(
    state: RelevanceState,
    models: list,
    val_splits: list,
    self_weight: float = 0.4,
) -> tuple:
    """One relevance round: returns (alpha matrix, updated state).

    ``val_splits`` holds one (features, labels) pair per client.
    """
    n = state.num_clients
    if len(models) != n or len(val_splits) != n:
        raise InvalidInput("models/val_splits must have one entry per client")
    model_map = dict(enumerate(models))
    alpha = np.zeros((n, n))
    for i in range(n):
        coalition = top_k_peers(state, i)
        x_val, y_val = val_splits[i]
        utility = make_model_utility(models[i], model_map, x_val, y_val)
        sv = exact_shapley(coalition, utility)
        state = update_relevance(state, i, sv)
        alpha[i] = alpha_row_from_sv(i, sv, model_map, n, self_weight)
    return alpha, state
