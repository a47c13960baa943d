"""Core numeric primitives shared by every scheme.

All routines work in float64 and are pure: inputs are never mutated.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidInput, ShapeMismatch, ZeroVector

# Tolerance for "sums to one" checks on probability vectors.
PROB_ATOL = 1e-9


def _as_vector(v, name: str) -> np.ndarray:
    arr = np.asarray(v, dtype=np.float64)
    if arr.ndim != 1 or arr.size == 0:
        raise InvalidInput(f"{name} must be a non-empty 1-D vector, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise InvalidInput(f"{name} contains non-finite entries")
    return arr


def check_prob_vector(p, name: str = "p", atol: float = PROB_ATOL) -> np.ndarray:
    """Validate that ``p`` is a probability vector and return it as float64.

    Entries must be >= 0 and sum to 1 within ``atol``.
    """
    arr = _as_vector(p, name)
    if np.any(arr < 0):
        raise InvalidInput(f"{name} has negative entries")
    total = float(arr.sum())
    if abs(total - 1.0) > atol:
        raise InvalidInput(f"{name} sums to {total!r}, expected 1 within {atol}")
    return arr


def project_to_simplex(v) -> np.ndarray:
    """Euclidean projection of ``v`` onto the probability simplex.

    Sort-and-threshold algorithm: O(n log n), deterministic, ties resolved
    by the stable descending sort (equal inputs project to equal outputs).
    """
    arr = _as_vector(v, "v")
    u = np.sort(arr)[::-1]
    css = np.cumsum(u)
    ks = np.arange(1, arr.size + 1, dtype=np.float64)
    # Largest k with u_k + (1 - sum_{i<=k} u_i)/k > 0.
    cond = u + (1.0 - css) / ks > 0.0
    rho = int(np.nonzero(cond)[0][-1])
    tau = (1.0 - css[rho]) / (rho + 1.0)
    out = np.maximum(arr + tau, 0.0)
    # Kill the residual so the invariant sum == 1 holds to float precision.
    s = out.sum()
    if s <= 0.0:  # cannot happen for finite input, guard anyway
        raise InvalidInput("projection collapsed to the zero vector")
    return out / s


def cosine_similarity(a, b) -> float:
    """cos(a, b) = <a, b> / (|a| |b|), clipped into [-1, 1]."""
    va = _as_vector(a, "a")
    vb = _as_vector(b, "b")
    if va.shape != vb.shape:
        raise ShapeMismatch(f"cosine: shapes {va.shape} vs {vb.shape}")
    na = float(np.linalg.norm(va))
    nb = float(np.linalg.norm(vb))
    if na == 0.0 or nb == 0.0:
        raise ZeroVector("cosine similarity undefined for zero-norm input")
    return float(np.clip(np.dot(va, vb) / (na * nb), -1.0, 1.0))


def euclidean_distance(a, b) -> float:
    va = _as_vector(a, "a")
    vb = _as_vector(b, "b")
    if va.shape != vb.shape:
        raise ShapeMismatch(f"euclidean: shapes {va.shape} vs {vb.shape}")
    return float(np.linalg.norm(va - vb))


@dataclass(frozen=True)
class ParamVector:
    """Flattened model parameters plus the layer shapes needed to rebuild them.

    Layout: for each layer in order, the weight matrix (row-major) followed by
    its bias vector. ``shapes[l] = (fan_in, fan_out)``; the bias length is
    ``fan_out``.
    """

    flat: np.ndarray
    shapes: tuple[tuple[int, int], ...]

    def __post_init__(self):
        flat = np.asarray(self.flat, dtype=np.float64)
        if flat.ndim != 1:
            raise ShapeMismatch(f"flat must be 1-D, got shape {flat.shape}")
        object.__setattr__(self, "flat", flat)
        expected = expected_length(self.shapes)
        if flat.size != expected:
            raise ShapeMismatch(
                f"flat has {flat.size} entries, shapes {self.shapes} require {expected}"
            )


def expected_length(shapes: tuple[tuple[int, int], ...]) -> int:
    total = 0
    for shape in shapes:
        if len(shape) != 2 or shape[0] < 1 or shape[1] < 1:
            raise ShapeMismatch(f"bad layer shape {shape}")
        rows, cols = shape
        total += rows * cols + cols
    return total


def flatten_params(layers: list[tuple[np.ndarray, np.ndarray]]) -> ParamVector:
    """Pack [(W_0, b_0), (W_1, b_1), ...] into a single ParamVector."""
    if not layers:
        raise InvalidInput("flatten_params needs at least one layer")
    shapes = []
    chunks = []
    for weight, bias in layers:
        weight = np.asarray(weight, dtype=np.float64)
        bias = np.asarray(bias, dtype=np.float64)
        if weight.ndim != 2 or bias.ndim != 1 or bias.size != weight.shape[1]:
            raise ShapeMismatch(
                f"layer with W {weight.shape} and b {bias.shape} is inconsistent"
            )
        shapes.append((weight.shape[0], weight.shape[1]))
        chunks.append(weight.ravel())
        chunks.append(bias)
    return ParamVector(np.concatenate(chunks), tuple(shapes))


def unflatten_params(pv: ParamVector) -> list[tuple[np.ndarray, np.ndarray]]:
    """Inverse of :func:`flatten_params`; round-trips bit-for-bit."""
    layers = []
    offset = 0
    for rows, cols in pv.shapes:
        weight = pv.flat[offset : offset + rows * cols].reshape(rows, cols).copy()
        offset += rows * cols
        bias = pv.flat[offset : offset + cols].copy()
        offset += cols
        layers.append((weight, bias))
    return layers
