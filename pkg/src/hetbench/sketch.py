"""RACE-style count sketches for cheap distribution comparison.

Each of R hash functions projects an augmented point z = (x, gamma * onehot(y))
onto p Gaussian directions and packs the signs into a bin id in [0, 2^p); a
dataset's sketch is the R x 2^p matrix of bin counts. Clients are compared to
the average of all normalized sketches, and inverse distances become the
selection probabilities used to sample the training cohort.
"""

from __future__ import annotations

import io
from dataclasses import dataclass

import numpy as np

from .errors import InvalidInput, ShapeMismatch
from .seeds import rng_from
from .vecmath import check_prob_vector


@dataclass(frozen=True)
class LshFamily:
    """R independent p-bit signed-projection hashes over R^(dim + C)."""

    directions: np.ndarray  # (R, p, dim + num_classes)
    label_scale: float
    num_classes: int

    def __post_init__(self):
        if self.directions.ndim != 3:
            raise ShapeMismatch("directions must be (R, p, dim + C)")
        if self.num_classes < 1 or self.label_scale < 0:
            raise InvalidInput("need num_classes >= 1 and label_scale >= 0")

    @property
    def num_tables(self) -> int:
        return self.directions.shape[0]

    @property
    def bits(self) -> int:
        return self.directions.shape[1]

    @property
    def num_bins(self) -> int:
        return 2 ** self.bits

    @property
    def dim(self) -> int:
        return self.directions.shape[2] - self.num_classes


def make_lsh(
    num_tables: int, bits: int, dim: int, num_classes: int, label_scale: float, seed: int
) -> LshFamily:
    if num_tables < 1 or bits < 1 or dim < 1:
        raise InvalidInput("need num_tables >= 1, bits >= 1, dim >= 1")
    if bits > 20:
        raise InvalidInput("bits > 20 would allocate more than a million bins per table")
    rng = rng_from(seed, "lsh")
    directions = rng.standard_normal((num_tables, bits, dim + num_classes))
    return LshFamily(directions, float(label_scale), num_classes)


def hash_points(lsh: LshFamily, features: np.ndarray, labels: np.ndarray) -> np.ndarray:
    """Bin ids, shape (n, R); bit k of a bin is the sign of projection k."""
    x = np.asarray(features, dtype=np.float64)
    y = np.asarray(labels, dtype=np.int64)
    if x.ndim != 2 or x.shape[1] != lsh.dim:
        raise ShapeMismatch(f"features {x.shape} do not match lsh dim {lsh.dim}")
    if y.shape != (x.shape[0],) or x.shape[0] == 0:
        raise InvalidInput("labels must match a non-empty feature batch")
    if y.min() < 0 or y.max() >= lsh.num_classes:
        raise InvalidInput("labels out of range")
    onehot = np.zeros((y.size, lsh.num_classes))
    onehot[np.arange(y.size), y] = lsh.label_scale
    z = np.hstack([x, onehot])
    r, p, _ = lsh.directions.shape
    proj = z @ lsh.directions.reshape(r * p, -1).T  # (n, R*p)
    bits = (proj > 0.0).astype(np.int64).reshape(-1, r, p)
    weights = 2 ** np.arange(p, dtype=np.int64)
    return bits @ weights


@dataclass(frozen=True)
class RaceSketch:
    """Bin counts per hash table; every row sums to ``total``."""

    counts: np.ndarray  # (R, B) float64, integer-valued for raw sketches
    total: float

    def __post_init__(self):
        counts = np.asarray(self.counts, dtype=np.float64)
        if counts.ndim != 2:
            raise ShapeMismatch("counts must be (R, B)")
        if self.total <= 0:
            raise InvalidInput("total must be > 0")
        if not np.allclose(counts.sum(axis=1), self.total, atol=1e-6):
            raise InvalidInput("every row must sum to total")
        object.__setattr__(self, "counts", counts)

    def normalized(self) -> np.ndarray:
        return self.counts / self.total


def sketch_dataset(features: np.ndarray, labels: np.ndarray, lsh: LshFamily) -> RaceSketch:
    bins = hash_points(lsh, features, labels)
    n = bins.shape[0]
    counts = np.zeros((lsh.num_tables, lsh.num_bins))
    for r in range(lsh.num_tables):
        counts[r] = np.bincount(bins[:, r], minlength=lsh.num_bins)
    return RaceSketch(counts, float(n))


def global_sketch(sketches: list) -> RaceSketch:
    """Unweighted mean of the normalized client sketches (total == 1)."""
    if not sketches:
        raise InvalidInput("need at least one sketch")
    shape = sketches[0].counts.shape
    if any(s.counts.shape != shape for s in sketches):
        raise ShapeMismatch("sketches disagree on (R, B)")
    mean = np.mean([s.normalized() for s in sketches], axis=0)
    return RaceSketch(mean, 1.0)


def sketch_distance(a: RaceSketch, b: RaceSketch) -> float:
    if a.counts.shape != b.counts.shape:
        raise ShapeMismatch("sketches disagree on (R, B)")
    return float(np.linalg.norm(a.normalized() - b.normalized()))


def selection_probabilities(global_s: RaceSketch, sketches: list) -> np.ndarray:
    """p_i proportional to 1 / max(distance_i, 1e-6); sums to one."""
    if not sketches:
        raise InvalidInput("need at least one client sketch")
    inv = np.array(
        [1.0 / max(sketch_distance(global_s, s), 1e-6) for s in sketches]
    )
    return inv / inv.sum()


def sample_clients(probs: np.ndarray, k: int, seed: int) -> np.ndarray:
    """Weighted sampling without replacement: k sequential renormalized draws.

    Returns the selected ids sorted ascending.
    """
    p = check_prob_vector(probs, "probs", atol=1e-9)
    n = p.size
    if not (1 <= k <= n):
        raise InvalidInput(f"k must be in [1, {n}], got {k}")
    rng = rng_from(seed, "race-sample")
    remaining = list(range(n))
    weights = p.copy()
    chosen = []
    for _ in range(k):
        w = weights[remaining]
        w = w / w.sum() if w.sum() > 0 else np.full(len(remaining), 1.0 / len(remaining))
        pick = int(rng.choice(remaining, p=w))
        chosen.append(pick)
        remaining.remove(pick)
    return np.sort(np.array(chosen, dtype=np.int64))


def sketch_to_csv(sketch: RaceSketch, seed: int) -> str:
    """Debug dump: metadata header then one row per table."""
    buf = io.StringIO()
    r, b = sketch.counts.shape
    buf.write(f"race,{r},{b},{sketch.total:g},{seed}\n")
    for row in sketch.counts:
        buf.write(",".join(f"{v:g}" for v in row) + "\n")
    return buf.getvalue()


def sketch_from_csv(text: str) -> tuple:
    """Inverse of sketch_to_csv; returns (sketch, seed)."""
    lines = [line for line in text.strip().splitlines() if line]
    head = lines[0].split(",")
    if len(head) != 5 or head[0] != "race":
        raise InvalidInput("bad sketch header")
    r, b = int(head[1]), int(head[2])
    total, seed = float(head[3]), int(head[4])
    if len(lines) != r + 1:
        raise InvalidInput(f"expected {r} rows, found {len(lines) - 1}")
    counts = np.array([[float(v) for v in line.split(",")] for line in lines[1:]])
    if counts.shape != (r, b):
        raise InvalidInput("row width disagrees with header")
    return RaceSketch(counts, total), seed
