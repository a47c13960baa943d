"""Datasets, client partitioning, and per-client splits.

Partition strategies mirror the usual non-IID taxonomy: quantity-based label
skew (each client holds k label ids), Dirichlet label skew, Dirichlet quantity
skew, additive feature noise growing with the client index, plain IID, and the
two sequential mixtures (label+noise, quantity+noise). All strategies are pure
functions of (dataset, spec) and never mutate their inputs.
"""

from __future__ import annotations

import struct
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import FormatError, InvalidInput, PartitionRetryExhausted
from .seeds import rng_from

IMAGE_MAGIC = 2051
LABEL_MAGIC = 2049

# Distance of synthetic class means from the origin (per occupied axis).
MEAN_SCALE = 3.0

# Attempt budget for Dirichlet draws that must leave no client empty.
MAX_REDRAWS = 100

STRATEGIES = (
    "iid",
    "label_quantity",
    "label_dirichlet",
    "quantity_dirichlet",
    "feature_noise",
    "mixed_label_feature",
    "mixed_feature_quantity",
)


@dataclass(frozen=True)
class Dataset:
    """Feature matrix (m, d) float64 plus integer labels in [0, num_classes)."""

    features: np.ndarray
    labels: np.ndarray
    num_classes: int

    def __post_init__(self):
        features = np.asarray(self.features, dtype=np.float64)
        labels = np.asarray(self.labels, dtype=np.int64)
        if features.ndim != 2 or features.shape[0] < 1:
            raise InvalidInput(f"features must be (m, d) with m >= 1, got {features.shape}")
        if labels.shape != (features.shape[0],):
            raise InvalidInput(
                f"labels shape {labels.shape} does not match {features.shape[0]} rows"
            )
        if self.num_classes < 1:
            raise InvalidInput("num_classes must be >= 1")
        if labels.size and (labels.min() < 0 or labels.max() >= self.num_classes):
            raise InvalidInput("labels out of range [0, num_classes)")
        object.__setattr__(self, "features", features)
        object.__setattr__(self, "labels", labels)

    @property
    def size(self) -> int:
        return self.features.shape[0]

    @property
    def dim(self) -> int:
        return self.features.shape[1]


def take(ds: Dataset, indices: np.ndarray) -> Dataset:
    """Row-subset copy of a dataset."""
    idx = np.asarray(indices, dtype=np.int64)
    if idx.ndim != 1 or idx.size == 0:
        raise InvalidInput("take: indices must be a non-empty 1-D array")
    if idx.min() < 0 or idx.max() >= ds.size:
        raise InvalidInput("take: indices out of range")
    return Dataset(ds.features[idx].copy(), ds.labels[idx].copy(), ds.num_classes)


def generate_synthetic(
    num_classes: int, dim: int, per_class: int, spread: float, seed: int
) -> Dataset:
    """Isotropic Gaussian clusters on an axis lattice, class-balanced.

    Class c sits at MEAN_SCALE * (1 + c // (2 dim)) along axis (c % dim), with
    alternating sign, so all means are pairwise distinct for any num_classes.
    ``spread`` is the within-class standard deviation; spread=0 collapses each
    class onto its mean exactly.
    """
    if num_classes < 2:
        raise InvalidInput("generate_synthetic needs num_classes >= 2")
    if dim < 1 or per_class < 1:
        raise InvalidInput("generate_synthetic needs dim >= 1 and per_class >= 1")
    if spread < 0:
        raise InvalidInput("spread must be >= 0")
    rng = rng_from(seed, "synthetic")
    means = np.zeros((num_classes, dim))
    for c in range(num_classes):
        axis = c % dim
        sign = 1.0 if (c // dim) % 2 == 0 else -1.0
        means[c, axis] = MEAN_SCALE * sign * (1 + c // (2 * dim))
    features = np.repeat(means, per_class, axis=0)
    features = features + spread * rng.standard_normal(features.shape)
    labels = np.repeat(np.arange(num_classes, dtype=np.int64), per_class)
    return Dataset(features, labels, num_classes)


def _read_exact(handle, count: int, what: str) -> bytes:
    buf = handle.read(count)
    if len(buf) != count:
        raise FormatError(f"truncated file while reading {what}")
    return buf


def load_idx(images_path: str, labels_path: str) -> Dataset:
    """Read an images/labels file pair in the IDX byte layout.

    Big-endian int32 header words; unsigned-byte payload, row-major. Pixel
    values are scaled into [0, 1]. The class count is inferred from the
    largest label present.
    """
    with open(images_path, "rb") as handle:
        magic = struct.unpack(">i", _read_exact(handle, 4, "image magic"))[0]
        if magic != IMAGE_MAGIC:
            raise FormatError(f"bad image magic {magic}, expected {IMAGE_MAGIC}")
        count, rows, cols = struct.unpack(">iii", _read_exact(handle, 12, "image dims"))
        if count < 1 or rows < 1 or cols < 1:
            raise FormatError(f"bad image dims ({count}, {rows}, {cols})")
        raw = _read_exact(handle, count * rows * cols, "image payload")
        features = np.frombuffer(raw, dtype=np.uint8).astype(np.float64) / 255.0
        features = features.reshape(count, rows * cols)
    with open(labels_path, "rb") as handle:
        magic = struct.unpack(">i", _read_exact(handle, 4, "label magic"))[0]
        if magic != LABEL_MAGIC:
            raise FormatError(f"bad label magic {magic}, expected {LABEL_MAGIC}")
        (label_count,) = struct.unpack(">i", _read_exact(handle, 4, "label count"))
        if label_count != count:
            raise FormatError(f"{count} images but {label_count} labels")
        labels = np.frombuffer(_read_exact(handle, label_count, "label payload"), dtype=np.uint8)
    return Dataset(features, labels.astype(np.int64), int(labels.max()) + 1)


@dataclass(frozen=True)
class PartitionSpec:
    """Which strategy to apply and its parameters.

    k: labels per client for label_quantity; epsilon: Dirichlet concentration;
    sigma: feature-noise scale (the client-i noise variance is sigma * i / N
    with i counted from 1).
    """

    strategy: str
    num_clients: int
    seed: int
    k: int | None = None
    epsilon: float | None = None
    sigma: float | None = None

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise InvalidInput(f"unknown partition strategy {self.strategy!r}")
        if self.num_clients < 1:
            raise InvalidInput("num_clients must be >= 1")
        needs_k = self.strategy == "label_quantity"
        needs_eps = self.strategy in (
            "label_dirichlet",
            "quantity_dirichlet",
            "mixed_label_feature",
            "mixed_feature_quantity",
        )
        needs_sigma = self.strategy in (
            "feature_noise",
            "mixed_label_feature",
            "mixed_feature_quantity",
        )
        if needs_k and (self.k is None or self.k < 1):
            raise InvalidInput("label_quantity needs k >= 1")
        if needs_eps and (self.epsilon is None or self.epsilon <= 0):
            raise InvalidInput(f"{self.strategy} needs epsilon > 0")
        if needs_sigma and (self.sigma is None or self.sigma < 0):
            raise InvalidInput(f"{self.strategy} needs sigma >= 0")


@dataclass(frozen=True)
class PartitionAssignment:
    """Disjoint per-client row indices into one source dataset."""

    client_indices: tuple
    source_size: int

    def __post_init__(self):
        cleaned = []
        seen = np.zeros(self.source_size, dtype=bool)
        for i, idx in enumerate(self.client_indices):
            arr = np.asarray(idx, dtype=np.int64)
            if arr.ndim != 1 or arr.size == 0:
                raise InvalidInput(f"client {i} has an empty or non-1-D index set")
            if arr.min() < 0 or arr.max() >= self.source_size:
                raise InvalidInput(f"client {i} indices out of range")
            if seen[arr].any():
                raise InvalidInput(f"client {i} overlaps another client")
            seen[arr] = True
            cleaned.append(arr)
        object.__setattr__(self, "client_indices", tuple(cleaned))

    @property
    def num_clients(self) -> int:
        return len(self.client_indices)

    def sizes(self) -> np.ndarray:
        return np.array([idx.size for idx in self.client_indices], dtype=np.int64)


def parse_partition(text: str, num_clients: int, seed: int) -> PartitionSpec:
    """Parse the compact partition grammar used by configs and the CLI.

    iid | c<k> | dir<eps> | qty<eps> | noise<sigma> |
    mixlf<eps>-<sigma> | mixfq<eps>-<sigma>
    """
    text = text.strip()
    try:
        if text == "iid":
            return PartitionSpec("iid", num_clients, seed)
        if text.startswith("mixlf"):
            eps, sigma = text[len("mixlf"):].split("-", 1)
            return PartitionSpec(
                "mixed_label_feature", num_clients, seed, epsilon=float(eps), sigma=float(sigma)
            )
        if text.startswith("mixfq"):
            eps, sigma = text[len("mixfq"):].split("-", 1)
            return PartitionSpec(
                "mixed_feature_quantity", num_clients, seed, epsilon=float(eps), sigma=float(sigma)
            )
        if text.startswith("noise"):
            return PartitionSpec("feature_noise", num_clients, seed, sigma=float(text[5:]))
        if text.startswith("dir"):
            return PartitionSpec("label_dirichlet", num_clients, seed, epsilon=float(text[3:]))
        if text.startswith("qty"):
            return PartitionSpec("quantity_dirichlet", num_clients, seed, epsilon=float(text[3:]))
        if text.startswith("c"):
            return PartitionSpec("label_quantity", num_clients, seed, k=int(text[1:]))
    except (ValueError, IndexError) as exc:
        raise InvalidInput(f"cannot parse partition {text!r}: {exc}") from exc
    raise InvalidInput(f"cannot parse partition {text!r}")


def partition_name(spec: PartitionSpec) -> str:
    """Inverse of parse_partition, used for output paths and result rows."""
    if spec.strategy == "iid":
        return "iid"
    if spec.strategy == "label_quantity":
        return f"c{spec.k}"
    if spec.strategy == "label_dirichlet":
        return f"dir{spec.epsilon:g}"
    if spec.strategy == "quantity_dirichlet":
        return f"qty{spec.epsilon:g}"
    if spec.strategy == "feature_noise":
        return f"noise{spec.sigma:g}"
    if spec.strategy == "mixed_label_feature":
        return f"mixlf{spec.epsilon:g}-{spec.sigma:g}"
    return f"mixfq{spec.epsilon:g}-{spec.sigma:g}"


def largest_remainder_counts(weights: np.ndarray, total: int) -> np.ndarray:
    """Integer apportionment of ``total`` by weight, largest fractional part
    first, ties broken toward the lower index."""
    weights = np.asarray(weights, dtype=np.float64)
    if total < 0 or weights.ndim != 1 or weights.size == 0:
        raise InvalidInput("largest_remainder_counts: bad arguments")
    if np.any(weights < 0):
        raise InvalidInput("weights must be nonnegative")
    s = weights.sum()
    if s <= 0:
        raise InvalidInput("weights must not all be zero")
    quota = weights / s * total
    counts = np.floor(quota).astype(np.int64)
    short = total - int(counts.sum())
    if short > 0:
        frac = quota - counts
        # argsort is stable, so equal fractions go to lower indices first.
        order = np.argsort(-frac, kind="stable")
        counts[order[:short]] += 1
    return counts


def _split_by_counts(indices: np.ndarray, counts: np.ndarray) -> list:
    out = []
    offset = 0
    for c in counts:
        out.append(indices[offset : offset + int(c)])
        offset += int(c)
    return out


def partition_iid(m: int, num_clients: int, rng: np.random.Generator) -> PartitionAssignment:
    """Shuffle and deal near-equal shares; the first m mod N clients get one extra."""
    if m < num_clients:
        raise InvalidInput(f"cannot split {m} samples among {num_clients} clients")
    perm = rng.permutation(m)
    base, rem = divmod(m, num_clients)
    counts = np.full(num_clients, base, dtype=np.int64)
    counts[:rem] += 1
    return PartitionAssignment(tuple(_split_by_counts(perm, counts)), m)


def partition_label_quantity(
    ds: Dataset, num_clients: int, k: int, rng: np.random.Generator
) -> PartitionAssignment:
    """Each client holds exactly k label ids; each label's samples are divided
    equally among its holders. Labels no client drew are dropped with a warning."""
    if k < 1 or k > ds.num_classes:
        raise InvalidInput(f"k must be in [1, {ds.num_classes}], got {k}")
    held = [rng.choice(ds.num_classes, size=k, replace=False) for _ in range(num_clients)]
    holders = {c: [] for c in range(ds.num_classes)}
    for client, labels in enumerate(held):
        for c in labels:
            holders[int(c)].append(client)
    per_client = [[] for _ in range(num_clients)]
    dropped = []
    for c in range(ds.num_classes):
        label_idx = np.nonzero(ds.labels == c)[0]
        if label_idx.size == 0:
            continue
        who = sorted(holders[c])
        if not who:
            dropped.append(c)
            continue
        perm = rng.permutation(label_idx)
        base, rem = divmod(perm.size, len(who))
        counts = np.full(len(who), base, dtype=np.int64)
        counts[:rem] += 1  # remainder goes one-per-client in client-index order
        for client, chunk in zip(who, _split_by_counts(perm, counts)):
            if chunk.size:
                per_client[client].append(chunk)
    if dropped:
        warnings.warn(
            f"label_quantity: labels {dropped} held by no client were dropped",
            RuntimeWarning,
            stacklevel=2,
        )
    merged = []
    for client, chunks in enumerate(per_client):
        if not chunks:
            raise InvalidInput(
                f"client {client} received no samples; increase data or lower num_clients"
            )
        merged.append(np.sort(np.concatenate(chunks)))
    return PartitionAssignment(tuple(merged), ds.size)


def _dirichlet_with_retry(draw_fn, num_clients: int, seed: int) -> list:
    """Run a Dirichlet-based allocation until no client is empty."""
    for attempt in range(MAX_REDRAWS):
        rng = rng_from(seed, "dirichlet", attempt)
        shares = draw_fn(rng)
        if all(s.size > 0 for s in shares):
            return shares
    raise PartitionRetryExhausted(
        f"no all-clients-nonempty allocation in {MAX_REDRAWS} attempts"
    )


def partition_label_dirichlet(
    ds: Dataset, num_clients: int, epsilon: float, seed: int
) -> PartitionAssignment:
    """Per label c, draw proportions ~ Dirichlet(epsilon) over clients and deal
    that label's samples by largest-remainder rounding."""

    def draw(rng):
        shares = [[] for _ in range(num_clients)]
        for c in range(ds.num_classes):
            label_idx = np.nonzero(ds.labels == c)[0]
            if label_idx.size == 0:
                continue
            q = rng.dirichlet(np.full(num_clients, epsilon))
            counts = largest_remainder_counts(q, label_idx.size)
            perm = rng.permutation(label_idx)
            for client, chunk in enumerate(_split_by_counts(perm, counts)):
                if chunk.size:
                    shares[client].append(chunk)
        return [
            np.sort(np.concatenate(chunks)) if chunks else np.empty(0, dtype=np.int64)
            for chunks in shares
        ]

    shares = _dirichlet_with_retry(draw, num_clients, seed)
    return PartitionAssignment(tuple(shares), ds.size)


def partition_quantity_dirichlet(
    ds: Dataset, num_clients: int, epsilon: float, seed: int
) -> PartitionAssignment:
    """One Dirichlet(epsilon) draw fixes per-client sample counts; contents IID."""

    def draw(rng):
        q = rng.dirichlet(np.full(num_clients, epsilon))
        counts = largest_remainder_counts(q, ds.size)
        perm = rng.permutation(ds.size)
        return _split_by_counts(perm, counts)

    shares = _dirichlet_with_retry(draw, num_clients, seed)
    return PartitionAssignment(tuple(np.sort(s) for s in shares), ds.size)


def add_feature_noise(
    ds: Dataset, assignment: PartitionAssignment, sigma: float, seed: int
) -> Dataset:
    """Additive Gaussian feature noise with variance sigma * i / N for client i
    (1-based), applied to each client's rows of a copied feature matrix."""
    if sigma < 0:
        raise InvalidInput("sigma must be >= 0")
    features = ds.features.copy()
    n = assignment.num_clients
    for client, idx in enumerate(assignment.client_indices):
        std = float(np.sqrt(sigma * (client + 1) / n))
        rng = rng_from(seed, "noise", client)
        features[idx] += std * rng.standard_normal((idx.size, ds.dim))
    return Dataset(features, ds.labels.copy(), ds.num_classes)


def partition_dataset(ds: Dataset, spec: PartitionSpec) -> tuple:
    """Apply a partition strategy; returns (assignment, dataset).

    The returned dataset is ``ds`` itself unless the strategy adds feature
    noise, in which case it is a modified copy.
    """
    if spec.num_clients > ds.size:
        raise InvalidInput("more clients than samples")
    rng = rng_from(spec.seed, "partition")
    if spec.strategy == "iid":
        return partition_iid(ds.size, spec.num_clients, rng), ds
    if spec.strategy == "label_quantity":
        return partition_label_quantity(ds, spec.num_clients, spec.k, rng), ds
    if spec.strategy == "label_dirichlet":
        return partition_label_dirichlet(ds, spec.num_clients, spec.epsilon, spec.seed), ds
    if spec.strategy == "quantity_dirichlet":
        return partition_quantity_dirichlet(ds, spec.num_clients, spec.epsilon, spec.seed), ds
    if spec.strategy == "feature_noise":
        assignment = partition_iid(ds.size, spec.num_clients, rng)
        return assignment, add_feature_noise(ds, assignment, spec.sigma, spec.seed)
    if spec.strategy == "mixed_label_feature":
        assignment = partition_label_dirichlet(ds, spec.num_clients, spec.epsilon, spec.seed)
        return assignment, add_feature_noise(ds, assignment, spec.sigma, spec.seed)
    if spec.strategy == "mixed_feature_quantity":
        assignment = partition_quantity_dirichlet(ds, spec.num_clients, spec.epsilon, spec.seed)
        return assignment, add_feature_noise(ds, assignment, spec.sigma, spec.seed)
    raise InvalidInput(f"unknown strategy {spec.strategy!r}")


@dataclass(frozen=True)
class ClientSplit:
    """Per-client train/validation/test row indices (disjoint, all non-empty)."""

    train: np.ndarray
    val: np.ndarray
    test: np.ndarray


def client_splits(
    assignment: PartitionAssignment,
    seed: int,
    test_fraction: float = 0.2,
    val_fraction: float = 0.2,
) -> list:
    """Carve each client's indices into test, then train/val of the remainder.

    Defaults give 64/16/20 train/val/test. Every part is forced non-empty,
    which requires at least 3 samples per client.
    """
    if not (0.0 < test_fraction < 1.0 and 0.0 < val_fraction < 1.0):
        raise InvalidInput("fractions must be in (0, 1)")
    out = []
    for client, idx in enumerate(assignment.client_indices):
        if idx.size < 3:
            raise InvalidInput(f"client {client} has {idx.size} samples, needs >= 3 to split")
        rng = rng_from(seed, "client-split", client)
        perm = rng.permutation(idx)
        n_test = min(max(1, round(test_fraction * perm.size)), perm.size - 2)
        rest = perm[n_test:]
        n_val = min(max(1, round(val_fraction * rest.size)), rest.size - 1)
        out.append(
            ClientSplit(
                train=np.sort(rest[n_val:]), val=np.sort(rest[:n_val]), test=np.sort(perm[:n_test])
            )
        )
    return out


def stratified_holdout(ds: Dataset, fraction: float, seed: int) -> tuple:
    """Split row indices into (pool, holdout) with per-class proportional
    holdout counts; used to carve a class-balanced shared test set."""
    if not (0.0 < fraction < 1.0):
        raise InvalidInput("fraction must be in (0, 1)")
    rng = rng_from(seed, "holdout")
    pool, held = [], []
    for c in range(ds.num_classes):
        label_idx = np.nonzero(ds.labels == c)[0]
        if label_idx.size == 0:
            continue
        perm = rng.permutation(label_idx)
        n_hold = min(max(1, round(fraction * perm.size)), perm.size - 1)
        held.append(perm[:n_hold])
        pool.append(perm[n_hold:])
    return np.sort(np.concatenate(pool)), np.sort(np.concatenate(held))
