"""Federated simulation engine.

A round trains every client locally from its current personal model, snapshots
the results, obtains a collaboration matrix (fixed or recomputed per round),
aggregates each client's personal model as the row-weighted combination of the
snapshot, and evaluates that aggregate. The sampled-global flow instead keeps
one global model, trains a sampled cohort per round, and personalizes by local
fine-tuning after the last round.

Wall time is accounted for the matrix-producing phases only; communication is
a declared byte model (4 bytes per parameter), not traffic capture.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .errors import InvalidInput, ShapeMismatch
from .model import MlpModel, SgdState, evaluate, local_train, model_from_params, model_to_params
from .seeds import rng_from
from .sketch import global_sketch, make_lsh, sample_clients, selection_probabilities, sketch_dataset
from .vecmath import ParamVector, check_prob_vector

SCHEMES = ("pfedjs", "fedcollab", "race", "pfedsv", "pfedgraph", "ce")
BASELINES = ("fedavg", "local")
BYTES_PER_PARAM = 4


@dataclass(frozen=True)
class EngineConfig:
    rounds: int = 50
    local_epochs: int = 10
    batch_size: int = 64
    learning_rate: float = 0.01
    momentum: float = 0.9
    eval_split: str = "local"  # or "global"

    def __post_init__(self):
        if self.rounds < 1 or self.local_epochs < 0 or self.batch_size < 1:
            raise InvalidInput("need rounds >= 1, local_epochs >= 0, batch_size >= 1")
        if self.eval_split not in ("local", "global"):
            raise InvalidInput("eval_split must be 'local' or 'global'")

    def sgd(self) -> SgdState:
        return SgdState(learning_rate=self.learning_rate, momentum=self.momentum)


@dataclass(frozen=True)
class ClientData:
    """One client's train/validation/test arrays."""

    x_train: np.ndarray
    y_train: np.ndarray
    x_val: np.ndarray
    y_val: np.ndarray
    x_test: np.ndarray
    y_test: np.ndarray

    def __post_init__(self):
        for x, y in ((self.x_train, self.y_train), (self.x_val, self.y_val), (self.x_test, self.y_test)):
            if x.ndim != 2 or y.shape != (x.shape[0],) or x.shape[0] == 0:
                raise InvalidInput("every split needs matching non-empty arrays")


@dataclass(frozen=True)
class RoundMetrics:
    round_idx: int
    per_client: tuple  # (client_id, test_accuracy, test_loss) per client
    mean_accuracy: float

    def __post_init__(self):
        accs = [acc for _, acc, _ in self.per_client]
        if abs(float(np.mean(accs)) - self.mean_accuracy) > 1e-9:
            raise InvalidInput("mean_accuracy must equal the unweighted client mean")


@dataclass(frozen=True)
class EfficiencyReport:
    scheme: str
    alpha_compute_seconds: float
    comm_bytes_total: int

    def __post_init__(self):
        if self.alpha_compute_seconds < 0 or self.comm_bytes_total < 0:
            raise InvalidInput("efficiency figures must be nonnegative")


@dataclass
class FlowResult:
    metrics: list
    final_models: list
    alpha_seconds: float
    last_alpha: np.ndarray | None = None


def uniform_alpha(n: int) -> np.ndarray:
    return np.full((n, n), 1.0 / n)


def identity_alpha(n: int) -> np.ndarray:
    return np.eye(n)


def derived_seed(*parts) -> int:
    """Stable sub-seed for a named phase; keeps flows cross-comparable."""
    return int(rng_from(*parts).integers(2**31))


def aggregate_personalized(alpha_row, params) -> ParamVector:
    """Convex combination of flattened parameters in client order.

    A one-hot row returns an exact copy of that client's parameters.
    """
    row = check_prob_vector(alpha_row, "alpha_row", atol=1e-6)
    if len(params) != row.size:
        raise InvalidInput("one parameter vector per row entry required")
    shapes = params[0].shapes
    if any(p.shapes != shapes for p in params):
        raise ShapeMismatch("parameter vectors disagree on layer shapes")
    nonzero = np.flatnonzero(row)
    if nonzero.size == 1 and row[nonzero[0]] == 1.0:
        return ParamVector(params[nonzero[0]].flat.copy(), shapes)
    out = np.zeros_like(params[0].flat)
    for j in nonzero:
        out = out + row[j] * params[j].flat
    return ParamVector(out, shapes)


def _train_snapshot(models, clients, cfg: EngineConfig, round_idx: int, seed: int):
    trained = []
    for cid, (model, client) in enumerate(zip(models, clients)):
        trained.append(
            local_train(
                model,
                client.x_train,
                client.y_train,
                epochs=cfg.local_epochs,
                batch_size=cfg.batch_size,
                sgd=cfg.sgd(),
                seed=derived_seed(seed, "local-train", round_idx, cid),
            )
        )
    return trained


def evaluate_round(models, clients, cfg: EngineConfig, round_idx: int, global_test=None) -> RoundMetrics:
    if cfg.eval_split == "global" and global_test is None:
        raise InvalidInput("global evaluation requires a shared test set")
    per_client = []
    for cid, (model, client) in enumerate(zip(models, clients)):
        if cfg.eval_split == "global":
            x, y = global_test
        else:
            x, y = client.x_test, client.y_test
        report = evaluate(model, x, y)
        per_client.append((cid, report.accuracy, report.mean_loss))
    mean_acc = float(np.mean([acc for _, acc, _ in per_client]))
    return RoundMetrics(round_idx, tuple(per_client), mean_acc)


def run_personalized_flow(
    clients, init_model: MlpModel, cfg: EngineConfig, alpha_provider, seed: int, global_test=None
) -> FlowResult:
    """Generic weighted-aggregation loop.

    ``alpha_provider(round_idx, trained_models) -> (N, N) matrix`` is invoked
    once per round on the post-training snapshot; its wall time accumulates
    into the matrix-computation account.
    """
    n = len(clients)
    if n < 1:
        raise InvalidInput("need at least one client")
    models = [init_model.copy() for _ in range(n)]
    metrics = []
    alpha_seconds = 0.0
    alpha = None
    for t in range(cfg.rounds):
        trained = _train_snapshot(models, clients, cfg, t, seed)
        tick = time.perf_counter()
        alpha = np.asarray(alpha_provider(t, trained), dtype=np.float64)
        alpha_seconds += time.perf_counter() - tick
        if alpha.shape != (n, n):
            raise ShapeMismatch(f"provider returned {alpha.shape}, expected {(n, n)}")
        params = [model_to_params(m) for m in trained]
        models = [
            model_from_params(aggregate_personalized(alpha[i], params)) for i in range(n)
        ]
        metrics.append(evaluate_round(models, clients, cfg, t, global_test))
    return FlowResult(metrics, models, alpha_seconds, alpha)


@dataclass(frozen=True)
class RaceConfig:
    num_tables: int = 50
    bits: int = 4
    label_scale: float = 1.0
    sample_size: int = 6
    fine_tune_epochs: int = 5

    def __post_init__(self):
        if self.num_tables < 1 or self.bits < 1:
            raise InvalidInput("need num_tables >= 1 and bits >= 1")
        if self.sample_size < 1 or self.fine_tune_epochs < 0:
            raise InvalidInput("need sample_size >= 1 and fine_tune_epochs >= 0")


def run_race_flow(
    clients,
    init_model: MlpModel,
    cfg: EngineConfig,
    race: RaceConfig,
    num_classes: int,
    seed: int,
    global_test=None,
    selection_probs=None,
) -> FlowResult:
    """Sampled-global flow: sketch once, per round train a sampled cohort from
    the global model and average them, fine-tune per client at the end.

    The final round's metrics row reports the fine-tuned personal models;
    earlier rows report the shared global model. ``selection_probs`` overrides
    the sketch-derived probabilities (diagnostic hook).
    """
    n = len(clients)
    if race.sample_size > n:
        raise InvalidInput("sample_size cannot exceed the number of clients")
    tick = time.perf_counter()
    if selection_probs is None:
        lsh = make_lsh(
            race.num_tables,
            race.bits,
            clients[0].x_train.shape[1],
            num_classes,
            race.label_scale,
            seed=derived_seed(seed, "race-lsh"),
        )
        sketches = [sketch_dataset(c.x_train, c.y_train, lsh) for c in clients]
        probs = selection_probabilities(global_sketch(sketches), sketches)
    else:
        probs = check_prob_vector(selection_probs, "selection_probs", atol=1e-9)
    alpha_seconds = time.perf_counter() - tick

    global_model = init_model.copy()
    metrics = []
    cohort_row = np.full(race.sample_size, 1.0 / race.sample_size)
    for t in range(cfg.rounds):
        tick = time.perf_counter()
        cohort = sample_clients(probs, race.sample_size, seed=derived_seed(seed, "race-round", t))
        alpha_seconds += time.perf_counter() - tick
        trained = [
            local_train(
                global_model,
                clients[cid].x_train,
                clients[cid].y_train,
                epochs=cfg.local_epochs,
                batch_size=cfg.batch_size,
                sgd=cfg.sgd(),
                seed=derived_seed(seed, "local-train", t, int(cid)),
            )
            for cid in cohort
        ]
        params = [model_to_params(m) for m in trained]
        global_model = model_from_params(aggregate_personalized(cohort_row, params))
        if t < cfg.rounds - 1:
            metrics.append(
                evaluate_round([global_model] * n, clients, cfg, t, global_test)
            )
    personal = [
        local_train(
            global_model,
            client.x_train,
            client.y_train,
            epochs=race.fine_tune_epochs,
            batch_size=cfg.batch_size,
            sgd=cfg.sgd(),
            seed=derived_seed(seed, "fine-tune", cid),
        )
        for cid, client in enumerate(clients)
    ]
    metrics.append(evaluate_round(personal, clients, cfg, cfg.rounds - 1, global_test))
    return FlowResult(metrics, personal, alpha_seconds, None)


def account_communication(
    scheme: str,
    num_clients: int,
    num_params: int,
    rounds: int,
    top_k: int = 0,
    clf_params: int = 0,
    hn_steps: int = 2000,
) -> int:
    """Bytes moved through the server under the declared counting model.

    Base flow (one upload + one download per client per round) covers the
    fixed-matrix schemes and the graph scheme; the relevance scheme downloads
    top_k peer models per client per round on top of its upload; the sampled
    flow only moves the cohort; the hypernetwork scheme exchanges (N+1)
    model-sized payloads per training step plus the base flow; the coalition
    scheme adds a one-time pairwise discriminator exchange.
    """
    if num_clients < 1 or num_params < 1 or rounds < 0 or top_k < 0:
        raise InvalidInput("counts must be nonnegative (N, P >= 1)")
    per_model = num_params * BYTES_PER_PARAM
    base = num_clients * rounds * 2 * per_model
    if scheme in ("pfedjs", "pfedgraph", "fedavg"):
        return base
    if scheme == "local":
        return 0
    if scheme == "pfedsv":
        return num_clients * rounds * (1 + top_k) * per_model
    if scheme == "race":
        return rounds * 2 * top_k * per_model
    if scheme == "ce":
        return hn_steps * (num_clients + 1) * per_model + base
    if scheme == "fedcollab":
        pairs = num_clients * (num_clients - 1) // 2
        return base + pairs * 2 * clf_params * BYTES_PER_PARAM
    raise InvalidInput(f"unknown scheme: {scheme}")
