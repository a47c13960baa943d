"""Experiment orchestration: one (scheme, partition, seed) cell at a time.

A cell builds the dataset, partitions it, wires the scheme's collaboration
matrix machinery into the engine, runs the round loop, and reports per-round
metrics plus the efficiency account. Sweeps cross every scheme with every
partition; each (scheme, partition) pair gets its own output directory with
results.csv, summary.json, and efficiency.csv.
"""

from __future__ import annotations

import json
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .cdiv import coalitions_to_alpha, estimate_cdiv_matrix, optimize_coalitions
from .config import ExperimentConfig
from .data import (
    client_splits,
    generate_synthetic,
    load_idx,
    parse_partition,
    partition_dataset,
    stratified_holdout,
    take,
)
from .divergence import joint_histogram, label_histogram, pfedjs_alpha_matrix
from .engine import (
    ClientData,
    EfficiencyReport,
    EngineConfig,
    account_communication,
    derived_seed,
    identity_alpha,
    run_personalized_flow,
    run_race_flow,
    uniform_alpha,
)
from .errors import ConfigError, ReportError
from .graph import pfedgraph_round
from .hypernet import ce_alpha_matrix, hn_train, make_hypernet
from .model import init_mlp, model_to_params
from .shapley import initial_relevance, pfedsv_round

RESULTS_HEADER = "scheme,partition,seed,round,client_id,test_accuracy,test_loss"
EFFICIENCY_HEADER = "scheme,seed,alpha_compute_seconds,comm_bytes_total"
THREADS_ENV = "HETBENCH_THREADS"


@dataclass(frozen=True)
class CellResult:
    scheme: str
    partition: str
    seed: int
    rows: tuple  # ResultsRow tuples
    final_mean_accuracy: float
    efficiency: EfficiencyReport


def _engine_config(cfg: ExperimentConfig) -> EngineConfig:
    return EngineConfig(
        rounds=cfg.rounds,
        local_epochs=cfg.local_epochs,
        batch_size=cfg.batch_size,
        learning_rate=cfg.learning_rate,
        momentum=cfg.momentum,
        eval_split=cfg.eval_split,
    )


def _build_clients(cfg: ExperimentConfig, partition: str, seed: int):
    """Dataset -> optional global holdout -> partition -> per-client splits."""
    if cfg.data.source == "synthetic":
        source = generate_synthetic(
            cfg.data.classes, cfg.data.dim, cfg.data.per_class, cfg.data.spread, seed=seed
        )
    else:
        source = load_idx(cfg.data.images, cfg.data.labels)
    global_test = None
    if cfg.eval_split == "global":
        pool_idx, held_idx = stratified_holdout(source, cfg.global_holdout, seed)
        held = take(source, held_idx)
        source = take(source, pool_idx)
        global_test = (held.features, held.labels)
    spec = parse_partition(partition, cfg.num_clients, seed)
    assignment, working = partition_dataset(source, spec)
    splits = client_splits(assignment, seed)
    clients = []
    for split in splits:
        parts = []
        for idx in (split.train, split.val, split.test):
            subset = take(working, idx)
            parts.extend([subset.features, subset.labels])
        clients.append(ClientData(*parts))
    return clients, working.num_classes, global_test


def _joint_value_range(clients) -> tuple:
    stats = np.concatenate([c.x_train.mean(axis=1) for c in clients])
    return float(stats.min()), float(stats.max())


def _precompute_alpha(cfg: ExperimentConfig, scheme: str, clients, init_model, num_classes, seed):
    """Fixed-matrix schemes: returns (alpha, seconds)."""
    n = len(clients)
    tick = time.perf_counter()
    if scheme == "pfedjs":
        if cfg.js.space == "label":
            hists = [label_histogram(c.y_train, num_classes) for c in clients]
        else:
            value_range = _joint_value_range(clients)
            hists = [
                joint_histogram(c.x_train, c.y_train, num_classes, cfg.js.feature_bins, value_range)
                for c in clients
            ]
        counts = [c.y_train.shape[0] for c in clients]
        alpha = pfedjs_alpha_matrix(hists, counts, cfg.js)
    elif scheme == "fedcollab":
        pair_splits = [(c.x_train, c.y_train) for c in clients]
        divergences = estimate_cdiv_matrix(
            pair_splits, num_classes, cfg.collab, seed=derived_seed(seed, "cdiv")
        )
        sizes = np.array([c.y_train.shape[0] for c in clients])
        structure = optimize_coalitions(divergences, sizes, cfg.collab.q1, cfg.collab.q2)
        alpha = coalitions_to_alpha(structure, sizes)
    elif scheme == "ce":
        hn = make_hypernet(init_model, n)
        hn = hn_train(
            hn,
            [(c.x_train, c.y_train) for c in clients],
            steps=cfg.ce.steps,
            lr=cfg.ce.lr,
            batch_size=cfg.ce.batch,
            seed=derived_seed(seed, "ce-train"),
        )
        result = ce_alpha_matrix(
            hn,
            [(c.x_train, c.y_train) for c in clients],
            steps=cfg.ce.pref_steps,
            lr=cfg.ce.pref_lr,
        )
        alpha = result.alpha
    elif scheme == "fedavg":
        alpha = uniform_alpha(n)
    elif scheme == "local":
        alpha = identity_alpha(n)
    else:
        raise ConfigError(f"scheme '{scheme}' has no fixed matrix")
    return alpha, time.perf_counter() - tick


def run_cell(cfg: ExperimentConfig, scheme: str, partition: str, seed: int) -> CellResult:
    clients, num_classes, global_test = _build_clients(cfg, partition, seed)
    n = len(clients)
    engine_cfg = _engine_config(cfg)
    init_model = init_mlp(
        clients[0].x_train.shape[1], cfg.hidden, num_classes, seed=derived_seed(seed, "model-init")
    )
    num_params = model_to_params(init_model).flat.size

    precompute_seconds = 0.0
    if scheme == "race":
        flow = run_race_flow(
            clients, init_model, engine_cfg, cfg.race, num_classes, seed, global_test
        )
    elif scheme == "pfedsv":
        state = initial_relevance(n, cfg.sv.top_k, cfg.sv.ema_eta)
        val_splits = [(c.x_val, c.y_val) for c in clients]

        def sv_provider(round_idx, trained):
            nonlocal state
            alpha, state = pfedsv_round(state, trained, val_splits, cfg.sv.self_weight)
            return alpha

        flow = run_personalized_flow(clients, init_model, engine_cfg, sv_provider, seed, global_test)
    elif scheme == "pfedgraph":
        val_splits = [(c.x_val, c.y_val) for c in clients]
        warm = {"alpha": None}

        def graph_provider(round_idx, trained):
            warm["alpha"] = pfedgraph_round(
                trained, val_splits, cfg.graph, prev_alpha=warm["alpha"], seed=seed
            )
            return warm["alpha"]

        flow = run_personalized_flow(
            clients, init_model, engine_cfg, graph_provider, seed, global_test
        )
    else:
        alpha, precompute_seconds = _precompute_alpha(
            cfg, scheme, clients, init_model, num_classes, seed
        )
        flow = run_personalized_flow(
            clients, init_model, engine_cfg, lambda t, m: alpha, seed, global_test
        )

    top_k = {"pfedsv": cfg.sv.top_k, "race": cfg.race.sample_size}.get(scheme, 0)
    dim = clients[0].x_train.shape[1]
    comm = account_communication(
        scheme,
        n,
        num_params,
        cfg.rounds,
        top_k=top_k,
        clf_params=dim + num_classes + 1,
        hn_steps=cfg.ce.steps,
    )
    efficiency = EfficiencyReport(scheme, precompute_seconds + flow.alpha_seconds, comm)
    rows = tuple(
        (scheme, partition, seed, m.round_idx + 1, cid, acc, loss)
        for m in flow.metrics
        for cid, acc, loss in m.per_client
    )
    return CellResult(
        scheme, partition, seed, rows, flow.metrics[-1].mean_accuracy, efficiency
    )


def write_results_csv(path, results) -> None:
    lines = [RESULTS_HEADER]
    for cell in results:
        for scheme, partition, seed, rnd, cid, acc, loss in cell.rows:
            lines.append(
                f"{scheme},{partition},{seed},{rnd},{cid},{acc:.6f},{loss:.6f}"
            )
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def write_summary_json(path, results) -> None:
    finals = [cell.final_mean_accuracy for cell in results]
    payload = {
        "scheme": results[0].scheme,
        "partition": results[0].partition,
        "seeds": [cell.seed for cell in results],
        "final_accuracy_per_seed": [round(v, 6) for v in finals],
        "final_accuracy_mean": round(float(np.mean(finals)), 6),
        "final_accuracy_std": round(float(np.std(finals)), 6),
    }
    Path(path).write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")


def write_efficiency_csv(path, results) -> None:
    lines = [EFFICIENCY_HEADER]
    for cell in results:
        eff = cell.efficiency
        lines.append(
            f"{eff.scheme},{cell.seed},{eff.alpha_compute_seconds:.6f},{eff.comm_bytes_total}"
        )
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def _cell_dir(out_dir: str, scheme: str, partition: str) -> Path:
    return Path(out_dir) / f"{scheme}_{partition}"


def _run_cell_group(cfg: ExperimentConfig, scheme: str, partition: str) -> Path:
    results = [run_cell(cfg, scheme, partition, seed) for seed in cfg.seeds]
    target = _cell_dir(cfg.out_dir, scheme, partition)
    target.mkdir(parents=True, exist_ok=True)
    write_results_csv(target / "results.csv", results)
    write_summary_json(target / "summary.json", results)
    write_efficiency_csv(target / "efficiency.csv", results)
    return target


def thread_budget(num_tasks: int) -> int:
    """Default one worker per task up to the CPU count; HETBENCH_THREADS caps it."""
    budget = min(num_tasks, os.cpu_count() or 1)
    raw = os.environ.get(THREADS_ENV)
    if raw is not None:
        try:
            cap = int(raw)
        except ValueError:
            raise ConfigError(f"{THREADS_ENV} must be a positive integer, got '{raw}'")
        if cap < 1:
            raise ConfigError(f"{THREADS_ENV} must be a positive integer, got '{raw}'")
        budget = min(budget, cap)
    return max(budget, 1)


def run_experiment(cfg: ExperimentConfig) -> list:
    """Run the full scheme x partition sweep; returns the output directories."""
    cells = [(s, p) for s in cfg.schemes for p in cfg.partitions]
    workers = thread_budget(len(cells))
    if workers == 1:
        return [_run_cell_group(cfg, s, p) for s, p in cells]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        futures = [pool.submit(_run_cell_group, cfg, s, p) for s, p in cells]
        return [f.result() for f in futures]


def _load_summaries(dirs) -> dict:
    found = {}
    for base in dirs:
        root = Path(base)
        if not root.is_dir():
            raise ReportError(f"'{base}' is not a directory")
        for summary_path in sorted(root.glob("*/summary.json")):
            try:
                payload = json.loads(summary_path.read_text(encoding="utf-8"))
                key = (payload["scheme"], payload["partition"])
                mean = float(payload["final_accuracy_mean"])
                std = float(payload["final_accuracy_std"])
            except (KeyError, ValueError, json.JSONDecodeError) as exc:
                raise ReportError(f"bad summary {summary_path}: {exc}")
            if key in found:
                raise ReportError(f"duplicate results for scheme={key[0]} partition={key[1]}")
            found[key] = (mean, std)
    return found


def compare_report(dirs) -> str:
    """Markdown comparison: schemes as columns, partitions as rows, the best
    mean per row bolded together with anything within one std of it."""
    summaries = _load_summaries(dirs)
    if len(summaries) < 2:
        raise ReportError("need at least two result sets to compare")
    schemes = sorted({s for s, _ in summaries})
    partitions = sorted({p for _, p in summaries})
    for s in schemes:
        have = {p for (s2, p) in summaries if s2 == s}
        if have != set(partitions):
            missing = ", ".join(sorted(set(partitions) - have))
            raise ReportError(f"mismatched experiment grids: scheme '{s}' lacks {missing}")
    lines = [
        "# Scheme comparison",
        "",
        "Best mean per partition in bold; schemes within one standard deviation",
        "of the best are bolded as ties.",
        "",
        "| partition | " + " | ".join(schemes) + " |",
        "|---|" + "---|" * len(schemes),
    ]
    best_counts = {s: 0 for s in schemes}
    for p in partitions:
        means = {s: summaries[(s, p)] for s in schemes}
        best_scheme = max(schemes, key=lambda s: means[s][0])
        best_mean, best_std = means[best_scheme]
        cells = []
        for s in schemes:
            mean, std = means[s]
            text = f"{mean:.4f} ± {std:.4f}"
            if mean >= best_mean - best_std:
                text = f"**{text}**"
                best_counts[s] += 1
            cells.append(text)
        lines.append(f"| {p} | " + " | ".join(cells) + " |")
    lines.append("| best count | " + " | ".join(str(best_counts[s]) for s in schemes) + " |")
    return "\n".join(lines) + "\n"
