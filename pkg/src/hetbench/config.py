"""Experiment configuration: flat key=value files with dotted namespaces.

Example::

    scheme = pfedjs,fedavg     # comma lists sweep
    partition = dir0.5
    seed = 1,2,3
    race.R = 50

Unknown keys, duplicates, and out-of-range values are rejected with the line
number. Omitted keys fall back to the benchmark defaults (10 clients, 50
rounds, 10 local epochs, batch 64).
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

from .cdiv import CollabConfig
from .data import parse_partition
from .divergence import JsConfig
from .engine import BASELINES, SCHEMES, RaceConfig
from .errors import ConfigError, HetbenchError
from .graph import GraphConfig
from .model import MAX_HIDDEN_LAYERS


@dataclass(frozen=True)
class DataConfig:
    source: str = "synthetic"  # or "idx"
    classes: int = 10
    dim: int = 16
    per_class: int = 100
    spread: float = 1.0
    images: str = ""
    labels: str = ""


@dataclass(frozen=True)
class SvConfig:
    top_k: int = 3
    ema_eta: float = 0.5
    self_weight: float = 0.4


@dataclass(frozen=True)
class CeConfig:
    steps: int = 2000
    lr: float = 0.05
    batch: int = 32
    pref_steps: int = 300
    pref_lr: float = 0.1


@dataclass(frozen=True)
class ExperimentConfig:
    schemes: tuple = ("pfedjs",)
    partitions: tuple = ("iid",)
    seeds: tuple = (0,)
    eval_split: str = "local"
    num_clients: int = 10
    rounds: int = 50
    local_epochs: int = 10
    batch_size: int = 64
    learning_rate: float = 0.01
    momentum: float = 0.9
    hidden: tuple = (64,)
    global_holdout: float = 0.2
    out_dir: str = "results"
    data: DataConfig = DataConfig()
    js: JsConfig = JsConfig()
    collab: CollabConfig = CollabConfig()
    race: RaceConfig = RaceConfig()
    sv: SvConfig = SvConfig()
    ce: CeConfig = CeConfig()
    graph: GraphConfig = GraphConfig()


def _parse_int(raw: str) -> int:
    try:
        return int(raw)
    except ValueError:
        raise ValueError(f"expected an integer, got '{raw}'")


def _parse_float(raw: str) -> float:
    try:
        return float(raw)
    except ValueError:
        raise ValueError(f"expected a number, got '{raw}'")


def _parse_int_list(raw: str) -> tuple:
    if raw == "" or raw.lower() == "none":
        return ()
    return tuple(_parse_int(part.strip()) for part in raw.split(","))


def _parse_str_list(raw: str) -> tuple:
    parts = tuple(p.strip() for p in raw.split(",") if p.strip())
    if not parts:
        raise ValueError("expected a non-empty value")
    return parts


def _choice(options):
    def parse(raw: str) -> str:
        if raw not in options:
            raise ValueError(f"expected one of {'/'.join(options)}, got '{raw}'")
        return raw

    return parse


def _checked(parse, check, msg):
    def wrapped(raw: str):
        value = parse(raw)
        if not check(value):
            raise ValueError(f"{msg}, got '{raw}'")
        return value

    return wrapped


_ALL_SCHEMES = SCHEMES + BASELINES

# key -> (target path in the config tree, parser)
KEYS = {
    "scheme": ("schemes", _checked(_parse_str_list, lambda v: all(s in _ALL_SCHEMES for s in v), f"schemes are {', '.join(_ALL_SCHEMES)}")),
    "partition": ("partitions", _parse_str_list),
    "seed": ("seeds", _checked(_parse_int_list, lambda v: len(v) > 0 and all(s >= 0 for s in v), "need one or more seeds >= 0")),
    "eval": ("eval_split", _choice(("local", "global"))),
    "num_clients": ("num_clients", _checked(_parse_int, lambda v: v >= 2, "need >= 2 clients")),
    "rounds": ("rounds", _checked(_parse_int, lambda v: v >= 1, "need >= 1 round")),
    "local_epochs": ("local_epochs", _checked(_parse_int, lambda v: v >= 0, "need >= 0 epochs")),
    "batch_size": ("batch_size", _checked(_parse_int, lambda v: v >= 1, "need batch >= 1")),
    "learning_rate": ("learning_rate", _checked(_parse_float, lambda v: v > 0, "need a positive learning rate")),
    "momentum": ("momentum", _checked(_parse_float, lambda v: 0 <= v < 1, "momentum must be in [0, 1)")),
    "hidden": ("hidden", _checked(_parse_int_list, lambda v: len(v) <= MAX_HIDDEN_LAYERS and all(h >= 1 for h in v), f"at most {MAX_HIDDEN_LAYERS} positive layer widths")),
    "global_holdout": ("global_holdout", _checked(_parse_float, lambda v: 0 < v <= 0.5, "holdout fraction must be in (0, 0.5]")),
    "out": ("out_dir", lambda raw: raw),
    "data.source": ("data.source", _choice(("synthetic", "idx"))),
    "data.classes": ("data.classes", _checked(_parse_int, lambda v: v >= 2, "need >= 2 classes")),
    "data.dim": ("data.dim", _checked(_parse_int, lambda v: v >= 1, "need dim >= 1")),
    "data.per_class": ("data.per_class", _checked(_parse_int, lambda v: v >= 1, "need >= 1 sample per class")),
    "data.spread": ("data.spread", _checked(_parse_float, lambda v: v >= 0, "spread must be >= 0")),
    "data.images": ("data.images", lambda raw: raw),
    "data.labels": ("data.labels", lambda raw: raw),
    "js.space": ("js.space", _choice(("label", "joint"))),
    "js.bins": ("js.feature_bins", _checked(_parse_int, lambda v: v >= 1, "need >= 1 bin")),
    "js.q1": ("js.q1", _checked(_parse_float, lambda v: v >= 0, "q1 must be >= 0")),
    "js.q2": ("js.q2", _checked(_parse_float, lambda v: v >= 0, "q2 must be >= 0")),
    "js.steps": ("js.steps", _checked(_parse_int, lambda v: v >= 1, "need >= 1 step")),
    "js.lr": ("js.lr", _checked(_parse_float, lambda v: v > 0, "need a positive step size")),
    "collab.q1": ("collab.q1", _checked(_parse_float, lambda v: v >= 0, "q1 must be >= 0")),
    "collab.q2": ("collab.q2", _checked(_parse_float, lambda v: v >= 0, "q2 must be >= 0")),
    "collab.steps": ("collab.steps", _checked(_parse_int, lambda v: v >= 1, "need >= 1 step")),
    "collab.lr": ("collab.lr", _checked(_parse_float, lambda v: v > 0, "need a positive step size")),
    "collab.holdout": ("collab.holdout_fraction", _checked(_parse_float, lambda v: 0 < v <= 0.5, "holdout fraction must be in (0, 0.5]")),
    "race.R": ("race.num_tables", _checked(_parse_int, lambda v: v >= 1, "need >= 1 table")),
    "race.bits": ("race.bits", _checked(_parse_int, lambda v: 1 <= v <= 20, "bits must be in [1, 20]")),
    "race.gamma": ("race.label_scale", _checked(_parse_float, lambda v: v >= 0, "gamma must be >= 0")),
    "race.K": ("race.sample_size", _checked(_parse_int, lambda v: v >= 1, "need K >= 1")),
    "race.finetune": ("race.fine_tune_epochs", _checked(_parse_int, lambda v: v >= 0, "need >= 0 epochs")),
    "sv.K": ("sv.top_k", _checked(_parse_int, lambda v: v >= 1, "need K >= 1")),
    "sv.eta": ("sv.ema_eta", _checked(_parse_float, lambda v: 0 <= v <= 1, "eta must be in [0, 1]")),
    "sv.self_weight": ("sv.self_weight", _checked(_parse_float, lambda v: 0 <= v < 1, "self weight must be in [0, 1)")),
    "graph.lambda": ("graph.lam", _checked(_parse_float, lambda v: v >= 0, "lambda must be >= 0")),
    "graph.steps": ("graph.inner_steps", _checked(_parse_int, lambda v: v >= 1, "need >= 1 step")),
    "graph.lr": ("graph.inner_lr", _checked(_parse_float, lambda v: v > 0, "need a positive step size")),
    "graph.batch": ("graph.loss_batch", _checked(_parse_int, lambda v: v >= 1, "need batch >= 1")),
    "ce.steps": ("ce.steps", _checked(_parse_int, lambda v: v >= 1, "need >= 1 step")),
    "ce.lr": ("ce.lr", _checked(_parse_float, lambda v: v > 0, "need a positive step size")),
    "ce.batch": ("ce.batch", _checked(_parse_int, lambda v: v >= 1, "need batch >= 1")),
    "ce.pref_steps": ("ce.pref_steps", _checked(_parse_int, lambda v: v >= 1, "need >= 1 step")),
    "ce.pref_lr": ("ce.pref_lr", _checked(_parse_float, lambda v: v > 0, "need a positive step size")),
}

_GROUPS = {
    "data": DataConfig,
    "js": JsConfig,
    "collab": CollabConfig,
    "race": RaceConfig,
    "sv": SvConfig,
    "ce": CeConfig,
    "graph": GraphConfig,
}


def parse_config_text(text: str) -> ExperimentConfig:
    entries = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, _, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if key not in KEYS:
            raise ConfigError(f"line {lineno}: unknown key '{key}'")
        if key in entries:
            first = entries[key][2]
            raise ConfigError(f"line {lineno}: duplicate key '{key}' (first set on line {first})")
        entries[key] = (key, value, lineno)

    top = {}
    grouped = {name: {} for name in _GROUPS}
    for key, value, lineno in entries.values():
        path, parse = KEYS[key]
        try:
            parsed = parse(value)
        except ValueError as exc:
            raise ConfigError(f"line {lineno}: {key}: {exc}")
        if "." in path:
            group, attr = path.split(".", 1)
            grouped[group][attr] = (parsed, lineno, key)
        else:
            top[path] = parsed

    kwargs = dict(top)
    for name, cls in _GROUPS.items():
        fields = {attr: parsed for attr, (parsed, _, _) in grouped[name].items()}
        try:
            kwargs[name] = cls(**fields)
        except HetbenchError as exc:
            lines = ", ".join(str(l) for _, l, _ in grouped[name].values())
            raise ConfigError(f"{name}.* (lines {lines}): {exc}")
    cfg = ExperimentConfig(**kwargs)
    _cross_validate(cfg, entries)
    return cfg


def _line_of(entries, key, default=0):
    return entries[key][2] if key in entries else default


def _cross_validate(cfg: ExperimentConfig, entries) -> None:
    for text in cfg.partitions:
        try:
            parse_partition(text, cfg.num_clients, seed=0)
        except HetbenchError as exc:
            lineno = _line_of(entries, "partition")
            raise ConfigError(f"line {lineno}: partition '{text}': {exc}")
    if cfg.sv.top_k > cfg.num_clients - 1 and ("pfedsv" in cfg.schemes):
        raise ConfigError(
            f"line {_line_of(entries, 'sv.K')}: sv.K must be <= num_clients - 1"
        )
    if cfg.race.sample_size > cfg.num_clients and ("race" in cfg.schemes):
        raise ConfigError(
            f"line {_line_of(entries, 'race.K')}: race.K must be <= num_clients"
        )
    if cfg.data.source == "idx" and (not cfg.data.images or not cfg.data.labels):
        raise ConfigError("data.source = idx requires data.images and data.labels paths")


def parse_config_file(path: str) -> ExperimentConfig:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config '{path}': {exc}")
    return parse_config_text(text)


def apply_overrides(cfg: ExperimentConfig, scheme=None, partition=None, seeds=None, out=None):
    """Command-line flags win over file values."""
    updates = {}
    if scheme is not None:
        if scheme not in _ALL_SCHEMES:
            raise ConfigError(f"unknown scheme '{scheme}' (choose from {', '.join(_ALL_SCHEMES)})")
        updates["schemes"] = (scheme,)
    if partition is not None:
        try:
            parse_partition(partition, cfg.num_clients, seed=0)
        except HetbenchError as exc:
            raise ConfigError(f"partition '{partition}': {exc}")
        updates["partitions"] = (partition,)
    if seeds is not None:
        if not seeds or any(s < 0 for s in seeds):
            raise ConfigError("need one or more seeds >= 0")
        updates["seeds"] = tuple(seeds)
    if out is not None:
        updates["out_dir"] = out
    return dataclasses.replace(cfg, **updates) if updates else cfg
