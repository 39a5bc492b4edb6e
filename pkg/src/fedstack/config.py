"""Run configuration: a single JSON file, every key validated up front.

Unknown keys are rejected anywhere in the tree so typos fail fast instead
of silently falling back to defaults. Defaults are listed in _DEFAULTS.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

from fedstack.data import CountMatrix, CountRow
from fedstack.errors import ConfigError
from fedstack.schedule import LRSchedule

METHODS = ("kmeans", "agglomerative", "gmm")

_DEFAULTS = {
    "count_scale": 0.01,
    "meta_fraction": 0.2,
    "test_fraction": 0.2,
    "methods": list(METHODS),
    "k": None,
    "k_max": 9,
    "restarts": 5,
    "schedule": {"base_lr": 1e-5, "max_lr": 1e-3, "step_size": 4},
    "meta_epochs": 100,
    "batch_size": 32,
    "holdout_fraction": 0.2,
    "workers": 1,
    "out_dir": None,
}

_TOP_KEYS = {"seed", "dataset", "counts", "clients"} | set(_DEFAULTS)


def _require_keys(section: dict, allowed: set, required: set, where: str) -> None:
    unknown = set(section) - allowed
    if unknown:
        raise ConfigError(f"{where}: unknown keys {sorted(unknown)}")
    missing = required - set(section)
    if missing:
        raise ConfigError(f"{where}: missing keys {sorted(missing)}")


def _as_int(value, where: str, minimum: int | None = None) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(f"{where}: expected an integer, got {value!r}")
    if minimum is not None and value < minimum:
        raise ConfigError(f"{where}: must be >= {minimum}, got {value}")
    return value


def _as_float(value, where: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{where}: expected a number, got {value!r}")
    return float(value)


@dataclass
class SyntheticSource:
    labels: int
    features: int
    scale: float
    samples_per_class: int
    spacing: float | None = None
    means: list | None = None


@dataclass
class CsvDataSource:
    path: str
    label_column: str


@dataclass
class CountsSource:
    kind: str  # builtin | uniform | file | inline
    name: str | None = None
    clients: int | None = None
    per_label: int | None = None
    path: str | None = None
    matrix: CountMatrix | None = None


@dataclass
class ClientPlan:
    client_id: str | None
    hidden_layers: list[int]
    epochs: int


@dataclass
class ClientCycle:
    hidden_layer_cycle: list[list[int]]
    epochs: int


@dataclass
class RunConfig:
    seed: int
    dataset: SyntheticSource | CsvDataSource
    counts: CountsSource
    clients: list[ClientPlan] | ClientCycle
    count_scale: float
    meta_fraction: float
    test_fraction: float
    methods: list[str]
    k_override: int | None
    k_max: int
    restarts: int
    schedule: LRSchedule
    meta_epochs: int
    batch_size: int
    holdout_fraction: float
    workers: int
    out_dir: str | None
    raw: dict  # normalized echo for the manifest


def _parse_dataset(section) -> SyntheticSource | CsvDataSource:
    if not isinstance(section, dict):
        raise ConfigError("dataset: expected an object")
    kind = section.get("type")
    if kind == "synthetic":
        _require_keys(
            section,
            {"type", "labels", "features", "scale", "samples_per_class", "spacing", "means"},
            {"type", "labels", "features", "scale", "samples_per_class"},
            "dataset",
        )
        spacing = section.get("spacing")
        means = section.get("means")
        if (spacing is None) == (means is None):
            raise ConfigError("dataset: give exactly one of 'spacing' or 'means'")
        return SyntheticSource(
            labels=_as_int(section["labels"], "dataset.labels", 2),
            features=_as_int(section["features"], "dataset.features", 1),
            scale=_as_float(section["scale"], "dataset.scale"),
            samples_per_class=_as_int(
                section["samples_per_class"], "dataset.samples_per_class", 1
            ),
            spacing=None if spacing is None else _as_float(spacing, "dataset.spacing"),
            means=means,
        )
    if kind == "csv":
        _require_keys(
            section, {"type", "path", "label_column"}, {"type", "path", "label_column"},
            "dataset",
        )
        return CsvDataSource(path=str(section["path"]), label_column=str(section["label_column"]))
    raise ConfigError(f"dataset.type must be 'synthetic' or 'csv', got {kind!r}")


def _parse_counts(section) -> CountsSource:
    if not isinstance(section, dict):
        raise ConfigError("counts: expected an object")
    kind = section.get("type")
    if kind == "builtin":
        _require_keys(section, {"type", "name"}, {"type", "name"}, "counts")
        if section["name"] != "wearable15":
            raise ConfigError(f"counts.name: unknown builtin {section['name']!r}")
        return CountsSource(kind="builtin", name=section["name"])
    if kind == "uniform":
        _require_keys(section, {"type", "clients", "per_label"}, {"type", "clients", "per_label"}, "counts")
        return CountsSource(
            kind="uniform",
            clients=_as_int(section["clients"], "counts.clients", 2),
            per_label=_as_int(section["per_label"], "counts.per_label", 1),
        )
    if kind == "file":
        _require_keys(section, {"type", "path"}, {"type", "path"}, "counts")
        return CountsSource(kind="file", path=str(section["path"]))
    if kind == "inline":
        _require_keys(section, {"type", "rows"}, {"type", "rows"}, "counts")
        rows = section["rows"]
        if not isinstance(rows, list) or len(rows) < 2:
            raise ConfigError("counts.rows: expected a list of at least two rows")
        parsed = []
        for i, row in enumerate(rows):
            _require_keys(
                row, {"client_id", "total", "counts"}, {"client_id", "counts"},
                f"counts.rows[{i}]",
            )
            counts = tuple(
                _as_int(c, f"counts.rows[{i}].counts", 0) for c in row["counts"]
            )
            total = row.get("total", sum(counts))
            parsed.append(CountRow(str(row["client_id"]), _as_int(total, "total"), counts))
        return CountsSource(kind="inline", matrix=CountMatrix(parsed))
    raise ConfigError(
        f"counts.type must be one of builtin/uniform/file/inline, got {kind!r}"
    )


def _parse_clients(section) -> list[ClientPlan] | ClientCycle:
    if isinstance(section, list):
        if len(section) < 2:
            raise ConfigError("clients: need at least two client entries")
        plans = []
        for i, entry in enumerate(section):
            _require_keys(
                entry,
                {"client_id", "hidden_layers", "epochs"},
                {"hidden_layers", "epochs"},
                f"clients[{i}]",
            )
            hidden = [_as_int(w, f"clients[{i}].hidden_layers", 1) for w in entry["hidden_layers"]]
            if not hidden:
                raise ConfigError(f"clients[{i}]: hidden_layers must not be empty")
            plans.append(
                ClientPlan(
                    client_id=None if "client_id" not in entry else str(entry["client_id"]),
                    hidden_layers=hidden,
                    epochs=_as_int(entry["epochs"], f"clients[{i}].epochs", 1),
                )
            )
        widths = {p.hidden_layers[-1] for p in plans}
        if len(widths) != 1:
            raise ConfigError(
                f"clients: all hidden stacks must share the last width, got {sorted(widths)}"
            )
        return plans
    if isinstance(section, dict):
        _require_keys(
            section, {"hidden_layer_cycle", "epochs"}, {"hidden_layer_cycle", "epochs"},
            "clients",
        )
        cycle = []
        for i, stack in enumerate(section["hidden_layer_cycle"]):
            hidden = [_as_int(w, f"clients.hidden_layer_cycle[{i}]", 1) for w in stack]
            if not hidden:
                raise ConfigError("clients.hidden_layer_cycle: stacks must not be empty")
            cycle.append(hidden)
        if not cycle:
            raise ConfigError("clients.hidden_layer_cycle must not be empty")
        widths = {stack[-1] for stack in cycle}
        if len(widths) != 1:
            raise ConfigError(
                f"clients: all hidden stacks must share the last width, got {sorted(widths)}"
            )
        return ClientCycle(
            hidden_layer_cycle=cycle,
            epochs=_as_int(section["epochs"], "clients.epochs", 1),
        )
    raise ConfigError("clients: expected a list of plans or a cycle object")


def config_from_dict(raw: dict) -> RunConfig:
    if not isinstance(raw, dict):
        raise ConfigError("config root must be an object")
    _require_keys(raw, _TOP_KEYS, {"seed", "dataset", "counts", "clients"}, "config")
    merged = dict(_DEFAULTS)
    merged.update(raw)

    seed = _as_int(merged["seed"], "seed", 0)
    dataset = _parse_dataset(merged["dataset"])
    counts = _parse_counts(merged["counts"])
    clients = _parse_clients(merged["clients"])

    schedule_raw = merged["schedule"]
    _require_keys(
        schedule_raw, {"base_lr", "max_lr", "step_size"}, set(), "schedule"
    )
    sched_merged = dict(_DEFAULTS["schedule"])
    sched_merged.update(schedule_raw)
    schedule = LRSchedule(
        base_lr=_as_float(sched_merged["base_lr"], "schedule.base_lr"),
        max_lr=_as_float(sched_merged["max_lr"], "schedule.max_lr"),
        step_size=_as_int(sched_merged["step_size"], "schedule.step_size", 1),
    )

    meta_fraction = _as_float(merged["meta_fraction"], "meta_fraction")
    test_fraction = _as_float(merged["test_fraction"], "test_fraction")
    for name, frac in (("meta_fraction", meta_fraction), ("test_fraction", test_fraction)):
        if not 0.0 < frac < 1.0:
            raise ConfigError(f"{name} must lie in (0, 1), got {frac}")
    if meta_fraction + test_fraction >= 1.0:
        raise ConfigError("meta_fraction + test_fraction must stay below 1")

    methods = merged["methods"]
    if not isinstance(methods, list) or any(m not in METHODS for m in methods):
        raise ConfigError(f"methods must be a subset of {list(METHODS)}")
    if len(set(methods)) != len(methods):
        raise ConfigError("methods must not repeat")

    k_override = merged["k"]
    if k_override is not None:
        k_override = _as_int(k_override, "k", 1)

    count_scale = _as_float(merged["count_scale"], "count_scale")
    if count_scale <= 0:
        raise ConfigError("count_scale must be positive")

    holdout = _as_float(merged["holdout_fraction"], "holdout_fraction")
    if not 0.0 < holdout < 1.0:
        raise ConfigError("holdout_fraction must lie in (0, 1)")

    if counts.kind == "uniform" and not isinstance(dataset, SyntheticSource):
        raise ConfigError("uniform counts require a synthetic dataset")

    out_dir = merged["out_dir"]
    # the echo feeds the manifest: drop keys that only steer execution
    # (where files land, how many threads) and cannot change any result
    echo = {k: v for k, v in merged.items() if k not in ("out_dir", "workers")}

    return RunConfig(
        seed=seed,
        dataset=dataset,
        counts=counts,
        clients=clients,
        count_scale=count_scale,
        meta_fraction=meta_fraction,
        test_fraction=test_fraction,
        methods=list(methods),
        k_override=k_override,
        k_max=_as_int(merged["k_max"], "k_max", 1),
        restarts=_as_int(merged["restarts"], "restarts", 1),
        schedule=schedule,
        meta_epochs=_as_int(merged["meta_epochs"], "meta_epochs", 1),
        batch_size=_as_int(merged["batch_size"], "batch_size", 1),
        holdout_fraction=holdout,
        workers=_as_int(merged["workers"], "workers", 1),
        out_dir=None if out_dir is None else str(out_dir),
        raw=echo,
    )


def load_config(path) -> RunConfig:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from None
    return config_from_dict(raw)
