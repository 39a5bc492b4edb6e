"""End-to-end run: data -> local clients -> stack -> global model ->
distances -> BIC -> clustering -> per-cluster models -> metrics.

Each stage failure is wrapped in a StageError naming the stage. One root
seed drives everything through keyed sub-seeds, so a full run is
reproducible byte for byte.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from fedstack import cluster_models as cm
from fedstack import clustering, federation, model_selection
from fedstack._kernels import BACKEND
from fedstack.config import (
    ClientCycle,
    CountsSource,
    CsvDataSource,
    RunConfig,
    SyntheticSource,
)
from fedstack.data import (
    CountMatrix,
    LabeledDataset,
    SyntheticSpec,
    corner_means,
    generate_synthetic,
    load_csv,
    partition_non_iid,
    split,
    wearable_study_counts,
)
from fedstack.errors import ConfigError, PreconditionError, StageError
from fedstack.metrics import Metrics
from fedstack.parallel import map_ordered
from fedstack.seeding import subseed


@dataclass
class RunReport:
    manifest: dict
    distances: clustering.DistanceMatrix
    bic: model_selection.BICResult
    assignments: dict[str, clustering.ClusterAssignment]
    cluster_models: dict[str, list[cm.ClusterModel]]
    cluster_metrics: dict[str, dict[int, Metrics]]
    global_model: federation.GlobalModel
    global_metrics: Metrics
    clients: list[federation.TrainedClient]

    def __post_init__(self):
        for method in self.manifest.get("config", {}).get("methods", []):
            if method not in self.assignments or method not in self.cluster_metrics:
                raise PreconditionError(
                    f"report is missing results for configured method {method!r}"
                )


def _stage(name: str):
    class _StageContext:
        def __enter__(self):
            return None

        def __exit__(self, exc_type, exc, tb):
            if exc is not None and not isinstance(exc, StageError):
                raise StageError(name, exc) from exc
            return False

    return _StageContext()


def _build_dataset(config: RunConfig) -> LabeledDataset:
    src = config.dataset
    if isinstance(src, CsvDataSource):
        return load_csv(src.path, src.label_column)
    assert isinstance(src, SyntheticSource)
    if src.means is not None:
        means = np.asarray(src.means, dtype=np.float64)
    else:
        means = corner_means(src.labels, src.features, src.spacing)
    spec = SyntheticSpec(
        num_labels=src.labels,
        dim=src.features,
        means=means,
        scale=src.scale,
        samples_per_class=src.samples_per_class,
    )
    return generate_synthetic(spec, subseed(config.seed, "dataset"))


def _resolve_counts(config: RunConfig) -> CountMatrix:
    src: CountsSource = config.counts
    if src.kind == "builtin":
        return wearable_study_counts()
    if src.kind == "uniform":
        width = len(str(src.clients))
        ids = [f"client_{i + 1:0{width}d}" for i in range(src.clients)]
        labels = (
            config.dataset.labels
            if isinstance(config.dataset, SyntheticSource)
            else None
        )
        if labels is None:
            raise ConfigError(
                "uniform counts need a synthetic dataset to know the label count"
            )
        return CountMatrix.uniform(ids, labels, src.per_label)
    if src.kind == "file":
        return CountMatrix.from_csv(src.path)
    return src.matrix


def _client_specs(
    config: RunConfig, counts: CountMatrix, parts: list[LabeledDataset]
) -> list[federation.ClientSpec]:
    if isinstance(config.clients, ClientCycle):
        cycle = config.clients.hidden_layer_cycle
        return [
            federation.ClientSpec(
                client_id=row.client_id,
                hidden_layers=list(cycle[i % len(cycle)]),
                dataset=part,
                epochs=config.clients.epochs,
            )
            for i, (row, part) in enumerate(zip(counts.rows, parts))
        ]
    plans = config.clients
    if len(plans) != len(counts.rows):
        raise PreconditionError(
            f"{len(plans)} client plans for {len(counts.rows)} count rows"
        )
    by_id = {p.client_id: p for p in plans if p.client_id is not None}
    specs = []
    for i, (row, part) in enumerate(zip(counts.rows, parts)):
        plan = by_id.get(row.client_id, plans[i] if not by_id else None)
        if plan is None:
            raise PreconditionError(
                f"no client plan for count row {row.client_id!r}"
            )
        specs.append(
            federation.ClientSpec(
                client_id=row.client_id,
                hidden_layers=list(plan.hidden_layers),
                dataset=part,
                epochs=plan.epochs,
            )
        )
    return specs


def run_pipeline(config: RunConfig) -> RunReport:
    """Execute the full federation experiment described by ``config``."""
    if not isinstance(config, RunConfig):
        raise ConfigError("run_pipeline expects a RunConfig")

    with _stage("dataset"):
        full = _build_dataset(config)

    with _stage("split"):
        rest, test = split(full, config.test_fraction, subseed(config.seed, "test_split"))
        meta_rel = config.meta_fraction / (1.0 - config.test_fraction)
        pool, meta = split(rest, meta_rel, subseed(config.seed, "meta_split"))

    with _stage("counts"):
        counts = _resolve_counts(config)
        if len(counts.rows) < 2:
            raise PreconditionError("a federation needs at least two clients")

    with _stage("partition"):
        parts = partition_non_iid(
            pool, counts, subseed(config.seed, "partition"), config.count_scale
        )

    with _stage("clients"):
        specs = _client_specs(config, counts, parts)
        widths = {s.penultimate_width for s in specs}
        if len(widths) != 1:
            raise PreconditionError(
                f"clients must share one penultimate width, got {sorted(widths)}"
            )
        clients = map_ordered(
            lambda spec: federation.train_client(
                spec,
                config.schedule,
                subseed(config.seed, "client", spec.client_id),
                batch_size=config.batch_size,
                holdout_fraction=config.holdout_fraction,
            ),
            specs,
            config.workers,
        )

    with _stage("stack"):
        stack, weights = federation.build_stack(clients, meta)

    meta_seed = subseed(config.seed, "meta")
    with _stage("global"):
        global_model = federation.train_global(
            stack,
            meta.labels,
            config.schedule,
            meta_seed,
            epochs=config.meta_epochs,
            batch_size=config.batch_size,
            holdout_fraction=config.holdout_fraction,
        )
        all_builder = federation.features_builder_for(clients, stack.client_ids)
        global_metrics = federation.evaluate(global_model, all_builder, test)

    with _stage("distances"):
        distances = clustering.distance_matrix(weights)

    with _stage("select_k"):
        bic = model_selection.select_k(
            weights,
            min(config.k_max, len(weights)),
            subseed(config.seed, "select_k"),
            restarts=config.restarts,
            workers=config.workers,
        )

    k_used = config.k_override if config.k_override is not None else bic.selected_k
    if k_used > len(weights):
        raise StageError(
            "cluster", PreconditionError(f"k={k_used} exceeds {len(weights)} clients")
        )

    assignments: dict[str, clustering.ClusterAssignment] = {}
    models: dict[str, list[cm.ClusterModel]] = {}
    cluster_metrics: dict[str, dict[int, Metrics]] = {}
    for method in config.methods:
        with _stage(f"cluster:{method}"):
            if method == "kmeans":
                assignment = clustering.kmeans(
                    weights, k_used, subseed(config.seed, "cluster", method)
                )
            elif method == "agglomerative":
                assignment = clustering.agglomerative(distances, k_used)
            else:
                _, assignment = clustering.gmm_fit(
                    weights, k_used, subseed(config.seed, "cluster", method)
                )
            assignments[method] = assignment
        with _stage(f"cluster_models:{method}"):
            built = cm.build_cluster_models(
                assignment,
                clients,
                meta,
                config.schedule,
                meta_seed,
                epochs=config.meta_epochs,
                batch_size=config.batch_size,
                holdout_fraction=config.holdout_fraction,
                workers=config.workers,
            )
            models[method] = built
            cluster_metrics[method] = cm.evaluate_clusters(built, clients, test)

    manifest = {
        "backend": BACKEND,
        "seed": config.seed,
        "config": config.raw,
        "client_ids": [c.client_id for c in clients],
        "num_labels": meta.num_labels,
        "selected_k": bic.selected_k,
        "k_used": k_used,
    }
    return RunReport(
        manifest=manifest,
        distances=distances,
        bic=bic,
        assignments=assignments,
        cluster_models=models,
        cluster_metrics=cluster_metrics,
        global_model=global_model,
        global_metrics=global_metrics,
        clients=clients,
    )
