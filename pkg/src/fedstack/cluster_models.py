"""Per-cluster intermediate meta-models.

Each cluster of clients gets its own stacked meta-model trained only on
its members' probability blocks; architecture and training mirror the
global model so the two stay comparable (a k=1 clustering trained with
the same seed reproduces the global model exactly).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from fedstack import federation, nn
from fedstack.clustering import ClusterAssignment
from fedstack.data import LabeledDataset
from fedstack.errors import PreconditionError
from fedstack.metrics import Metrics
from fedstack.parallel import map_ordered
from fedstack.schedule import LRSchedule


@dataclass
class ClusterModel:
    cluster_index: int
    member_ids: list[str]
    meta_net: nn.DenseNet
    trace: nn.TrainTrace
    metrics: Metrics | None = None

    def __post_init__(self):
        if not self.member_ids:
            raise PreconditionError("cluster model needs at least one member")
        expected = len(self.member_ids) * self.meta_net.num_labels
        if self.meta_net.input_dim != expected:
            raise PreconditionError(
                f"meta network input {self.meta_net.input_dim} inconsistent "
                f"with {len(self.member_ids)} members"
            )


def build_cluster_models(
    assignment: ClusterAssignment,
    clients: list[federation.TrainedClient],
    meta: LabeledDataset,
    schedule: LRSchedule,
    seed: int,
    epochs: int = 100,
    batch_size: int = 32,
    holdout_fraction: float = 0.2,
    workers: int = 1,
) -> list[ClusterModel]:
    """One meta-model per cluster, trained on the members' stacked
    probabilities against the meta labels.

    Cluster c trains with seed ``seed + c``, so cluster 0 of a k=1
    assignment reproduces a global model trained with ``seed``.
    """
    client_ids = sorted(c.client_id for c in clients)
    assigned = sorted(assignment.mapping.keys())
    if client_ids != assigned:
        raise PreconditionError(
            "assignment must cover exactly the trained clients"
        )
    num_labels = clients[0].net.num_labels

    def build_one(cluster: int) -> ClusterModel:
        member_ids = assignment.members(cluster)
        builder = federation.features_builder_for(clients, member_ids)
        features = builder(meta.features)
        net, trace = federation.fit_meta_net(
            features,
            meta.labels,
            num_labels,
            schedule,
            seed + cluster,
            epochs,
            batch_size,
            holdout_fraction,
        )
        return ClusterModel(
            cluster_index=cluster, member_ids=member_ids, meta_net=net, trace=trace
        )

    return map_ordered(build_one, range(assignment.k), workers)


def evaluate_clusters(
    models: list[ClusterModel],
    clients: list[federation.TrainedClient],
    test: LabeledDataset,
) -> dict[int, Metrics]:
    """Score every cluster model on the test set; also fills in
    ``model.metrics``."""
    if test.n < 1:
        raise PreconditionError("test dataset must not be empty")
    table: dict[int, Metrics] = {}
    for model in models:
        builder = federation.features_builder_for(clients, model.member_ids)
        result = federation.evaluate(model, builder, test)
        model.metrics = result
        table[model.cluster_index] = result
    return table
