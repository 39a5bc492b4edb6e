"""Federation protocol: heterogeneous local clients train on private
non-IID data, the server concatenates their class probabilities on a
shared meta-dataset into stack features, and a global meta-model trains
on that stack. Clients never share raw data, only predictions and their
flattened output-layer weights.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from fedstack import nn
from fedstack.data import LabeledDataset
from fedstack.errors import PreconditionError, ShapeMismatchError
from fedstack.metrics import Metrics, compute_metrics
from fedstack.schedule import LRSchedule, lr_at

META_HIDDEN_FACTOR = 2  # meta-models use one hidden layer of width 2K


@dataclass
class ClientSpec:
    """One client: identifier, private dataset, hidden stack, epoch budget.

    Hidden stacks may differ between clients; only the last hidden width
    (the penultimate width, which fixes the output-layer shape) must be
    shared across a run.
    """

    client_id: str
    hidden_layers: list[int]
    dataset: LabeledDataset
    epochs: int

    def __post_init__(self):
        if self.epochs < 1:
            raise PreconditionError("epochs must be >= 1")
        if not self.hidden_layers:
            raise PreconditionError("clients need at least one hidden layer")
        if any(w < 1 for w in self.hidden_layers):
            raise PreconditionError("hidden widths must be positive")

    @property
    def penultimate_width(self) -> int:
        return self.hidden_layers[-1]


@dataclass
class TrainedClient:
    spec: ClientSpec
    net: nn.DenseNet
    weight_vector: nn.WeightVector
    trace: nn.TrainTrace

    def __post_init__(self):
        expected = nn.extract_output_weights(self.net, self.spec.client_id)
        if not np.array_equal(expected.values, self.weight_vector.values):
            raise PreconditionError(
                "weight vector does not match the network's output layer"
            )

    @property
    def client_id(self) -> str:
        return self.spec.client_id


@dataclass
class StackFeatures:
    """Concatenated client probability blocks on a shared dataset.

    Row i holds each contributing client's K class probabilities on meta
    sample i, blocks ordered by ascending client id.
    """

    matrix: np.ndarray  # (n, C * K)
    client_ids: list[str]
    num_labels: int

    def __post_init__(self):
        self.matrix = np.ascontiguousarray(self.matrix, dtype=np.float64)
        c = len(self.client_ids)
        if self.matrix.ndim != 2 or self.matrix.shape[1] != c * self.num_labels:
            raise ShapeMismatchError(
                f"stack width {self.matrix.shape[1]} != {c} clients x "
                f"{self.num_labels} labels"
            )
        if list(self.client_ids) != sorted(self.client_ids):
            raise PreconditionError("stack blocks must be ordered by client id")
        blocks = self.matrix.reshape(self.matrix.shape[0], c, self.num_labels)
        if not np.allclose(blocks.sum(axis=2), 1.0, atol=1e-9, rtol=0):
            raise PreconditionError("every client block must sum to 1 per row")

    @property
    def n(self) -> int:
        return int(self.matrix.shape[0])

    @property
    def width(self) -> int:
        return int(self.matrix.shape[1])


@dataclass
class GlobalModel:
    meta_net: nn.DenseNet
    client_ids: list[str]
    trace: nn.TrainTrace

    def __post_init__(self):
        expected = len(self.client_ids) * self.meta_net.num_labels
        if self.meta_net.input_dim != expected:
            raise ShapeMismatchError(
                f"meta network input {self.meta_net.input_dim} != "
                f"{len(self.client_ids)} clients x {self.meta_net.num_labels} labels"
            )


def _holdout_split(
    dataset: LabeledDataset, fraction: float, rng: np.random.Generator
) -> tuple[LabeledDataset, LabeledDataset]:
    """Stratified train/eval split for tracing; labels with a single
    sample stay on the training side, and when the eval side would be
    empty the training side doubles as the eval slice."""
    hold_idx = []
    train_idx = []
    for lbl in range(dataset.num_labels):
        idx = np.flatnonzero(dataset.labels == lbl)
        if idx.size == 0:
            continue
        if idx.size < 2:
            train_idx.append(idx)
            continue
        shuffled = rng.permutation(idx)
        n_hold = math.floor(idx.size * fraction + 1e-9)
        hold_idx.append(shuffled[:n_hold])
        train_idx.append(shuffled[n_hold:])
    train = np.sort(np.concatenate(train_idx))
    hold = np.sort(np.concatenate(hold_idx)) if hold_idx else np.array([], dtype=int)
    train_set = dataset.subset(train)
    eval_set = dataset.subset(hold) if hold.size > 0 else train_set
    return train_set, eval_set


def _train_with_trace(
    net: nn.DenseNet,
    train_set: LabeledDataset,
    eval_set: LabeledDataset,
    schedule: LRSchedule,
    epochs: int,
    rng: np.random.Generator,
    batch_size: int,
) -> nn.TrainTrace:
    entries = []
    for epoch in range(1, epochs + 1):
        lr = lr_at(schedule, epoch - 1)
        loss = nn.train_epoch(
            net, train_set.features, train_set.labels, lr, rng, batch_size
        )
        acc = nn.accuracy(net, eval_set.features, eval_set.labels)
        entries.append(nn.TraceEntry(epoch=epoch, loss=loss, accuracy=acc))
    return nn.TrainTrace(entries)


def train_client(
    spec: ClientSpec,
    schedule: LRSchedule,
    seed: int,
    batch_size: int = 32,
    holdout_fraction: float = 0.2,
) -> TrainedClient:
    """Train one client on its private data under the cyclical schedule."""
    if spec.dataset.n < 1:
        raise PreconditionError("client dataset must not be empty")
    rng = np.random.default_rng(seed)
    train_set, eval_set = _holdout_split(spec.dataset, holdout_fraction, rng)
    dims = [spec.dataset.dim, *spec.hidden_layers, spec.dataset.num_labels]
    net = nn.DenseNet.initialize(dims, rng)
    trace = _train_with_trace(
        net, train_set, eval_set, schedule, spec.epochs, rng, batch_size
    )
    return TrainedClient(
        spec=spec,
        net=net,
        weight_vector=nn.extract_output_weights(net, spec.client_id),
        trace=trace,
    )


def stack_probabilities(
    clients: Sequence[TrainedClient], features: np.ndarray
) -> np.ndarray:
    """Horizontal concatenation of client probability blocks in ascending
    client-id order."""
    ordered = sorted(clients, key=lambda c: c.client_id)
    return np.hstack([nn.forward(c.net, features) for c in ordered])


def build_stack(
    clients: Sequence[TrainedClient], meta: LabeledDataset
) -> tuple[StackFeatures, nn.WeightSet]:
    """Stack features on the meta-dataset plus the clients' weight vectors."""
    if not clients:
        raise PreconditionError("need at least one trained client")
    if meta.n < 1:
        raise PreconditionError("meta dataset must not be empty")
    ordered = sorted(clients, key=lambda c: c.client_id)
    num_labels = ordered[0].net.num_labels
    pwidth = ordered[0].net.penultimate_width
    for c in ordered:
        if c.net.num_labels != num_labels:
            raise ShapeMismatchError(
                f"client {c.client_id!r} predicts {c.net.num_labels} labels, "
                f"expected {num_labels}"
            )
        if c.net.penultimate_width != pwidth:
            raise ShapeMismatchError(
                f"client {c.client_id!r} has penultimate width "
                f"{c.net.penultimate_width}, expected {pwidth}"
            )
    matrix = stack_probabilities(ordered, meta.features)
    features = StackFeatures(
        matrix=matrix,
        client_ids=[c.client_id for c in ordered],
        num_labels=num_labels,
    )
    weights = nn.WeightSet([c.weight_vector for c in ordered])
    return features, weights


def fit_meta_net(
    features: np.ndarray,
    labels: np.ndarray,
    num_labels: int,
    schedule: LRSchedule,
    seed: int,
    epochs: int,
    batch_size: int = 32,
    holdout_fraction: float = 0.2,
) -> tuple[nn.DenseNet, nn.TrainTrace]:
    """Meta-model training shared by the global and per-cluster models:
    one hidden layer of width 2K over stacked probability features."""
    dataset = LabeledDataset(
        features=features, labels=labels, num_labels=num_labels
    )
    rng = np.random.default_rng(seed)
    train_set, eval_set = _holdout_split(dataset, holdout_fraction, rng)
    dims = [dataset.dim, META_HIDDEN_FACTOR * num_labels, num_labels]
    net = nn.DenseNet.initialize(dims, rng)
    trace = _train_with_trace(
        net, train_set, eval_set, schedule, epochs, rng, batch_size
    )
    return net, trace


def train_global(
    stack: StackFeatures,
    labels: np.ndarray,
    schedule: LRSchedule,
    seed: int,
    epochs: int = 100,
    batch_size: int = 32,
    holdout_fraction: float = 0.2,
) -> GlobalModel:
    """Train the global meta-model on the full stack."""
    labels = np.asarray(labels, dtype=np.int64)
    if labels.shape[0] != stack.n:
        raise PreconditionError(
            f"stack has {stack.n} rows but {labels.shape[0]} labels were given"
        )
    net, trace = fit_meta_net(
        stack.matrix,
        labels,
        stack.num_labels,
        schedule,
        seed,
        epochs,
        batch_size,
        holdout_fraction,
    )
    return GlobalModel(meta_net=net, client_ids=list(stack.client_ids), trace=trace)


FeaturesBuilder = Callable[[np.ndarray], np.ndarray]


def features_builder_for(
    clients: Sequence[TrainedClient], member_ids: Sequence[str]
) -> FeaturesBuilder:
    """Builder mapping raw features to the stacked probabilities of the
    given members (ascending id order)."""
    by_id = {c.client_id: c for c in clients}
    missing = [cid for cid in member_ids if cid not in by_id]
    if missing:
        raise PreconditionError(f"unknown client ids: {missing}")
    members = [by_id[cid] for cid in sorted(member_ids)]

    def build(features: np.ndarray) -> np.ndarray:
        return stack_probabilities(members, features)

    return build


def evaluate(
    model: GlobalModel | "object",
    features_builder: FeaturesBuilder,
    test: LabeledDataset,
) -> Metrics:
    """Score a meta-model on a test set via its stacked features."""
    if test.n < 1:
        raise PreconditionError("test dataset must not be empty")
    meta_net = model.meta_net
    stacked = features_builder(test.features)
    if stacked.shape[1] != meta_net.input_dim:
        raise ShapeMismatchError(
            f"built features have width {stacked.shape[1]}, meta network "
            f"expects {meta_net.input_dim}"
        )
    predictions = nn.predict(meta_net, stacked)
    return compute_metrics(predictions, test.labels, test.num_labels)
