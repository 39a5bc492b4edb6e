import numpy as np
import pytest

from fedstack import federation
from fedstack.data import (
    LabeledDataset,
    SyntheticSpec,
    corner_means,
    generate_synthetic,
)
from fedstack.schedule import LRSchedule

# Cyclical schedule sized for desk-scale runs: a couple hundred SGD steps
# per training has to cover what full-scale runs do in tens of thousands.
DESK_SCHEDULE = LRSchedule(base_lr=1e-3, max_lr=0.1, step_size=4)


def blob_dataset(
    num_labels: int = 4,
    dim: int = 4,
    spacing: float = 8.0,
    scale: float = 0.5,
    samples_per_class: int = 100,
    seed: int = 0,
) -> LabeledDataset:
    spec = SyntheticSpec(
        num_labels=num_labels,
        dim=dim,
        means=corner_means(num_labels, dim, spacing),
        scale=scale,
        samples_per_class=samples_per_class,
    )
    return generate_synthetic(spec, seed)


def train_small_clients(
    n_clients: int = 4,
    num_labels: int = 4,
    epochs: int = 25,
    seed: int = 0,
    samples_per_class: int = 150,
) -> tuple[list, LabeledDataset, LabeledDataset]:
    """A few trained clients plus (meta, test) splits of a shared task."""
    from fedstack.data import split

    full = blob_dataset(
        num_labels=num_labels, samples_per_class=samples_per_class, seed=seed
    )
    rest, test = split(full, 0.25, seed + 1)
    pool, meta = split(rest, 0.3, seed + 2)
    rng = np.random.default_rng(seed + 3)
    order = rng.permutation(pool.n)
    chunks = np.array_split(order, n_clients)
    hidden = [[16, 8], [24, 8], [12, 8]]
    clients = []
    for i, chunk in enumerate(chunks):
        spec = federation.ClientSpec(
            client_id=f"c{i:02d}",
            hidden_layers=hidden[i % len(hidden)],
            dataset=pool.subset(np.sort(chunk)),
            epochs=epochs,
        )
        clients.append(
            federation.train_client(spec, DESK_SCHEDULE, seed=1000 + i)
        )
    return clients, meta, test


@pytest.fixture
def small_clients():
    return train_small_clients()
