"""Dense feed-forward classifiers trained by minibatch SGD.

Networks are stacks of fully connected layers: relu on hidden layers and a
softmax output over ``num_labels`` classes. The forward pass and the fused
loss/gradient computation run on the active kernel backend; everything in
this module is orchestration and bookkeeping around those two calls.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from fedstack import _kernels as kernels
from fedstack.errors import CsvFormatError, PreconditionError, ShapeMismatchError

HIDDEN_ACTIVATION = "relu"
OUTPUT_ACTIVATION = "softmax"


@dataclass
class Layer:
    """One dense layer: weights (out_dim, in_dim), bias (out_dim,)."""

    weights: np.ndarray
    bias: np.ndarray
    activation: str

    def __post_init__(self):
        self.weights = np.ascontiguousarray(self.weights, dtype=np.float64)
        self.bias = np.ascontiguousarray(self.bias, dtype=np.float64)
        if self.weights.ndim != 2 or self.bias.ndim != 1:
            raise ShapeMismatchError("layer weights must be 2-D and bias 1-D")
        if self.weights.shape[0] != self.bias.shape[0]:
            raise ShapeMismatchError(
                f"bias length {self.bias.shape[0]} does not match "
                f"{self.weights.shape[0]} output units"
            )
        if self.activation not in (HIDDEN_ACTIVATION, OUTPUT_ACTIVATION):
            raise PreconditionError(f"unknown activation: {self.activation!r}")

    @property
    def in_dim(self) -> int:
        return self.weights.shape[1]

    @property
    def out_dim(self) -> int:
        return self.weights.shape[0]


class DenseNet:
    """Chain of dense layers; the final layer is always the softmax head."""

    def __init__(self, layers: Sequence[Layer]):
        layers = list(layers)
        if not layers:
            raise PreconditionError("a network needs at least one layer")
        for prev, nxt in zip(layers, layers[1:]):
            if prev.out_dim != nxt.in_dim:
                raise ShapeMismatchError(
                    f"layer output width {prev.out_dim} feeds a layer "
                    f"expecting {nxt.in_dim} inputs"
                )
        for layer in layers[:-1]:
            if layer.activation != HIDDEN_ACTIVATION:
                raise PreconditionError("hidden layers must use relu")
        if layers[-1].activation != OUTPUT_ACTIVATION:
            raise PreconditionError("the final layer must use softmax")
        self.layers = layers

    @property
    def input_dim(self) -> int:
        return self.layers[0].in_dim

    @property
    def num_labels(self) -> int:
        return self.layers[-1].out_dim

    @property
    def penultimate_width(self) -> int:
        return self.layers[-1].in_dim

    def weight_arrays(self) -> list[np.ndarray]:
        return [layer.weights for layer in self.layers]

    def bias_arrays(self) -> list[np.ndarray]:
        return [layer.bias for layer in self.layers]

    def parameter_count(self) -> int:
        return sum(l.weights.size + l.bias.size for l in self.layers)

    def copy(self) -> "DenseNet":
        return DenseNet(
            [Layer(l.weights.copy(), l.bias.copy(), l.activation) for l in self.layers]
        )

    @classmethod
    def initialize(cls, dims: Sequence[int], rng: np.random.Generator) -> "DenseNet":
        """Fresh network for the given layer widths (input, hidden..., output).

        Weights draw from uniform(-s, s) with s = sqrt(6 / (in + out));
        biases start at zero.
        """
        dims = [int(d) for d in dims]
        if len(dims) < 2:
            raise PreconditionError("need at least input and output widths")
        if any(d < 1 for d in dims):
            raise PreconditionError("layer widths must be positive")
        layers = []
        for i, (din, dout) in enumerate(zip(dims, dims[1:])):
            s = np.sqrt(6.0 / (din + dout))
            w = rng.uniform(-s, s, size=(dout, din))
            act = OUTPUT_ACTIVATION if i == len(dims) - 2 else HIDDEN_ACTIVATION
            layers.append(Layer(w, np.zeros(dout), act))
        return cls(layers)


def forward(net: DenseNet, batch: np.ndarray) -> np.ndarray:
    """Class probabilities for a batch; each row sums to 1."""
    x = np.asarray(batch, dtype=np.float64)
    if x.ndim != 2:
        raise ShapeMismatchError(f"batch must be 2-D, got {x.ndim}-D")
    if x.shape[1] != net.input_dim:
        raise ShapeMismatchError(
            f"batch has {x.shape[1]} features, network expects {net.input_dim}"
        )
    if not np.all(np.isfinite(x)):
        raise PreconditionError("batch contains non-finite values")
    return kernels.forward_probs(
        net.weight_arrays(), net.bias_arrays(), np.ascontiguousarray(x)
    )


def predict(net: DenseNet, batch: np.ndarray) -> np.ndarray:
    return np.argmax(forward(net, batch), axis=1)


def accuracy(net: DenseNet, features: np.ndarray, labels: np.ndarray) -> float:
    labels = np.asarray(labels)
    return float(np.mean(predict(net, features) == labels))


def dataset_loss(net: DenseNet, features: np.ndarray, labels: np.ndarray) -> float:
    """Mean cross-entropy of the current parameters on a fixed batch."""
    probs = forward(net, features)
    rows = np.arange(probs.shape[0])
    return float(-np.log(np.maximum(probs[rows, labels], 1e-300)).mean())


def train_epoch(
    net: DenseNet,
    features: np.ndarray,
    labels: np.ndarray,
    lr: float,
    rng: np.random.Generator,
    batch_size: int = 32,
) -> float:
    """One pass of minibatch SGD; returns the mean loss over all samples.

    The shuffle order comes from ``rng``, so identical (net, data, lr,
    generator state) reproduce bit-identical parameters.
    """
    x = np.asarray(features, dtype=np.float64)
    y = np.asarray(labels, dtype=np.int64)
    if x.ndim != 2 or x.shape[0] != y.shape[0]:
        raise ShapeMismatchError("features and labels disagree on sample count")
    n = x.shape[0]
    if n == 0:
        raise PreconditionError("cannot train on an empty dataset")
    if x.shape[1] != net.input_dim:
        raise ShapeMismatchError(
            f"batch has {x.shape[1]} features, network expects {net.input_dim}"
        )
    if y.min() < 0 or y.max() >= net.num_labels:
        raise PreconditionError(
            f"labels must lie in [0, {net.num_labels}), got range "
            f"[{y.min()}, {y.max()}]"
        )
    if lr < 0:
        raise PreconditionError("learning rate must be >= 0")
    if batch_size < 1:
        raise PreconditionError("batch_size must be >= 1")

    ws = net.weight_arrays()
    bs = net.bias_arrays()
    perm = rng.permutation(n)
    total = 0.0
    for start in range(0, n, batch_size):
        idx = perm[start : start + batch_size]
        xb = np.ascontiguousarray(x[idx])
        yb = np.ascontiguousarray(y[idx])
        loss, gws, gbs = kernels.loss_and_grads(ws, bs, xb, yb)
        for w, gw in zip(ws, gws):
            w -= lr * gw
        for b, gb in zip(bs, gbs):
            b -= lr * gb
        total += loss * len(idx)
    return total / n


@dataclass(frozen=True)
class TraceEntry:
    epoch: int
    loss: float
    accuracy: float


@dataclass
class TrainTrace:
    """Per-epoch (loss, held-out accuracy) record of one training run."""

    entries: list[TraceEntry] = field(default_factory=list)

    def __post_init__(self):
        for i, e in enumerate(self.entries):
            if e.epoch != i + 1:
                raise PreconditionError("trace epochs must count 1, 2, ...")
            if not (np.isfinite(e.loss) and np.isfinite(e.accuracy)):
                raise PreconditionError("trace values must be finite")
            if not 0.0 <= e.accuracy <= 1.0:
                raise PreconditionError("trace accuracy must lie in [0, 1]")

    def losses(self) -> list[float]:
        return [e.loss for e in self.entries]

    def accuracies(self) -> list[float]:
        return [e.accuracy for e in self.entries]


@dataclass(frozen=True)
class WeightVector:
    """Flattened output-layer parameters of one client's network."""

    client_id: str
    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(
            self, "values", np.ascontiguousarray(self.values, dtype=np.float64)
        )
        if self.values.ndim != 1:
            raise ShapeMismatchError("weight vector must be 1-D")
        if not np.all(np.isfinite(self.values)):
            raise PreconditionError(
                f"weight vector for client {self.client_id!r} has non-finite entries"
            )

    def __len__(self) -> int:
        return int(self.values.shape[0])


@dataclass
class WeightSet:
    """Weight vectors of several clients; all must share one length."""

    vectors: list[WeightVector]

    def __post_init__(self):
        if not self.vectors:
            raise PreconditionError("weight set must not be empty")
        length = len(self.vectors[0])
        for v in self.vectors:
            if len(v) != length:
                raise ShapeMismatchError(
                    f"client {v.client_id!r} has a weight vector of length "
                    f"{len(v)}, expected {length}"
                )
        ids = [v.client_id for v in self.vectors]
        if len(set(ids)) != len(ids):
            raise PreconditionError("duplicate client ids in weight set")

    def __len__(self) -> int:
        return len(self.vectors)

    @property
    def client_ids(self) -> list[str]:
        return [v.client_id for v in self.vectors]

    def as_matrix(self) -> np.ndarray:
        return np.stack([v.values for v in self.vectors])

    def ordered(self) -> "WeightSet":
        return WeightSet(sorted(self.vectors, key=lambda v: v.client_id))


def extract_output_weights(net: DenseNet, client_id: str) -> WeightVector:
    """Final-layer weight matrix flattened row-major, then the bias."""
    last = net.layers[-1]
    values = np.concatenate([last.weights.ravel(), last.bias])
    return WeightVector(client_id=client_id, values=values)


def gradient_check(
    net: DenseNet, features_row: np.ndarray, label: int, epsilon: float = 1e-5
) -> float:
    """Max relative error between analytic and central-difference gradients.

    Relative error per parameter is |a - n| / max(|a|, |n|, 1e-8), taken
    over every weight and bias entry for the single labeled sample.
    """
    if not 0.0 < epsilon <= 1e-2:
        raise PreconditionError("epsilon must lie in (0, 1e-2]")
    x = np.ascontiguousarray(
        np.asarray(features_row, dtype=np.float64).reshape(1, -1)
    )
    y = np.array([label], dtype=np.int64)
    if y[0] < 0 or y[0] >= net.num_labels:
        raise PreconditionError("label out of range")

    ws = net.weight_arrays()
    bs = net.bias_arrays()
    _, gws, gbs = kernels.loss_and_grads(ws, bs, x, y)

    def loss_at() -> float:
        probs = kernels.forward_probs(ws, bs, x)
        return float(-np.log(max(probs[0, label], 1e-300)))

    worst = 0.0
    for analytic, param in list(zip(gws, ws)) + list(zip(gbs, bs)):
        flat = param.reshape(-1)
        aflat = np.asarray(analytic).reshape(-1)
        for i in range(flat.shape[0]):
            orig = flat[i]
            flat[i] = orig + epsilon
            up = loss_at()
            flat[i] = orig - epsilon
            down = loss_at()
            flat[i] = orig
            numeric = (up - down) / (2.0 * epsilon)
            denom = max(abs(aflat[i]), abs(numeric), 1e-8)
            worst = max(worst, abs(aflat[i] - numeric) / denom)
    return worst


def write_weight_csv(weights: WeightSet, path) -> None:
    """One row per client: id, then values at 17 significant digits."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        for v in weights.vectors:
            fh.write(v.client_id + "," + ",".join(f"{x:.17g}" for x in v.values) + "\n")


def read_weight_csv(path) -> WeightSet:
    vectors = []
    with open(path, "r", encoding="utf-8", newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row:
                continue
            if len(row) < 2:
                raise CsvFormatError(f"row {lineno}: expected id plus values")
            try:
                values = np.array([float(c) for c in row[1:]])
            except ValueError as exc:
                raise CsvFormatError(f"row {lineno}: {exc}") from None
            vectors.append(WeightVector(client_id=row[0], values=values))
    if not vectors:
        raise CsvFormatError(f"no weight vectors found in {path}")
    return WeightSet(vectors)
