"""Datasets: synthetic Gaussian-blob generation, CSV ingestion, non-IID
per-client partitioning driven by a label-count matrix, and stratified
train/test splitting.
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from fedstack.errors import CsvFormatError, PreconditionError, ShapeMismatchError


@dataclass
class LabeledDataset:
    features: np.ndarray  # (n, d) float64
    labels: np.ndarray  # (n,) int64 in [0, K)
    num_labels: int
    feature_names: list[str] | None = None

    def __post_init__(self):
        self.features = np.ascontiguousarray(self.features, dtype=np.float64)
        self.labels = np.ascontiguousarray(self.labels, dtype=np.int64)
        if self.features.ndim != 2:
            raise ShapeMismatchError("features must be a 2-D matrix")
        if self.labels.ndim != 1 or self.labels.shape[0] != self.features.shape[0]:
            raise ShapeMismatchError("labels must be 1-D with one entry per row")
        if self.features.shape[0] < 1:
            raise PreconditionError("dataset must contain at least one sample")
        if not np.all(np.isfinite(self.features)):
            raise PreconditionError("features contain NaN or Inf")
        if self.num_labels < 1:
            raise PreconditionError("num_labels must be positive")
        if self.labels.min() < 0 or self.labels.max() >= self.num_labels:
            raise PreconditionError(
                f"labels must lie in [0, {self.num_labels})"
            )

    @property
    def n(self) -> int:
        return int(self.features.shape[0])

    @property
    def dim(self) -> int:
        return int(self.features.shape[1])

    def subset(self, indices: np.ndarray) -> "LabeledDataset":
        idx = np.asarray(indices, dtype=np.int64)
        return LabeledDataset(
            features=self.features[idx].copy(),
            labels=self.labels[idx].copy(),
            num_labels=self.num_labels,
            feature_names=self.feature_names,
        )

    def label_histogram(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.num_labels)


@dataclass(frozen=True)
class CountRow:
    client_id: str
    declared_total: int
    counts: tuple[int, ...]


@dataclass
class CountMatrix:
    """Per-client label counts driving the non-IID partition.

    When a row's counts do not add up to its declared total, the per-label
    counts win and a warning is issued.
    """

    rows: list[CountRow]

    def __post_init__(self):
        if not self.rows:
            raise PreconditionError("count matrix must have at least one row")
        width = len(self.rows[0].counts)
        seen = set()
        for row in self.rows:
            if row.client_id in seen:
                raise PreconditionError(f"duplicate client id {row.client_id!r}")
            seen.add(row.client_id)
            if len(row.counts) != width:
                raise ShapeMismatchError("all rows must cover the same labels")
            if any(c < 0 for c in row.counts):
                raise PreconditionError("counts must be non-negative")
            if not any(c > 0 for c in row.counts):
                raise PreconditionError(
                    f"client {row.client_id!r} has no positive label count"
                )
            if row.declared_total != sum(row.counts):
                warnings.warn(
                    f"client {row.client_id!r}: declared total "
                    f"{row.declared_total} != sum of counts {sum(row.counts)}; "
                    "using the per-label counts",
                    stacklevel=2,
                )

    @property
    def num_labels(self) -> int:
        return len(self.rows[0].counts)

    @property
    def client_ids(self) -> list[str]:
        return [r.client_id for r in self.rows]

    def scaled(self, factor: float) -> "CountMatrix":
        """Scale every count by ``factor``, flooring, but keeping at least
        one sample for any originally positive count."""
        if factor <= 0:
            raise PreconditionError("scale factor must be positive")
        if factor == 1.0:
            return self
        rows = []
        for row in self.rows:
            counts = tuple(
                0 if c == 0 else max(1, math.floor(c * factor)) for c in row.counts
            )
            rows.append(CountRow(row.client_id, sum(counts), counts))
        return CountMatrix(rows)

    @classmethod
    def uniform(
        cls, client_ids: Sequence[str], num_labels: int, per_label: int
    ) -> "CountMatrix":
        if per_label < 1:
            raise PreconditionError("per_label must be >= 1")
        rows = [
            CountRow(cid, per_label * num_labels, tuple([per_label] * num_labels))
            for cid in client_ids
        ]
        return cls(rows)

    @classmethod
    def from_csv(cls, path) -> "CountMatrix":
        """Columns: client_id, total, label_0 .. label_{K-1}."""
        with open(path, "r", encoding="utf-8", newline="") as fh:
            reader = csv.reader(fh)
            try:
                header = next(reader)
            except StopIteration:
                raise CsvFormatError(f"{path} is empty") from None
            if len(header) < 3 or header[0] != "client_id" or header[1] != "total":
                raise CsvFormatError(
                    "count matrix header must be client_id,total,label_0,..."
                )
            rows = []
            for lineno, row in enumerate(reader, start=1):
                if not row:
                    continue
                if len(row) != len(header):
                    raise CsvFormatError(f"row {lineno}: wrong column count")
                try:
                    total = int(row[1])
                    counts = tuple(int(c) for c in row[2:])
                except ValueError as exc:
                    raise CsvFormatError(f"row {lineno}: {exc}") from None
                rows.append(CountRow(row[0], total, counts))
        return cls(rows)

    def to_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            labels = ",".join(f"label_{i}" for i in range(self.num_labels))
            fh.write(f"client_id,total,{labels}\n")
            for row in self.rows:
                counts = ",".join(str(c) for c in row.counts)
                fh.write(f"{row.client_id},{row.declared_total},{counts}\n")


# 15-client wearable-activity count matrix with strongly non-IID rows;
# client_06 has no samples at all for the last two labels, and its declared
# total is inconsistent with its per-label counts (kept as-is on purpose:
# construction warns and trusts the per-label counts).
_WEARABLE_STUDY_ROWS = [
    ("client_01", 27724, (2800, 1148, 1380, 1648, 3556, 9420, 3016, 4756)),
    ("client_02", 22712, (2400, 1068, 1216, 1548, 3680, 4880, 2756, 5164)),
    ("client_03", 26900, (2400, 1740, 1172, 1516, 3640, 8640, 2952, 4840)),
    ("client_04", 26528, (2280, 2092, 1312, 1900, 4028, 7580, 2376, 4960)),
    ("client_05", 26924, (2400, 1860, 1160, 1728, 3320, 9020, 2356, 5080)),
    ("client_06", 11812, (2532, 1720, 1236, 2132, 4192, 9020, 0, 0)),
    ("client_07", 28580, (2472, 1624, 1096, 2012, 4140, 9700, 2836, 4700)),
    ("client_08", 23992, (2400, 1648, 1292, 1680, 3080, 7200, 1924, 4768)),
    ("client_09", 26212, (2400, 1932, 1140, 2216, 3820, 7368, 2356, 4980)),
    ("client_10", 28424, (2392, 1868, 1220, 1952, 3748, 8336, 4328, 4580)),
    ("client_11", 28052, (2400, 1828, 1296, 1960, 3440, 9632, 2616, 4880)),
    ("client_12", 23680, (2408, 1936, 1120, 1920, 3560, 5840, 2116, 4780)),
    ("client_13", 26996, (2420, 1988, 1160, 1992, 3588, 8112, 2836, 4900)),
    ("client_14", 25584, (2432, 1824, 1300, 2008, 3816, 6924, 2460, 4820)),
    ("client_15", 23504, (2444, 1676, 1416, 1620, 3140, 5760, 2636, 4812)),
]


def wearable_study_counts() -> CountMatrix:
    """Bundled 15-client, 8-label non-IID count matrix (see comment above)."""
    return CountMatrix([CountRow(cid, t, c) for cid, t, c in _WEARABLE_STUDY_ROWS])


@dataclass
class SyntheticSpec:
    """Gaussian blob per class: ``means[c]`` plus ``scale`` times standard
    normal noise, ``samples_per_class`` rows each."""

    num_labels: int
    dim: int
    means: np.ndarray  # (K, d)
    scale: float
    samples_per_class: int

    def __post_init__(self):
        self.means = np.asarray(self.means, dtype=np.float64)
        if self.num_labels < 2:
            raise PreconditionError("need at least two classes")
        if self.dim < 1:
            raise PreconditionError("feature dimension must be >= 1")
        if self.means.shape != (self.num_labels, self.dim):
            raise ShapeMismatchError(
                f"means must have shape ({self.num_labels}, {self.dim}), "
                f"got {self.means.shape}"
            )
        if self.scale < 0:
            raise PreconditionError("scale must be >= 0")


def corner_means(num_labels: int, dim: int, spacing: float) -> np.ndarray:
    """Deterministic well-separated class means on binary corners.

    Class c sits at spacing * (bits of c); requires 2**dim >= num_labels.
    """
    bits = max(1, math.ceil(math.log2(num_labels)))
    if dim < bits:
        raise PreconditionError(
            f"{num_labels} classes need at least {bits} feature dimensions"
        )
    means = np.zeros((num_labels, dim))
    for c in range(num_labels):
        for j in range(bits):
            if (c >> j) & 1:
                means[c, j] = spacing
    return means


def generate_synthetic(spec: SyntheticSpec, seed: int) -> LabeledDataset:
    """Blob dataset with exactly ``samples_per_class`` rows per class."""
    if spec.samples_per_class < 1:
        raise PreconditionError("samples_per_class must be >= 1")
    rng = np.random.default_rng(seed)
    blocks = []
    labels = []
    for c in range(spec.num_labels):
        noise = rng.standard_normal((spec.samples_per_class, spec.dim))
        blocks.append(spec.means[c] + spec.scale * noise)
        labels.append(np.full(spec.samples_per_class, c, dtype=np.int64))
    return LabeledDataset(
        features=np.vstack(blocks),
        labels=np.concatenate(labels),
        num_labels=spec.num_labels,
    )


def load_csv(path, label_column: str) -> LabeledDataset:
    """Read a headered CSV; every non-label column must be numeric.

    Labels are re-encoded to dense integers in order of first appearance.
    Parse failures cite the 1-based data row (header excluded) and column.
    """
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise CsvFormatError(f"{path} is empty") from None
        if label_column not in header:
            raise CsvFormatError(
                f"label column {label_column!r} not found in header {header}"
            )
        label_idx = header.index(label_column)
        feature_names = [h for i, h in enumerate(header) if i != label_idx]

        rows: list[list[float]] = []
        raw_labels: list[str] = []
        for lineno, row in enumerate(reader, start=1):
            if not row:
                continue
            if len(row) != len(header):
                raise CsvFormatError(
                    f"row {lineno}: expected {len(header)} columns, got {len(row)}"
                )
            values = []
            for i, cell in enumerate(row):
                if i == label_idx:
                    continue
                try:
                    values.append(float(cell))
                except ValueError:
                    raise CsvFormatError(
                        f"row {lineno}, column {header[i]!r}: "
                        f"non-numeric value {cell!r}"
                    ) from None
            rows.append(values)
            raw_labels.append(row[label_idx])

    if not rows:
        raise PreconditionError(f"{path} has a header but no data rows")

    encoding: dict[str, int] = {}
    labels = []
    for raw in raw_labels:
        if raw not in encoding:
            encoding[raw] = len(encoding)
        labels.append(encoding[raw])
    return LabeledDataset(
        features=np.array(rows, dtype=np.float64),
        labels=np.array(labels, dtype=np.int64),
        num_labels=len(encoding),
        feature_names=feature_names,
    )


def partition_non_iid(
    data: LabeledDataset,
    counts: CountMatrix,
    seed: int,
    count_scale: float = 0.01,
) -> list[LabeledDataset]:
    """Deal samples to clients so each matches its scaled per-label counts.

    Samples are drawn without replacement within each label across all
    clients, so the partitions are pairwise disjoint. ``count_scale``
    defaults to 0.01 so full-size count matrices run at desk scale; pass
    1.0 to honor the raw counts.
    """
    if counts.num_labels != data.num_labels:
        raise ShapeMismatchError(
            f"count matrix covers {counts.num_labels} labels, dataset has "
            f"{data.num_labels}"
        )
    scaled = counts.scaled(count_scale)

    available = data.label_histogram()
    demand = np.zeros(data.num_labels, dtype=np.int64)
    for row in scaled.rows:
        demand += np.array(row.counts, dtype=np.int64)
    deficient = [
        f"label {lbl}: need {int(demand[lbl])}, have {int(available[lbl])}"
        for lbl in range(data.num_labels)
        if demand[lbl] > available[lbl]
    ]
    if deficient:
        raise PreconditionError(
            "not enough samples to satisfy the scaled counts ("
            + "; ".join(deficient)
            + ")"
        )

    rng = np.random.default_rng(seed)
    pools = []
    for lbl in range(data.num_labels):
        idx = np.flatnonzero(data.labels == lbl)
        pools.append(rng.permutation(idx))
    cursors = [0] * data.num_labels

    out = []
    for row in scaled.rows:
        taken = []
        for lbl, count in enumerate(row.counts):
            if count == 0:
                continue
            start = cursors[lbl]
            taken.append(pools[lbl][start : start + count])
            cursors[lbl] = start + count
        indices = np.sort(np.concatenate(taken))
        out.append(data.subset(indices))
    return out


def split(
    data: LabeledDataset, test_fraction: float, seed: int
) -> tuple[LabeledDataset, LabeledDataset]:
    """Stratified split; per label the test side gets floor(n * fraction).

    Any extra sample from rounding stays in the train side. Labels present
    with fewer than two samples cannot be stratified and raise.
    """
    if not 0.0 < test_fraction < 1.0:
        raise PreconditionError("test_fraction must lie in (0, 1)")
    rng = np.random.default_rng(seed)
    test_idx = []
    train_idx = []
    for lbl in range(data.num_labels):
        idx = np.flatnonzero(data.labels == lbl)
        if idx.size == 0:
            continue
        if idx.size < 2:
            raise PreconditionError(
                f"label {lbl} has {idx.size} sample(s); stratified split "
                "needs at least 2"
            )
        shuffled = rng.permutation(idx)
        n_test = math.floor(idx.size * test_fraction + 1e-9)
        test_idx.append(shuffled[:n_test])
        train_idx.append(shuffled[n_test:])
    train = np.sort(np.concatenate(train_idx))
    test = np.sort(np.concatenate(test_idx))
    if test.size == 0 or train.size == 0:
        raise PreconditionError("split produced an empty side; adjust the fraction")
    return data.subset(train), data.subset(test)
