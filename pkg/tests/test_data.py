import numpy as np
import pytest

from fedstack.data import (
    CountMatrix,
    CountRow,
    LabeledDataset,
    SyntheticSpec,
    corner_means,
    generate_synthetic,
    load_csv,
    partition_non_iid,
    split,
    wearable_study_counts,
)
from fedstack.errors import CsvFormatError, PreconditionError


def two_blob_spec(scale=0.5, per_class=100):
    return SyntheticSpec(
        num_labels=2,
        dim=2,
        means=np.array([[0.0, 0.0], [10.0, 10.0]]),
        scale=scale,
        samples_per_class=per_class,
    )


class TestGenerateSynthetic:
    def test_counts_and_midpoint_hyperplane(self):
        data = generate_synthetic(two_blob_spec(), seed=0)
        assert data.n == 200
        np.testing.assert_array_equal(data.label_histogram(), [100, 100])
        # classify by the hyperplane through the midpoint, normal m1 - m0
        normal = np.array([10.0, 10.0])
        threshold = normal @ np.array([5.0, 5.0])
        predicted = (data.features @ normal > threshold).astype(int)
        assert np.mean(predicted == data.labels) >= 0.99

    def test_zero_scale_collapses_to_means(self):
        data = generate_synthetic(two_blob_spec(scale=0.0, per_class=5), seed=1)
        np.testing.assert_array_equal(data.features[:5], np.zeros((5, 2)))
        np.testing.assert_array_equal(data.features[5:], np.full((5, 2), 10.0))

    def test_same_seed_identical(self):
        a = generate_synthetic(two_blob_spec(), seed=5)
        b = generate_synthetic(two_blob_spec(), seed=5)
        assert a.features.tobytes() == b.features.tobytes()
        assert a.labels.tobytes() == b.labels.tobytes()

    def test_zero_samples_rejected(self):
        spec = two_blob_spec()
        spec.samples_per_class = 0
        with pytest.raises(PreconditionError):
            generate_synthetic(spec, seed=0)

    def test_corner_means_are_separated(self):
        means = corner_means(8, 6, 10.0)
        assert means.shape == (8, 6)
        for i in range(8):
            for j in range(i + 1, 8):
                assert np.linalg.norm(means[i] - means[j]) >= 10.0

    def test_corner_means_need_enough_dims(self):
        with pytest.raises(PreconditionError):
            corner_means(8, 2, 10.0)


class TestCountMatrix:
    def test_bundled_first_row_sums_to_declared_total(self):
        counts = wearable_study_counts()
        row = counts.rows[0]
        assert row.counts == (2800, 1148, 1380, 1648, 3556, 9420, 3016, 4756)
        assert sum(row.counts) == row.declared_total == 27724

    def test_bundled_matrix_warns_about_inconsistent_row(self):
        with pytest.warns(UserWarning, match="client_06"):
            wearable_study_counts()

    def test_scaled_floors_with_min_one(self):
        counts = CountMatrix([CountRow("a", 250, (200, 50, 0)), CountRow("b", 30, (10, 15, 5))])
        scaled = counts.scaled(0.01)
        assert scaled.rows[0].counts == (2, 1, 0)
        assert scaled.rows[1].counts == (1, 1, 1)

    def test_csv_round_trip(self, tmp_path):
        counts = CountMatrix([CountRow("a", 6, (1, 2, 3)), CountRow("b", 9, (4, 5, 0))])
        path = tmp_path / "counts.csv"
        counts.to_csv(path)
        back = CountMatrix.from_csv(path)
        assert back.rows == counts.rows

    def test_all_zero_row_rejected(self):
        with pytest.raises(PreconditionError):
            CountMatrix([CountRow("a", 0, (0, 0))])


class TestPartition:
    def build(self, per_label=40, clients=3, labels=4, seed=0):
        spec = SyntheticSpec(
            num_labels=labels,
            dim=3,
            means=corner_means(labels, 3, 5.0),
            scale=0.3,
            samples_per_class=per_label * clients + 10,
        )
        data = generate_synthetic(spec, seed)
        counts = CountMatrix.uniform([f"c{i}" for i in range(clients)], labels, per_label)
        return data, counts

    def test_zero_count_labels_absent(self):
        data, _ = self.build()
        counts = CountMatrix(
            [
                CountRow("a", 120, (40, 40, 40, 0)),
                CountRow("b", 120, (40, 40, 0, 40)),
            ]
        )
        parts = partition_non_iid(data, counts, seed=0, count_scale=1.0)
        assert parts[0].label_histogram()[3] == 0
        assert parts[1].label_histogram()[2] == 0

    def test_uniform_counts_identical_histograms(self):
        data, counts = self.build()
        parts = partition_non_iid(data, counts, seed=1, count_scale=1.0)
        hists = [tuple(p.label_histogram()) for p in parts]
        assert len(set(hists)) == 1
        assert hists[0] == (40, 40, 40, 40)

    def test_partitions_disjoint_and_match_counts(self):
        data, counts = self.build(per_label=30, clients=4)
        parts = partition_non_iid(data, counts, seed=2, count_scale=1.0)
        rows = [tuple(row) for p in parts for row in p.features]
        assert len(rows) == len(set(rows))  # blob noise keys rows uniquely
        for part, row in zip(parts, counts.rows):
            np.testing.assert_array_equal(part.label_histogram(), row.counts)

    def test_infeasible_counts_name_deficient_labels(self):
        data, _ = self.build(per_label=10, clients=2, labels=3)
        counts = CountMatrix(
            [CountRow("a", 3000, (1000, 1, 1)), CountRow("b", 3, (1, 1, 1))]
        )
        with pytest.raises(PreconditionError, match="label 0"):
            partition_non_iid(data, counts, seed=0, count_scale=1.0)

    def test_desk_scale_default_applies(self):
        data, _ = self.build(per_label=60, clients=2)
        counts = CountMatrix(
            [CountRow("a", 400, (100, 100, 100, 100)), CountRow("b", 400, (100, 100, 100, 100))]
        )
        parts = partition_non_iid(data, counts, seed=0)  # default scale 0.01
        np.testing.assert_array_equal(parts[0].label_histogram(), [1, 1, 1, 1])

    def test_label_width_mismatch_rejected(self):
        data, _ = self.build(labels=4)
        counts = CountMatrix([CountRow("a", 2, (1, 1)), CountRow("b", 2, (1, 1))])
        with pytest.raises(Exception):
            partition_non_iid(data, counts, seed=0, count_scale=1.0)


class TestLoadCsv:
    def write(self, tmp_path, text):
        path = tmp_path / "data.csv"
        path.write_text(text, encoding="utf-8")
        return path

    def test_labels_reencoded_by_first_appearance(self, tmp_path):
        path = self.write(tmp_path, "x1,x2,y\n1,2,a\n3,4,b\n5,6,a\n")
        data = load_csv(path, "y")
        np.testing.assert_array_equal(data.labels, [0, 1, 0])
        assert data.num_labels == 2
        assert data.feature_names == ["x1", "x2"]
        np.testing.assert_array_equal(data.features, [[1, 2], [3, 4], [5, 6]])

    def test_header_only_rejected(self, tmp_path):
        path = self.write(tmp_path, "x1,x2,y\n")
        with pytest.raises(PreconditionError):
            load_csv(path, "y")

    def test_bad_cell_cites_row_and_column(self, tmp_path):
        rows = "\n".join(f"{i},2,a" for i in range(1, 5))
        path = self.write(tmp_path, f"x1,x2,y\n{rows}\nabc,2,a\n")
        with pytest.raises(CsvFormatError, match="row 5.*x1"):
            load_csv(path, "y")

    def test_missing_label_column_rejected(self, tmp_path):
        path = self.write(tmp_path, "x1,x2,y\n1,2,a\n")
        with pytest.raises(CsvFormatError, match="label"):
            load_csv(path, "target")


class TestSplit:
    def test_exact_division(self):
        data = generate_synthetic(two_blob_spec(per_class=100), seed=3)
        train, test = split(data, 0.2, seed=0)
        np.testing.assert_array_equal(test.label_histogram(), [20, 20])
        np.testing.assert_array_equal(train.label_histogram(), [80, 80])

    def test_rounding_floors_to_train(self):
        data = LabeledDataset(
            features=np.arange(6, dtype=float).reshape(6, 1),
            labels=np.array([0, 0, 0, 1, 1, 1]),
            num_labels=2,
        )
        train, test = split(data, 0.5, seed=0)
        np.testing.assert_array_equal(train.label_histogram(), [2, 2])
        np.testing.assert_array_equal(test.label_histogram(), [1, 1])

    def test_union_is_input_as_multiset(self):
        data = generate_synthetic(two_blob_spec(per_class=33), seed=4)
        train, test = split(data, 0.3, seed=1)
        combined = np.vstack([train.features, test.features])
        assert sorted(map(tuple, combined)) == sorted(map(tuple, data.features))

    def test_small_label_rejected(self):
        data = LabeledDataset(
            features=np.zeros((3, 1)),
            labels=np.array([0, 0, 1]),
            num_labels=2,
        )
        with pytest.raises(PreconditionError, match="label 1"):
            split(data, 0.5, seed=0)

    def test_proportions_within_one_sample(self):
        for seed in range(5):
            rng = np.random.default_rng(seed)
            labels = rng.integers(0, 3, size=123)
            labels[:6] = [0, 0, 1, 1, 2, 2]  # every label at least twice
            data = LabeledDataset(
                features=rng.normal(size=(123, 2)), labels=labels, num_labels=3
            )
            train, test = split(data, 0.25, seed=seed)
            for lbl in range(3):
                total = data.label_histogram()[lbl]
                got = test.label_histogram()[lbl]
                assert abs(got - total * 0.25) <= 1.0
