import json

import numpy as np
import pytest

from fedstack.config import config_from_dict, load_config
from fedstack.errors import ConfigError, StageError
from fedstack.pipeline import run_pipeline
from fedstack.reports import (
    emit_reports,
    load_assignments_csv,
    load_bic_csv,
    load_convergence_csv,
    load_distance_csv,
    load_metrics_csv,
)


def small_config(**overrides):
    base = {
        "seed": 3,
        "dataset": {
            "type": "synthetic",
            "labels": 4,
            "features": 4,
            "spacing": 8.0,
            "scale": 0.5,
            "samples_per_class": 400,
        },
        "counts": {"type": "uniform", "clients": 5, "per_label": 40},
        "count_scale": 1.0,
        "clients": {"hidden_layer_cycle": [[24, 12], [16, 12]], "epochs": 25},
        "schedule": {"base_lr": 1e-3, "max_lr": 0.1, "step_size": 4},
        "methods": ["kmeans", "agglomerative", "gmm"],
        "k_max": 5,
        "restarts": 2,
        "meta_epochs": 25,
    }
    base.update(overrides)
    return config_from_dict(base)


@pytest.fixture(scope="module")
def small_report():
    return run_pipeline(small_config())


class TestConfig:
    def test_unknown_top_level_key_rejected(self):
        with pytest.raises(ConfigError, match="unknown keys"):
            small_config(typo_key=1)

    def test_unknown_nested_key_rejected(self):
        with pytest.raises(ConfigError, match="dataset"):
            small_config(
                dataset={
                    "type": "synthetic",
                    "labels": 4,
                    "features": 4,
                    "spacing": 8.0,
                    "scale": 0.5,
                    "samples_per_class": 10,
                    "bogus": True,
                }
            )

    def test_fractions_must_leave_training_data(self):
        with pytest.raises(ConfigError, match="below 1"):
            small_config(meta_fraction=0.6, test_fraction=0.5)

    def test_methods_subset_enforced(self):
        with pytest.raises(ConfigError, match="methods"):
            small_config(methods=["kmeans", "spectral"])

    def test_mixed_penultimate_widths_rejected(self):
        with pytest.raises(ConfigError, match="last width"):
            small_config(clients={"hidden_layer_cycle": [[16, 8], [16, 12]], "epochs": 5})

    def test_uniform_counts_need_synthetic_dataset(self):
        with pytest.raises(ConfigError, match="synthetic"):
            small_config(dataset={"type": "csv", "path": "x.csv", "label_column": "y"})

    def test_load_config_round_trip(self, tmp_path):
        cfg = {
            "seed": 1,
            "dataset": {
                "type": "synthetic",
                "labels": 2,
                "features": 2,
                "spacing": 5.0,
                "scale": 0.1,
                "samples_per_class": 50,
            },
            "counts": {"type": "uniform", "clients": 2, "per_label": 10},
            "clients": {"hidden_layer_cycle": [[8, 4]], "epochs": 2},
        }
        path = tmp_path / "cfg.json"
        path.write_text(json.dumps(cfg), encoding="utf-8")
        parsed = load_config(path)
        assert parsed.seed == 1
        assert parsed.methods == ["kmeans", "agglomerative", "gmm"]
        assert parsed.count_scale == 0.01

    def test_invalid_json_is_config_error(self, tmp_path):
        path = tmp_path / "cfg.json"
        path.write_text("{not json", encoding="utf-8")
        with pytest.raises(ConfigError):
            load_config(path)


class TestRunPipeline:
    def test_metric_row_structure(self, small_report):
        report = small_report
        k = report.manifest["k_used"]
        rows = 1 + sum(len(v) for v in report.cluster_metrics.values())
        assert rows == 1 + 3 * k

    def test_every_method_has_assignment_and_metrics(self, small_report):
        for method in ("kmeans", "agglomerative", "gmm"):
            assert method in small_report.assignments
            assert method in small_report.cluster_metrics

    def test_distance_matrix_shape(self, small_report):
        dm = small_report.distances
        assert dm.values.shape == (5, 5)
        np.testing.assert_array_equal(dm.values, dm.values.T)

    def test_k_override_one_reproduces_global_everywhere(self):
        report = run_pipeline(small_config(k=1))
        for method in report.cluster_metrics:
            assert report.cluster_metrics[method][0] == report.global_metrics

    def test_failure_names_stage(self):
        # samples_per_class too small for the requested counts
        cfg = small_config(
            dataset={
                "type": "synthetic",
                "labels": 4,
                "features": 4,
                "spacing": 8.0,
                "scale": 0.5,
                "samples_per_class": 20,
            }
        )
        with pytest.raises(StageError, match="partition"):
            run_pipeline(cfg)

    def test_csv_dataset_end_to_end(self, tmp_path):
        rng = np.random.default_rng(0)
        lines = ["f0,f1,label"]
        for lbl, mean in ((0, 0.0), (1, 6.0)):
            for _ in range(120):
                x = rng.normal(mean, 0.5, size=2)
                lines.append(f"{x[0]},{x[1]},cls{lbl}")
        path = tmp_path / "data.csv"
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")
        cfg = config_from_dict(
            {
                "seed": 5,
                "dataset": {"type": "csv", "path": str(path), "label_column": "label"},
                "counts": {
                    "type": "inline",
                    "rows": [
                        {"client_id": "a", "counts": [30, 30]},
                        {"client_id": "b", "counts": [30, 30]},
                    ],
                },
                "count_scale": 1.0,
                "clients": {"hidden_layer_cycle": [[8, 6]], "epochs": 10},
                "schedule": {"base_lr": 1e-3, "max_lr": 0.1, "step_size": 4},
                "methods": ["kmeans"],
                "k_max": 2,
                "restarts": 2,
                "meta_epochs": 10,
            }
        )
        report = run_pipeline(cfg)
        assert report.manifest["num_labels"] == 2
        assert set(report.assignments["kmeans"].mapping) == {"a", "b"}


class TestEmitReports:
    def test_file_set_for_three_methods(self, small_report, tmp_path):
        files = emit_reports(small_report, tmp_path)
        names = {f.name for f in files}
        k = small_report.manifest["k_used"]
        convergence = {
            f"convergence_{m}_{c}.csv"
            for m in ("kmeans", "agglomerative", "gmm")
            for c in range(k)
        }
        expected = {
            "manifest.json",
            "distance_matrix.csv",
            "bic_curve.csv",
            "assignments_kmeans.csv",
            "assignments_agglomerative.csv",
            "assignments_gmm.csv",
            "metrics.csv",
        } | convergence
        assert names == expected

    def test_empty_method_list_minimal_files(self, tmp_path):
        report = run_pipeline(small_config(methods=[]))
        files = emit_reports(report, tmp_path)
        assert {f.name for f in files} == {
            "manifest.json",
            "distance_matrix.csv",
            "bic_curve.csv",
            "metrics.csv",
        }

    def test_rerun_is_byte_identical(self, tmp_path):
        a = run_pipeline(small_config())
        b = run_pipeline(small_config())
        fa = emit_reports(a, tmp_path / "a")
        fb = emit_reports(b, tmp_path / "b")
        assert [f.name for f in fa] == [f.name for f in fb]
        for pa, pb in zip(fa, fb):
            assert pa.read_bytes() == pb.read_bytes(), pa.name

    def test_worker_count_does_not_change_bytes(self, tmp_path):
        a = run_pipeline(small_config(workers=1))
        b = run_pipeline(small_config(workers=4))
        fa = emit_reports(a, tmp_path / "w1")
        fb = emit_reports(b, tmp_path / "w4")
        for pa, pb in zip(fa, fb):
            assert pa.read_bytes() == pb.read_bytes(), pa.name

    def test_round_trips(self, small_report, tmp_path):
        files = {f.name: f for f in emit_reports(small_report, tmp_path)}

        dm = load_distance_csv(files["distance_matrix.csv"])
        assert dm.client_ids == [str(c) for c in small_report.distances.client_ids]
        np.testing.assert_allclose(
            dm.values, np.round(small_report.distances.values, 6), atol=1e-12
        )

        records = load_bic_csv(files["bic_curve.csv"])
        assert records == small_report.bic.records

        for method, assignment in small_report.assignments.items():
            loaded = load_assignments_csv(files[f"assignments_{method}.csv"])
            assert loaded == {str(k): v for k, v in assignment.mapping.items()}

        table = load_metrics_csv(files["metrics.csv"])
        assert table["global"] == small_report.global_metrics.summary_row()

        model = small_report.cluster_models["kmeans"][0]
        trace = load_convergence_csv(files["convergence_kmeans_0.csv"])
        assert trace == [
            (e.epoch, e.loss, e.accuracy) for e in model.trace.entries
        ]

    def test_manifest_has_no_out_dir(self, small_report, tmp_path):
        files = {f.name: f for f in emit_reports(small_report, tmp_path)}
        manifest = json.loads(files["manifest.json"].read_text())
        assert "out_dir" not in manifest["config"]
        assert manifest["seed"] == 3
        assert manifest["backend"] in ("compiled", "python")
