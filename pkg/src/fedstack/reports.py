"""Report emission and reloading.

File set per run: manifest.json, distance_matrix.csv, bic_curve.csv,
assignments_<method>.csv, convergence_<method>_<cluster>.csv, metrics.csv.
Distances print at 6 decimals; every other numeric column prints at 17
significant digits so reloading reproduces the in-memory value exactly.
All files are a pure function of the report, so identical runs emit
byte-identical files.
"""

from __future__ import annotations

import csv
import json
import os
from pathlib import Path

import numpy as np

from fedstack.clustering import DistanceMatrix
from fedstack.errors import CsvFormatError, FedStackError
from fedstack.model_selection import BICRecord, BICResult
from fedstack.pipeline import RunReport


def _write_text(path: Path, text: str) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)


def emit_reports(report: RunReport, out_dir) -> list[Path]:
    """Write the full report file set; returns the paths in written order."""
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise FedStackError(f"cannot create output directory {out}: {exc}") from None
    if not os.access(out, os.W_OK):
        raise FedStackError(f"output directory {out} is not writable")

    written: list[Path] = []

    manifest_path = out / "manifest.json"
    _write_text(
        manifest_path,
        json.dumps(report.manifest, sort_keys=True, indent=2) + "\n",
    )
    written.append(manifest_path)

    dm = report.distances
    lines = [",".join(str(cid) for cid in dm.client_ids)]
    for row in dm.values:
        lines.append(",".join(f"{v:.6f}" for v in row))
    dist_path = out / "distance_matrix.csv"
    _write_text(dist_path, "\n".join(lines) + "\n")
    written.append(dist_path)

    lines = ["k,log_likelihood,m_p,n,bic"]
    for rec in report.bic.records:
        lines.append(
            f"{rec.k},{rec.log_likelihood:.17g},{rec.param_count},"
            f"{rec.sample_count},{rec.score:.17g}"
        )
    bic_path = out / "bic_curve.csv"
    _write_text(bic_path, "\n".join(lines) + "\n")
    written.append(bic_path)

    for method in sorted(report.assignments):
        assignment = report.assignments[method]
        lines = ["client_id,cluster"]
        for cid in sorted(assignment.mapping):
            lines.append(f"{cid},{assignment.mapping[cid]}")
        path = out / f"assignments_{method}.csv"
        _write_text(path, "\n".join(lines) + "\n")
        written.append(path)

    for method in sorted(report.cluster_models):
        for model in report.cluster_models[method]:
            lines = ["epoch,loss,accuracy"]
            for entry in model.trace.entries:
                lines.append(
                    f"{entry.epoch},{entry.loss:.17g},{entry.accuracy:.17g}"
                )
            path = out / f"convergence_{method}_{model.cluster_index}.csv"
            _write_text(path, "\n".join(lines) + "\n")
            written.append(path)

    lines = ["model,balanced_accuracy,precision,recall,f1"]
    ba, mp, mr, mf = report.global_metrics.summary_row()
    lines.append(f"global,{ba:.17g},{mp:.17g},{mr:.17g},{mf:.17g}")
    for method in sorted(report.cluster_metrics):
        for cluster in sorted(report.cluster_metrics[method]):
            ba, mp, mr, mf = report.cluster_metrics[method][cluster].summary_row()
            lines.append(
                f"{method}_{cluster},{ba:.17g},{mp:.17g},{mr:.17g},{mf:.17g}"
            )
    metrics_path = out / "metrics.csv"
    _write_text(metrics_path, "\n".join(lines) + "\n")
    written.append(metrics_path)

    return written


def write_bic_csv(result: BICResult, path) -> None:
    lines = ["k,log_likelihood,m_p,n,bic"]
    for rec in result.records:
        lines.append(
            f"{rec.k},{rec.log_likelihood:.17g},{rec.param_count},"
            f"{rec.sample_count},{rec.score:.17g}"
        )
    _write_text(Path(path), "\n".join(lines) + "\n")


def load_distance_csv(path) -> DistanceMatrix:
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            ids = next(reader)
        except StopIteration:
            raise CsvFormatError(f"{path} is empty") from None
        values = [[float(c) for c in row] for row in reader if row]
    return DistanceMatrix(client_ids=ids, values=np.array(values))


def load_bic_csv(path) -> list[BICRecord]:
    records = []
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header != ["k", "log_likelihood", "m_p", "n", "bic"]:
            raise CsvFormatError(f"unexpected BIC header {header}")
        for row in reader:
            if not row:
                continue
            records.append(
                BICRecord(
                    k=int(row[0]),
                    log_likelihood=float(row[1]),
                    param_count=int(row[2]),
                    sample_count=int(row[3]),
                    score=float(row[4]),
                )
            )
    return records


def load_assignments_csv(path) -> dict[str, int]:
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header != ["client_id", "cluster"]:
            raise CsvFormatError(f"unexpected assignment header {header}")
        return {row[0]: int(row[1]) for row in reader if row}


def load_convergence_csv(path) -> list[tuple[int, float, float]]:
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header != ["epoch", "loss", "accuracy"]:
            raise CsvFormatError(f"unexpected convergence header {header}")
        return [(int(r[0]), float(r[1]), float(r[2])) for r in reader if r]


def load_metrics_csv(path) -> dict[str, tuple[float, float, float, float]]:
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header != ["model", "balanced_accuracy", "precision", "recall", "f1"]:
            raise CsvFormatError(f"unexpected metrics header {header}")
        return {
            r[0]: (float(r[1]), float(r[2]), float(r[3]), float(r[4]))
            for r in reader
            if r
        }
