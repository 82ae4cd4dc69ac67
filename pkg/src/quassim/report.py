"""Run reports: one JSON document plus CSV traces and plot-data series.

Everything written by write_report is byte-deterministic for a fixed
(config, seed): keys are sorted and floats use repr.  Wall-clock timings are
the one non-reproducible quantity, so they go to a separate timings.json
that sits outside the determinism contract.
"""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


@dataclass
class AssimilationReport:
    method: str
    analysis: np.ndarray
    truth: np.ndarray
    rmse: np.ndarray
    free_run_rmse: np.ndarray
    diagnostics: dict
    stages: list[dict]
    config_echo: dict
    version: str
    timings: dict[str, float] = field(default_factory=dict)

    def __post_init__(self):
        if len(self.rmse) != len(self.truth):
            raise ValueError("need one RMSE entry per window time")

    def final_rmse(self) -> float:
        return float(self.rmse[-1])

    def to_dict(self) -> dict:
        return {
            "version": self.version,
            "method": self.method,
            "config": self.config_echo,
            "analysis": _listify(self.analysis),
            "truth": _listify(self.truth),
            "rmse_per_time": _listify(self.rmse),
            "free_run_rmse": _listify(self.free_run_rmse),
            "diagnostics": _jsonify(self.diagnostics),
            "stages": _jsonify(self.stages),
        }


def _listify(arr) -> list:
    return np.asarray(arr, dtype=float).tolist()


def _jsonify(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonify(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonify(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    return obj


def dump_json(obj, path) -> None:
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def write_csv(path, header: list[str], rows) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([_cell(v) for v in row])


def _cell(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (np.bool_, bool)):
        return int(v)
    return v


def write_report(report: AssimilationReport, out_dir) -> list[Path]:
    """Write report.json plus trace/plotdata CSVs; returns the file list."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []

    path = out / "report.json"
    dump_json(report.to_dict(), path)
    written.append(path)

    path = out / "trace_rmse.csv"
    write_csv(
        path,
        ["time", "analysis_rmse", "free_run_rmse"],
        [(k, report.rmse[k], report.free_run_rmse[k]) for k in range(len(report.rmse))],
    )
    written.append(path)

    diag = report.diagnostics
    if "ess_trace" in diag:
        resampled = diag.get("resampled", [False] * len(diag["ess_trace"]))
        path = out / "trace_ess.csv"
        write_csv(
            path,
            ["time", "ess", "resampled"],
            [(k, e, r) for k, (e, r) in enumerate(zip(diag["ess_trace"], resampled))],
        )
        written.append(path)

    if "qaoa_trace" in diag:
        path = out / "plotdata_qaoa_trace.csv"
        write_csv(path, ["iteration", "best_expectation"], diag["qaoa_trace"])
        written.append(path)

    path = out / "plotdata_rmse.csv"
    write_csv(
        path,
        ["time", "analysis_rmse", "free_run_rmse"],
        [(k, report.rmse[k], report.free_run_rmse[k]) for k in range(len(report.rmse))],
    )
    written.append(path)

    dump_json(_jsonify(report.timings), out / "timings.json")
    return written
