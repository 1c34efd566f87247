"""Machine-readable experiment output: metrics CSV and run manifests."""

from __future__ import annotations

import json
import platform
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .. import __version__, kernels

# stable column order for every metrics file
METRIC_COLUMNS = [
    "scenario",
    "step",
    "wall_seconds",
    "loss",
    "uplink_scalars",
    "downlink_scalars",
    "edge_scalars",
    "objective",
    "makespan",
    "expenditure",
    "accuracy",
]

# wall_seconds is the one column that legitimately varies between
# re-runs of the same manifest
VOLATILE_COLUMNS = ("wall_seconds",)


@dataclass
class MetricsRecord:
    scenario: str
    step: int = 0
    wall_seconds: float | None = None
    loss: float | None = None
    uplink_scalars: int | None = None
    downlink_scalars: int | None = None
    edge_scalars: int | None = None
    objective: float | None = None
    makespan: float | None = None
    expenditure: float | None = None
    accuracy: float | None = None


def _render(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return f"{value:.12g}"
    return str(value)


def emit_metrics(records, path, allow_empty: bool = False) -> Path:
    """Write records as CSV in the stable column order; deterministic bytes."""
    records = list(records)
    if not records and not allow_empty:
        raise ValueError("no metrics records to write (pass allow_empty=True "
                         "to write a header-only file)")
    path = Path(path)
    lines = [",".join(METRIC_COLUMNS)]
    for rec in records:
        lines.append(",".join(_render(getattr(rec, col)) for col in METRIC_COLUMNS))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def write_manifest(path, scenario: str, seed: int, config: dict,
                   outputs: list[str]) -> Path:
    """Full effective config plus seed and versions; enough to re-run."""
    doc = {
        "scenario": scenario,
        "seed": seed,
        "config": config,
        "outputs": outputs,
        "versions": {
            "dcslab": __version__,
            "python": platform.python_version(),
            "numpy": np.__version__,
            "kernel_backend": kernels.active_backend(),
        },
    }
    path = Path(path)
    path.write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n",
                    encoding="utf-8")
    return path


def read_metrics(path) -> list[dict[str, str]]:
    text = Path(path).read_text(encoding="utf-8").splitlines()
    header = text[0].split(",")
    return [dict(zip(header, line.split(","))) for line in text[1:]]


def metrics_match(path_a, path_b, ignore=VOLATILE_COLUMNS) -> bool:
    """Column-wise equality of two metrics files, skipping volatile columns."""
    rows_a, rows_b = read_metrics(path_a), read_metrics(path_b)
    if len(rows_a) != len(rows_b):
        return False
    for ra, rb in zip(rows_a, rows_b):
        for col in METRIC_COLUMNS:
            if col in ignore:
                continue
            if ra.get(col) != rb.get(col):
                return False
    return True
