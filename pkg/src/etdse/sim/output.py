"""CSV and JSON result files. Floats are written with 17 significant digits."""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .montecarlo import MonteCarloResult

SERIES_COLUMNS = ("step", "mean_amse", "mean_mse", "realized_rate_cumulative")


def fmt(x: float) -> str:
    return format(float(x), ".17g")


def write_series_csv(path, res: MonteCarloResult) -> None:
    cum = res.cumulative_rate()
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SERIES_COLUMNS)
        for k in range(len(res.amse_series)):
            w.writerow([k, fmt(res.amse_series[k]), fmt(res.mse_series[k]), fmt(cum[k])])


def write_table_csv(path, rows: list[dict], columns: tuple[str, ...]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([fmt(r[c]) if isinstance(r[c], float) else r[c] for c in columns])


def summarize(res: MonteCarloResult) -> dict:
    return {
        "trials": res.trials,
        "realized_rate": res.realized_rate,
        "time_avg_amse": res.time_avg_amse,
        "time_avg_mse": float(np.mean(res.mse_series)),
        "final_amse": float(res.amse_series[-1]),
        "payload_bytes": res.payload_bytes,
        "diagnostics": dict(sorted(res.diagnostics.items())),
    }


def write_json(path, doc: dict) -> None:
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
