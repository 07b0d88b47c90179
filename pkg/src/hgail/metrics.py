"""Evaluation metrics and learning-curve CSV files."""

from __future__ import annotations

import csv
import math
import os
from dataclasses import asdict, dataclass, fields

import numpy as np


@dataclass
class MetricsRecord:
    iteration: int
    success_rate: float
    distance_error_mean: float
    distance_error_std: float
    disc_loss: float = math.nan
    policy_surrogate: float = math.nan
    clip_fraction: float = math.nan
    entropy: float = math.nan
    wall_time: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.success_rate <= 1.0:
            raise ValueError(f"success_rate {self.success_rate} outside [0, 1]")
        if self.distance_error_mean < 0:
            raise ValueError("distance_error_mean must be non-negative")


CURVE_COLUMNS = [f.name for f in fields(MetricsRecord) if f.name != "wall_time"]
TIMED_COLUMNS = CURVE_COLUMNS + ["wall_time"]


def distance_error(final_position, target) -> float:
    """L1 distance between the achieved position and the target."""
    return float(np.sum(np.abs(np.asarray(final_position, float) - np.asarray(target, float))))


def distance_errors(final_positions, targets) -> np.ndarray:
    return np.sum(np.abs(np.asarray(final_positions) - np.asarray(targets)), axis=-1)


def success_rate(outcomes, delta: float) -> float:
    """Fraction of final distances that are within ``delta`` (boundary included)."""
    outcomes = np.asarray(outcomes, dtype=np.float64)
    if outcomes.size == 0:
        raise ValueError("success_rate needs at least one outcome")
    if delta <= 0:
        raise ValueError("delta must be positive")
    return float(np.count_nonzero(outcomes <= delta)) / outcomes.size


def _fmt(value) -> str:
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return repr(float(value))


def write_curve(records, destination, include_wall_time: bool = False) -> None:
    """Write records as CSV (header + one row each), replacing any old file.

    Floats are written with ``repr`` so reading back is exact. Wall time is
    left out by default to keep files from identical runs byte-identical.
    """
    columns = TIMED_COLUMNS if include_wall_time else CURVE_COLUMNS
    tmp = f"{destination}.tmp"
    try:
        with open(tmp, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(columns)
            for rec in records:
                row = asdict(rec)
                writer.writerow([_fmt(row[c]) for c in columns])
        os.replace(tmp, destination)
    except OSError as exc:
        raise OSError(f"could not write curve to {destination}: {exc}") from exc


def read_curve(source) -> list[MetricsRecord]:
    with open(source, newline="") as fh:
        reader = csv.DictReader(fh)
        out = []
        for row in reader:
            values = {k: float(v) for k, v in row.items()}
            values["iteration"] = int(values["iteration"])
            out.append(MetricsRecord(**values))
    return out
