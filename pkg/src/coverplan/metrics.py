"""Per-target coverage percentages and before/after-optimization comparison."""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .scene import TargetGrid
from .solver import Placement
from .visibility import VisibilityMatrix, compute_cvr


@dataclass(frozen=True)
class CoverageStats:
    per_target_pct: np.ndarray  # C_k in percent
    per_target_count: np.ndarray  # sensors seeing target k
    mean_pct: float
    median_pct: float
    sensor_count_used: int

    @property
    def mean_count(self) -> float:
        return float(self.per_target_count.mean()) if len(self.per_target_count) else 0.0


def coverage_stats(v: VisibilityMatrix, selected=None) -> CoverageStats:
    """C_k = 100 * (selected sensors seeing k) / (number selected).

    ``selected=None`` evaluates every candidate.
    """
    sel = np.arange(v.n_sensors) if selected is None else np.asarray(list(selected), dtype=np.int64)
    if len(sel) == 0:
        raise ValueError("coverage percentages need at least one sensor")
    counts = v.bits[sel].sum(axis=0).astype(np.int64)
    pct = counts * 100.0 / len(sel)
    if len(pct):
        mean, median = float(pct.mean()), float(np.median(pct))
    else:
        mean = median = 0.0
    return CoverageStats(pct, counts, mean, median, int(len(sel)))


@dataclass(frozen=True)
class BeforeAfter:
    before: CoverageStats
    after: CoverageStats
    cvr_before: float
    cvr_after: float

    def summary(self) -> dict:
        return {
            "sensors_before": self.before.sensor_count_used,
            "sensors_after": self.after.sensor_count_used,
            "cvr_before": self.cvr_before,
            "cvr_after": self.cvr_after,
            "mean_pct_before": self.before.mean_pct,
            "mean_pct_after": self.after.mean_pct,
            "median_pct_before": self.before.median_pct,
            "median_pct_after": self.after.median_pct,
            "mean_count_before": self.before.mean_count,
            "mean_count_after": self.after.mean_count,
        }


def before_after_report(v: VisibilityMatrix, placement: Placement) -> BeforeAfter:
    before = coverage_stats(v)
    after = coverage_stats(v, placement.selected)
    return BeforeAfter(before, after, compute_cvr(v).cvr, compute_cvr(v.rows(placement.selected)).cvr)


def write_coverage_csv(report: BeforeAfter, targets: TargetGrid, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["x", "y", "C_before", "C_after", "count_before", "count_after"])
        for k, (x, y, _) in enumerate(targets.points):
            w.writerow([
                repr(float(x)), repr(float(y)),
                repr(float(report.before.per_target_pct[k])), repr(float(report.after.per_target_pct[k])),
                int(report.before.per_target_count[k]), int(report.after.per_target_count[k]),
            ])


def write_summary_json(report: BeforeAfter, path: str | Path, **extra) -> None:
    data = {**report.summary(), **extra}
    Path(path).write_text(json.dumps(data, indent=2, sort_keys=True) + "\n")
