"""Bit-exact binary change-detection metrics.

Counts are exact integers; precision, recall, F1, IoU and overall accuracy
follow the standard definitions with the changed class as positive. Ratios
with a zero denominator are defined as 0 and flagged, so aggregates stay
total and auditable. Dataset-level numbers are micro-averaged: confusion
counts are summed first, then the metrics are recomputed.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .validation import check_binary_mask, check_same_shape

__all__ = ["ConfusionCounts", "MetricsReport", "confusion", "compute_metrics", "aggregate"]

REPORT_FORMAT_VERSION = 1


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    fp: int
    fn: int
    tn: int

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn

    def __add__(self, other: "ConfusionCounts") -> "ConfusionCounts":
        return ConfusionCounts(
            self.tp + other.tp, self.fp + other.fp, self.fn + other.fn, self.tn + other.tn
        )


@dataclass
class MetricsReport:
    precision: float
    recall: float
    f1: float
    iou: float
    oa: float
    counts: ConfusionCounts
    degenerate: list[str] = field(default_factory=list)
    per_image: list["MetricsReport"] | None = None

    def to_dict(self) -> dict:
        """JSON form: integer counts, metrics as 4-decimal strings."""
        out = {
            "format_version": REPORT_FORMAT_VERSION,
            "counts": {
                "tp": self.counts.tp,
                "fp": self.counts.fp,
                "fn": self.counts.fn,
                "tn": self.counts.tn,
            },
            "metrics": {
                "precision": f"{self.precision:.4f}",
                "recall": f"{self.recall:.4f}",
                "f1": f"{self.f1:.4f}",
                "iou": f"{self.iou:.4f}",
                "oa": f"{self.oa:.4f}",
            },
            "degenerate": list(self.degenerate),
        }
        if self.per_image is not None:
            out["per_image"] = [r.to_dict() for r in self.per_image]
        return out

    def to_json(self, **kwargs) -> str:
        kwargs.setdefault("sort_keys", True)
        kwargs.setdefault("indent", 1)
        return json.dumps(self.to_dict(), **kwargs)


def confusion(pred, gt) -> ConfusionCounts:
    """Exact confusion counts between two binary masks (positive = changed)."""
    p = check_binary_mask(pred, "pred")
    g = check_binary_mask(gt, "gt")
    check_same_shape(p, g, "pred", "gt")
    tp = int(np.count_nonzero(p & g))
    fp = int(np.count_nonzero(p & ~g))
    fn = int(np.count_nonzero(~p & g))
    tn = int(np.count_nonzero(~p & ~g))
    return ConfusionCounts(tp, fp, fn, tn)


def _ratio(num: int, den: int, name: str, degenerate: list[str]) -> float:
    if den == 0:
        degenerate.append(name)
        return 0.0
    return num / den


def compute_metrics(counts: ConfusionCounts) -> MetricsReport:
    """Precision, recall, F1, IoU and OA from confusion counts (total > 0)."""
    if counts.total <= 0:
        raise ValueError("cannot compute metrics from zero evaluated pixels")
    degenerate: list[str] = []
    precision = _ratio(counts.tp, counts.tp + counts.fp, "precision", degenerate)
    recall = _ratio(counts.tp, counts.tp + counts.fn, "recall", degenerate)
    if precision + recall == 0.0:
        degenerate.append("f1")
        f1 = 0.0
    else:
        f1 = 2.0 * precision * recall / (precision + recall)
    iou = _ratio(counts.tp, counts.tp + counts.fp + counts.fn, "iou", degenerate)
    oa = (counts.tp + counts.tn) / counts.total
    return MetricsReport(precision, recall, f1, iou, oa, counts, degenerate)


def aggregate(reports: list[MetricsReport]) -> MetricsReport:
    """Micro-average: sum the confusion counts, recompute the metrics.

    The inputs are preserved under ``per_image`` for auditing.
    """
    if not reports:
        raise ValueError("cannot aggregate an empty list of reports")
    total = reports[0].counts
    for r in reports[1:]:
        total = total + r.counts
    out = compute_metrics(total)
    out.per_image = list(reports)
    return out
