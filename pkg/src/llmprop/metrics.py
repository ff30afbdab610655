"""Evaluation metrics (MAE, ROC-AUC) and report assembly.

Both metrics are implemented directly on numpy arrays so they can be
cross-checked against brute-force oracles in the test suite instead of
delegating to another library.
"""

from __future__ import annotations

import dataclasses
import hashlib
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np


class UndefinedMetricError(ValueError):
    """Raised when a metric is undefined for the given inputs (e.g. single-class AUC)."""


def mae(pred, target) -> float:
    """Mean absolute error between two equal-length 1-d arrays."""
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise ValueError(f"shape mismatch: {pred.shape} vs {target.shape}")
    if pred.size == 0:
        raise ValueError("mae is undefined on empty input")
    return float(np.mean(np.abs(pred - target)))


def _midranks(values: np.ndarray) -> np.ndarray:
    """1-based ranks with ties assigned the mean rank of their group."""
    order = np.argsort(values, kind="mergesort")
    ranks = np.empty(len(values), dtype=np.float64)
    sorted_vals = values[order]
    i = 0
    while i < len(values):
        j = i
        while j + 1 < len(values) and sorted_vals[j + 1] == sorted_vals[i]:
            j += 1
        # positions i..j share the value; midrank = mean of ranks i+1..j+1
        ranks[order[i : j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def roc_auc(scores, labels) -> float:
    """Area under the ROC curve via the rank (Mann-Whitney) statistic.

    Ties between a positive and a negative score contribute 1/2, which makes
    the result equal to the exact pairwise definition
    P(score_pos > score_neg) + 0.5 * P(score_pos = score_neg).
    """
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    if scores.shape != labels.shape:
        raise ValueError(f"shape mismatch: {scores.shape} vs {labels.shape}")
    pos = labels == 1
    n_pos = int(pos.sum())
    n_neg = int(len(labels) - n_pos)
    if n_pos == 0 or n_neg == 0:
        raise UndefinedMetricError(
            f"roc_auc needs both classes; got {n_pos} positives, {n_neg} negatives"
        )
    ranks = _midranks(scores)
    rank_sum = float(ranks[pos].sum())
    return (rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)


@dataclass
class MetricsReport:
    """Result of evaluating a checkpoint on a set of records."""

    task: str
    metric_name: str  # "MAE" or "AUC"
    value: float
    n: int
    units: str
    mean_prediction: Optional[float] = None
    skipped: int = 0
    metadata: dict = dataclasses.field(default_factory=dict)

    def __post_init__(self):
        if self.n <= 0:
            raise ValueError("report requires n > 0")
        if self.metric_name == "MAE" and self.value < 0:
            raise ValueError("MAE must be >= 0")
        if self.metric_name == "AUC" and not (0.0 <= self.value <= 1.0):
            raise ValueError("AUC must lie in [0, 1]")

    def summary(self) -> str:
        return (
            f"{self.task}: {self.metric_name} = {self.value:.4f} {self.units} "
            f"(n={self.n}, skipped={self.skipped})"
        )


def file_sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(65536), b""):
            h.update(chunk)
    return h.hexdigest()


def write_report(
    report: MetricsReport,
    path,
    checkpoint_hash: str = "",
    manifest_hash: str = "",
) -> None:
    """Persist a report as flat key=value text, full precision plus summary."""
    lines = [
        f"task = {report.task}",
        f"metric = {report.metric_name}",
        f"value = {report.value!r}",
        f"n = {report.n}",
        f"units = {report.units}",
        f"skipped = {report.skipped}",
    ]
    if report.mean_prediction is not None:
        lines.append(f"mean_prediction = {report.mean_prediction!r}")
    if checkpoint_hash:
        lines.append(f"checkpoint_sha256 = {checkpoint_hash}")
    if manifest_hash:
        lines.append(f"split_manifest_sha256 = {manifest_hash}")
    for key, val in sorted(report.metadata.items()):
        lines.append(f"meta.{key} = {val}")
    lines.append(f"# {report.summary()}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
