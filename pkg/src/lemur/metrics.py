"""AUC, query-level AUC, query change rate, and report files."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import kernels


class UndefinedMetric(ValueError):
    """Raised when a ranking metric has no defined value (e.g. single-class input)."""


@dataclass
class ScoredSample:
    qid: int
    score: float
    label: int


def _columns(samples) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    if isinstance(samples, tuple) and len(samples) == 3:
        qid, score, label = samples
        return np.asarray(qid, dtype=np.int64), np.asarray(score, dtype=np.float64), np.asarray(label, dtype=np.int64)
    samples = list(samples)
    return (
        np.array([s.qid for s in samples], dtype=np.int64),
        np.array([s.score for s in samples], dtype=np.float64),
        np.array([s.label for s in samples], dtype=np.int64),
    )


def auc(scores: Sequence[float], labels: Sequence[int]) -> float:
    """Probability a random positive outscores a random negative; ties count half."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if scores.shape != labels.shape:
        raise ValueError("scores and labels differ in length")
    if not np.isfinite(scores).all():
        raise ValueError("scores must be finite")
    value = kernels.auc(scores, labels)
    if math.isnan(value):
        raise UndefinedMetric("AUC needs at least one positive and one negative")
    return value


def auc_samples(samples) -> float:
    _, score, label = _columns(samples)
    return auc(score, label)


def per_query_auc(qids, scores, labels) -> dict[int, float]:
    """AUC per qid, skipping qids whose samples share one label."""
    groups, values = kernels.grouped_auc(np.asarray(qids), np.asarray(scores, dtype=np.float64), np.asarray(labels))
    return {int(g): float(v) for g, v in zip(groups, values) if not math.isnan(v)}


def qauc(samples) -> float:
    """Unweighted mean of per-qid AUC over qids with both classes.

    The sum is correctly rounded (``math.fsum``) so the result does not depend
    on summation order.
    """
    qid, score, label = _columns(samples)
    if not np.isfinite(score).all():
        raise ValueError("scores must be finite")
    per = per_query_auc(qid, score, label)
    if not per:
        raise UndefinedMetric("QAUC needs at least one query with both classes")
    return math.fsum(per.values()) / len(per)


def query_change_rate(log: Iterable[tuple]) -> float:
    """Share of distinct (uid, query) pairs flagged as reformulated; duplicates OR their flags."""
    pairs: dict[tuple, bool] = {}
    for uid, query, flag in log:
        key = (uid, query)
        pairs[key] = pairs.get(key, False) or bool(flag)
    if not pairs:
        raise ValueError("query change rate of an empty log")
    return sum(pairs.values()) / len(pairs)


@dataclass
class MetricReport:
    step: int
    split: str
    auc: float | None = None
    qauc: float | None = None
    loss: float | None = None
    staleness: float | None = None
    coverage: dict[str, float] = field(default_factory=dict)
    target_hit_rate: float | None = None
    query_change_rate: float | None = None
    extra: dict[str, float] = field(default_factory=dict)

    def validate(self) -> None:
        for name in ("auc", "qauc", "target_hit_rate", "query_change_rate"):
            v = getattr(self, name)
            if v is not None and not 0.0 <= v <= 1.0:
                raise ValueError(f"{name}={v} outside [0, 1]")
        for k, v in self.coverage.items():
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"coverage[{k}]={v} outside [0, 1]")

    def to_dict(self) -> dict:
        return asdict(self)

    def flat(self) -> dict:
        row = {k: v for k, v in asdict(self).items() if k not in ("coverage", "extra")}
        for k, v in self.coverage.items():
            row[f"coverage_{k}"] = v
        for k, v in self.extra.items():
            row[k] = v
        return row


class ReportWriter:
    """Appends one JSON object per report to ``<stem>.jsonl``; ``export_csv`` flattens them."""

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self.reports: list[MetricReport] = []

    def write(self, report: MetricReport) -> None:
        report.validate()
        self.reports.append(report)
        with self.path.open("a", encoding="utf-8") as fh:
            fh.write(json.dumps(report.to_dict(), sort_keys=True) + "\n")

    def export_csv(self, path: str | Path | None = None) -> Path:
        out = Path(path) if path is not None else self.path.with_suffix(".csv")
        rows = [r.flat() for r in self.reports]
        keys: list[str] = []
        for row in rows:
            keys.extend(k for k in row if k not in keys)
        with out.open("w", newline="", encoding="utf-8") as fh:
            writer = csv.DictWriter(fh, fieldnames=keys)
            writer.writeheader()
            writer.writerows(rows)
        return out


def read_reports(path: str | Path) -> list[dict]:
    with Path(path).open(encoding="utf-8") as fh:
        return [json.loads(line) for line in fh if line.strip()]
