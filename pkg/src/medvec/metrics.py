"""Confusion matrices and the classification metrics derived from them.

Rows are true labels, columns are predicted labels. Any 0/0 ratio in
precision, recall or F1 is defined as 0, so a class that never appears
still counts (as 0) toward macro F1.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass
from decimal import ROUND_HALF_UP, Decimal
from fractions import Fraction
from typing import Sequence

import numpy as np

from .errors import EmptyMatrix, UnknownLabel, UsageError


@dataclass
class ConfusionMatrix:
    labels: list[str]
    counts: np.ndarray | None = None
    rejected: int = 0

    def __post_init__(self):
        self.labels = list(self.labels)
        if len(set(self.labels)) != len(self.labels):
            raise UsageError("matrix labels must be unique")
        k = len(self.labels)
        if self.counts is None:
            self.counts = np.zeros((k, k), dtype=np.int64)
        else:
            self.counts = np.array(self.counts, dtype=np.int64)
        if self.counts.shape != (k, k):
            raise UsageError(f"counts shape {self.counts.shape} does not match {k} labels")
        if (self.counts < 0).any() or self.rejected < 0:
            raise UsageError("counts must be non-negative")
        self._index = {label: i for i, label in enumerate(self.labels)}

    def index(self, label: str) -> int:
        try:
            return self._index[label]
        except KeyError:
            raise UnknownLabel(f"label {label!r} not in matrix labels") from None

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def accumulate(self, true_label: str, predicted_label: str, accepted: bool = True) -> ConfusionMatrix:
        i, j = self.index(true_label), self.index(predicted_label)
        self.counts[i, j] += 1
        if not accepted:
            self.rejected += 1
        return self

    def merge(self, other: ConfusionMatrix) -> ConfusionMatrix:
        """Cell-wise sum; ``other`` may list the same labels in any order."""
        if set(other.labels) != set(self.labels):
            raise UsageError("cannot merge matrices over different label sets")
        perm = [other.index(label) for label in self.labels]
        counts = self.counts + other.counts[np.ix_(perm, perm)]
        return ConfusionMatrix(self.labels, counts, self.rejected + other.rejected)

    def reordered(self, labels: Sequence[str]) -> ConfusionMatrix:
        perm = [self.index(label) for label in labels]
        if len(perm) != len(self.labels):
            raise UsageError("reorder must name every label exactly once")
        return ConfusionMatrix(list(labels), self.counts[np.ix_(perm, perm)], self.rejected)

    def to_json(self) -> str:
        return json.dumps(
            {"labels": self.labels, "counts": self.counts.tolist(), "rejected": self.rejected},
            indent=2,
        ) + "\n"

    @classmethod
    def from_json(cls, text: str) -> ConfusionMatrix:
        d = json.loads(text)
        return cls(d["labels"], d["counts"], d.get("rejected", 0))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["true\\predicted", *self.labels])
        for label, row in zip(self.labels, self.counts.tolist()):
            w.writerow([label, *row])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> ConfusionMatrix:
        rows = list(csv.reader(io.StringIO(text)))
        labels = rows[0][1:]
        if [r[0] for r in rows[1:]] != labels:
            raise UsageError("CSV row labels must match column labels")
        return cls(labels, [[int(x) for x in r[1:]] for r in rows[1:]])


def accumulate(matrix: ConfusionMatrix, true_label: str, predicted_label: str, accepted: bool = True) -> ConfusionMatrix:
    return matrix.accumulate(true_label, predicted_label, accepted)


def _ratio(num: int, den: int) -> float:
    return num / den if den else 0.0


@dataclass(frozen=True)
class ClassRow:
    label: str
    precision: float
    recall: float
    f1: float
    row_sum: int
    col_sum: int
    correct: int


@dataclass
class MetricsReport:
    accuracy: float
    misclassification_rate: float
    per_class: dict[str, dict[str, float]]
    macro_f1: float
    total_queries: int
    rejected: int = 0
    correct: int = 0
    accepted_correct: int | None = None

    def misclassification_percent(self) -> str:
        return format_percent(Fraction(self.total_queries - self.correct, self.total_queries))

    def to_dict(self) -> dict:
        d = {
            "accuracy": self.accuracy,
            "misclassification_rate": self.misclassification_rate,
            "misclassification_percent": self.misclassification_percent(),
            "macro_f1": self.macro_f1,
            "total_queries": self.total_queries,
            "correct": self.correct,
            "rejected": self.rejected,
            "per_class": self.per_class,
        }
        if self.accepted_correct is not None:
            d["accepted_correct"] = self.accepted_correct
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"


def per_class_table(matrix: ConfusionMatrix) -> list[ClassRow]:
    if matrix.total == 0:
        raise EmptyMatrix("matrix has no predictions")
    c = matrix.counts
    rows = []
    for i, label in enumerate(matrix.labels):
        tp = int(c[i, i])
        row_sum, col_sum = int(c[i].sum()), int(c[:, i].sum())
        p = _ratio(tp, col_sum)
        r = _ratio(tp, row_sum)
        f1 = 2 * p * r / (p + r) if p + r else 0.0
        rows.append(ClassRow(label, p, r, f1, row_sum, col_sum, tp))
    return rows


def compute_report(matrix: ConfusionMatrix, accepted_correct: int | None = None) -> MetricsReport:
    """Accuracy, misclassification rate, per-class P/R/F1 and macro F1."""
    table = per_class_table(matrix)
    total = matrix.total
    correct = int(np.trace(matrix.counts))
    return MetricsReport(
        accuracy=correct / total,
        # computed directly rather than as 1 - accuracy, to keep e.g. 58/1600 exact
        misclassification_rate=(total - correct) / total,
        per_class={r.label: {"precision": r.precision, "recall": r.recall, "f1": r.f1} for r in table},
        macro_f1=sum(r.f1 for r in table) / len(table),
        total_queries=total,
        rejected=matrix.rejected,
        correct=correct,
        accepted_correct=accepted_correct,
    )


def format_percent(value, places: int = 2) -> str:
    """Render a rate in [0, 1] as a percentage rounded half-up, e.g. ``3.63%``."""
    if isinstance(value, Fraction):
        dec = Decimal(value.numerator) / Decimal(value.denominator)
    else:
        dec = Decimal(repr(float(value)))
    pct = (dec * 100).quantize(Decimal(1).scaleb(-places), rounding=ROUND_HALF_UP)
    return f"{pct}%"
