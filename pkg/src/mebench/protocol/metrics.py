"""Confusion matrices, per-class F1, macro-F1, and fold aggregation.

Per class: precision = TP/(TP+FP), recall = TP/(TP+FN), F1 their
harmonic mean, with 0/0 defined as 0. Macro-F1 is the unweighted mean
over the declared class list (classes with no support still count,
per the 0/0 convention).

Fold aggregation pools the confusion matrices and computes macro-F1
once on the pooled matrix: per-fold averaging is undefined whenever a
fold lacks a class, which LOSO routinely produces.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import DataError


@dataclass
class ConfusionMatrix:
    classes: tuple[str, ...]
    counts: np.ndarray = None  # [actual][predicted]

    def __post_init__(self):
        if not self.classes:
            raise DataError("empty class list")
        k = len(self.classes)
        if self.counts is None:
            self.counts = np.zeros((k, k), dtype=np.int64)
        else:
            self.counts = np.asarray(self.counts, dtype=np.int64)
            if self.counts.shape != (k, k):
                raise DataError(f"counts shape {self.counts.shape} != ({k}, {k})")
            if (self.counts < 0).any():
                raise DataError("negative confusion counts")

    def add(self, actual: str, predicted: str, weight: int = 1) -> None:
        self.counts[self.classes.index(actual), self.classes.index(predicted)] += weight

    def total(self) -> int:
        return int(self.counts.sum())

    def __add__(self, other: "ConfusionMatrix") -> "ConfusionMatrix":
        if self.classes != other.classes:
            raise DataError(f"class sets differ: {self.classes} vs {other.classes}")
        return ConfusionMatrix(self.classes, self.counts + other.counts)


def macro_f1(confusion: ConfusionMatrix) -> tuple[dict, float]:
    """(per-class F1, unweighted macro mean over the declared classes)."""
    counts = confusion.counts
    if counts.sum() == 0:
        raise DataError("empty confusion matrix")
    per_class = {}
    for i, name in enumerate(confusion.classes):
        tp = counts[i, i]
        fp = counts[:, i].sum() - tp
        fn = counts[i, :].sum() - tp
        precision = tp / (tp + fp) if (tp + fp) > 0 else 0.0
        recall = tp / (tp + fn) if (tp + fn) > 0 else 0.0
        f1 = 2 * precision * recall / (precision + recall) if (precision + recall) > 0 else 0.0
        per_class[name] = float(f1)
    macro = float(np.mean([per_class[c] for c in confusion.classes]))
    return per_class, macro


@dataclass(frozen=True)
class FoldResult:
    held_out_subject: str
    confusion: ConfusionMatrix


@dataclass
class MetricsReport:
    classes: tuple[str, ...]
    per_fold: list = field(default_factory=list)          # [(subject, confusion counts list)]
    pooled: ConfusionMatrix = None
    per_class_f1: dict = field(default_factory=dict)
    macro: float = 0.0
    metadata: dict = field(default_factory=dict)
    provenance_hash: str = ""

    def to_json_dict(self) -> dict:
        return {
            "classes": list(self.classes),
            "per_fold": [
                {"subject": subj, "counts": counts.tolist()} for subj, counts in self.per_fold
            ],
            "pooled_counts": self.pooled.counts.tolist(),
            "per_class_f1": self.per_class_f1,
            "macro_f1": self.macro,
            "metadata": self.metadata,
            "provenance_hash": self.provenance_hash,
        }

    def to_markdown(self) -> str:
        lines = [
            "| class | F1 |",
            "|---|---|",
        ]
        for c in self.classes:
            lines.append(f"| {c} | {self.per_class_f1[c]:.4f} |")
        lines.append(f"| **macro** | **{self.macro:.4f}** |")
        return "\n".join(lines)


def aggregate_folds(
    fold_results: list[FoldResult], metadata: dict | None = None, provenance_hash: str = ""
) -> MetricsReport:
    """Pool confusions across folds, then score once."""
    if not fold_results:
        raise DataError("no fold results to aggregate")
    classes = fold_results[0].confusion.classes
    pooled = ConfusionMatrix(classes)
    for result in fold_results:
        pooled = pooled + result.confusion
    per_class, macro = macro_f1(pooled)
    return MetricsReport(
        classes=classes,
        per_fold=[(r.held_out_subject, r.confusion.counts.copy()) for r in fold_results],
        pooled=pooled,
        per_class_f1=per_class,
        macro=macro,
        metadata=metadata or {},
        provenance_hash=provenance_hash,
    )
