"""Precision, sensitivity, F1 and macro F1 over per-class confusion counts.

Ratios with a zero denominator are defined as 0 and the class is flagged as
degenerate in reports instead of raising.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

from .data import Label


@dataclass(frozen=True)
class ClassCounts:
    tp: int = 0
    fp: int = 0
    fn: int = 0

    def __post_init__(self):
        if min(self.tp, self.fp, self.fn) < 0:
            raise ValueError(f"confusion counts must be non-negative: {self}")


class ConfusionCounts(dict):
    """Mapping ``class -> ClassCounts``."""

    @classmethod
    def from_predictions(cls, y_true: Iterable, y_pred: Iterable, classes: Sequence | None = None):
        y_true = list(y_true)
        y_pred = list(y_pred)
        if len(y_true) != len(y_pred):
            raise ValueError("y_true and y_pred differ in length")
        if classes is None:
            classes = sorted(set(y_true) | set(y_pred))
        out = cls()
        for c in classes:
            tp = sum(1 for t, p in zip(y_true, y_pred) if t == c and p == c)
            fp = sum(1 for t, p in zip(y_true, y_pred) if t != c and p == c)
            fn = sum(1 for t, p in zip(y_true, y_pred) if t == c and p != c)
            out[c] = ClassCounts(tp, fp, fn)
        return out


def _ratio(num: int, den: int) -> float:
    return num / den if den else 0.0


def precision(c: ConfusionCounts, cls) -> float:
    k = c[cls]
    return _ratio(k.tp, k.tp + k.fp)


def sensitivity(c: ConfusionCounts, cls) -> float:
    k = c[cls]
    return _ratio(k.tp, k.tp + k.fn)


recall = sensitivity


def f1(p: float, r: float) -> float:
    """Harmonic mean of precision and recall (any common scale, e.g. percent)."""
    s = p + r
    return 2.0 * p * r / s if s else 0.0


def macro_f1(per_class_f1: Sequence[float]) -> float:
    vals = list(per_class_f1)
    if not vals:
        raise ValueError("macro_f1 of an empty list")
    return sum(vals) / len(vals)


def _name(cls) -> str:
    return cls.name if isinstance(cls, Label) else str(cls)


def classification_report(c: ConfusionCounts, classes: Sequence | None = None) -> dict:
    """Per-class precision / sensitivity / F1 and macro F1, in percent (2 dp)."""
    classes = list(c) if classes is None else list(classes)
    per_class = {}
    f1s = []
    for cls in classes:
        k = c[cls]
        p = precision(c, cls)
        r = sensitivity(c, cls)
        f = f1(p, r)
        f1s.append(f)
        degenerate = []
        if k.tp + k.fp == 0:
            degenerate.append("precision")
        if k.tp + k.fn == 0:
            degenerate.append("sensitivity")
        if p + r == 0:
            degenerate.append("f1")
        per_class[_name(cls)] = {
            "tp": k.tp, "fp": k.fp, "fn": k.fn,
            "precision": round(100 * p, 2),
            "sensitivity": round(100 * r, 2),
            "f1": round(100 * f, 2),
            "degenerate": degenerate,
        }
    return {"classes": per_class, "macro_f1": round(100 * macro_f1(f1s), 2)}
