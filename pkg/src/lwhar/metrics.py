"""Confusion matrix and the accuracy / macro precision / macro recall / weighted F1 scores.

Rows of the confusion matrix are true classes, columns predicted classes.
Per-class ratios with a zero denominator count as 0.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

N_CLASSES = 6


def confusion_matrix(truth, preds, n_classes: int = N_CLASSES) -> np.ndarray:
    truth = np.asarray(truth, dtype=np.int64).ravel()
    preds = np.asarray(preds, dtype=np.int64).ravel()
    if truth.shape != preds.shape:
        raise ValueError(f"length mismatch: {truth.shape[0]} labels vs {preds.shape[0]} predictions")
    for name, arr in (("truth", truth), ("preds", preds)):
        if arr.size and (arr.min() < 0 or arr.max() >= n_classes):
            raise ValueError(f"{name} contains labels outside 0..{n_classes - 1}")
    M = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(M, (truth, preds), 1)
    return M


def _checked(M) -> np.ndarray:
    M = np.asarray(M)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError(f"confusion matrix must be square, got shape {M.shape}")
    if M.sum() <= 0:
        raise ValueError("confusion matrix is empty")
    return M


def _ratio(num, den) -> np.ndarray:
    num = np.asarray(num, dtype=np.float64)
    den = np.asarray(den, dtype=np.float64)
    out = np.zeros_like(num)
    np.divide(num, den, out=out, where=den > 0)
    return out


def per_class_precision(M) -> np.ndarray:
    M = _checked(M)
    return _ratio(np.diag(M), M.sum(axis=0))


def per_class_recall(M) -> np.ndarray:
    M = _checked(M)
    return _ratio(np.diag(M), M.sum(axis=1))


def per_class_f1(M) -> np.ndarray:
    p, r = per_class_precision(M), per_class_recall(M)
    return _ratio(2.0 * p * r, p + r)


def accuracy(M) -> float:
    M = _checked(M)
    return float(np.trace(M) / M.sum())


def macro_precision(M) -> float:
    return float(per_class_precision(M).mean())


def macro_recall(M) -> float:
    return float(per_class_recall(M).mean())


def weighted_f1(M) -> float:
    M = _checked(M)
    support = M.sum(axis=1).astype(np.float64)
    return float(np.sum(support * per_class_f1(M)) / support.sum())


@dataclass
class MetricsReport:
    accuracy: float
    precision: float
    recall: float
    f1: float
    per_class_precision: np.ndarray
    per_class_recall: np.ndarray
    per_class_f1: np.ndarray
    support: np.ndarray

    @classmethod
    def from_matrix(cls, M) -> "MetricsReport":
        M = _checked(M)
        return cls(accuracy(M), macro_precision(M), macro_recall(M), weighted_f1(M),
                   per_class_precision(M), per_class_recall(M), per_class_f1(M),
                   M.sum(axis=1).astype(np.int64))

    def key_values(self) -> str:
        lines = [f"accuracy={self.accuracy!r}", f"precision={self.precision!r}",
                 f"recall={self.recall!r}", f"f1={self.f1!r}"]
        return "\n".join(lines) + "\n"

    def table(self, names, sep=",") -> str:
        rows = [sep.join(["class", "precision", "recall", "f1", "support"])]
        for k, name in enumerate(names):
            rows.append(sep.join([name, repr(float(self.per_class_precision[k])),
                                  repr(float(self.per_class_recall[k])),
                                  repr(float(self.per_class_f1[k])), str(int(self.support[k]))]))
        return "\n".join(rows) + "\n"


def format_matrix(M, names, sep=",") -> str:
    M = np.asarray(M)
    lines = [sep.join(["true\\pred"] + list(names))]
    for k, name in enumerate(names):
        lines.append(sep.join([name] + [str(int(v)) for v in M[k]]))
    return "\n".join(lines) + "\n"


def parse_matrix(text: str, sep=",") -> np.ndarray:
    rows = [line.split(sep) for line in text.strip().splitlines()[1:]]
    return np.array([[int(v) for v in row[1:]] for row in rows], dtype=np.int64)
