"""Confusion matrices, per-class and macro metrics, kappa and fold aggregation.

Confusion matrices are indexed ``counts[true, predicted]``. Percent metrics
follow the usual TP/TN/FP/FN definitions; a metric whose denominator is zero
is *undefined* and is carried as ``None`` rather than NaN.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

METRICS = ("AC", "PR", "SE", "F1", "SP", "K")
UNDEFINED = "—"


@dataclass
class ConfusionMatrix:
    counts: np.ndarray
    labels: tuple[str, ...]

    def __post_init__(self):
        self.counts = np.asarray(self.counts, dtype=np.int64)
        C = len(self.labels)
        if self.counts.shape != (C, C):
            raise ValueError(f"confusion counts shape {self.counts.shape} does not match {C} labels")
        if np.any(self.counts < 0):
            raise ValueError("confusion counts must be non-negative")

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def project(self, mapping: Sequence[int], labels: Sequence[str]) -> "ConfusionMatrix":
        """Collapse classes through an index ``mapping`` (old index -> new index)."""
        mapping = np.asarray(mapping)
        K = len(labels)
        M = np.zeros((len(mapping), K), dtype=np.int64)
        M[np.arange(len(mapping)), mapping] = 1
        return ConfusionMatrix(M.T @ self.counts @ M, tuple(labels))

    def to_csv(self) -> str:
        """Rows are true classes, columns predictions; margins give SE per row and PR per column."""
        per = per_class(self.counts)
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["true\\pred", *self.labels, "Sensitivity"])
        for i, lab in enumerate(self.labels):
            w.writerow([lab, *self.counts[i].tolist(), _fmt(per["SE"][i])])
        w.writerow(["Precision", *(_fmt(v) for v in per["PR"]), ""])
        return buf.getvalue()


def confusion(y_true, y_pred, C: int, labels: Sequence[str] | None = None) -> ConfusionMatrix:
    y_true = np.asarray(y_true, dtype=np.int64)
    y_pred = np.asarray(y_pred, dtype=np.int64)
    if y_true.shape != y_pred.shape or y_true.ndim != 1:
        raise ValueError(f"label vectors must be 1-D and equal length, got {y_true.shape} and {y_pred.shape}")
    for name, y in (("true", y_true), ("predicted", y_pred)):
        bad = np.flatnonzero((y < 0) | (y >= C))
        if bad.size:
            raise ValueError(f"{name} label {y[bad[0]]} at index {bad[0]} outside [0, {C})")
    counts = np.bincount(y_true * C + y_pred, minlength=C * C).reshape(C, C)
    return ConfusionMatrix(counts, tuple(labels) if labels is not None else tuple(map(str, range(C))))


def _ratio(num, den):
    return None if den == 0 else float(100.0 * num / den)


def _f1(pr, se):
    if pr is None or se is None or pr + se == 0:
        return None
    return 2 * pr * se / (pr + se)


def _fmt(v, digits=2):
    return UNDEFINED if v is None else f"{v:.{digits}f}"


def f1_score(precision, sensitivity):
    """Harmonic mean of precision and sensitivity (both in percent)."""
    return _f1(precision, sensitivity)


def kappa(cm) -> float | None:
    """Cohen's kappa as a fraction; ``None`` when chance agreement is 1."""
    counts = np.asarray(getattr(cm, "counts", cm), dtype=np.float64)
    n = counts.sum()
    if n <= 0:
        raise ValueError("kappa needs a non-empty confusion matrix")
    oa = np.trace(counts) / n
    pe = float(counts.sum(axis=1) @ counts.sum(axis=0)) / n ** 2
    if pe >= 1:
        return None
    return (oa - pe) / (1 - pe)


def per_class(counts) -> dict[str, list]:
    """One-vs-rest metrics for every class (percent, ``None`` if undefined)."""
    counts = np.asarray(counts, dtype=np.int64)
    n = counts.sum()
    tp = np.diag(counts)
    row = counts.sum(axis=1)
    col = counts.sum(axis=0)
    out = {"PR": [], "SE": [], "SP": [], "F1": [], "AC": []}
    for c in range(counts.shape[0]):
        fn = row[c] - tp[c]
        fp = col[c] - tp[c]
        tn = n - tp[c] - fn - fp
        pr, se = _ratio(tp[c], tp[c] + fp), _ratio(tp[c], tp[c] + fn)
        out["PR"].append(pr)
        out["SE"].append(se)
        out["SP"].append(_ratio(tn, tn + fp))
        out["F1"].append(_f1(pr, se))
        out["AC"].append(_ratio(tp[c] + tn, n))
    return out


@dataclass
class EvalReport:
    """Metrics in percent; ``None`` marks an undefined value."""

    AC: float | None
    PR: float | None
    SE: float | None
    F1: float | None
    SP: float | None
    K: float | None
    n_classes: int
    averaging: str = "binary"
    per_class: dict = field(default_factory=dict)
    excluded: dict = field(default_factory=dict)

    def values(self) -> dict[str, float | None]:
        return {m: getattr(self, m) for m in METRICS}


def binary_metrics(cm, positive: int = 1) -> EvalReport:
    """Two-class metrics with ``positive`` as the positive class (Abnormal = 1)."""
    counts = np.asarray(getattr(cm, "counts", cm), dtype=np.int64)
    if counts.shape != (2, 2):
        raise ValueError(f"binary_metrics needs a 2x2 matrix, got {counts.shape}")
    neg = 1 - positive
    tp, fn = counts[positive, positive], counts[positive, neg]
    fp, tn = counts[neg, positive], counts[neg, neg]
    pr, se = _ratio(tp, tp + fp), _ratio(tp, tp + fn)
    k = kappa(counts) if counts.sum() else None
    return EvalReport(
        AC=_ratio(tp + tn, tp + tn + fp + fn), PR=pr, SE=se, F1=_f1(pr, se),
        SP=_ratio(tn, tn + fp), K=None if k is None else 100 * k, n_classes=2,
    )


def _mean_defined(values, weights=None):
    if weights is None:
        weights = [1.0] * len(values)
    pairs = [(v, w) for v, w in zip(values, weights) if v is not None]
    excluded = len(values) - len(pairs)
    tot = sum(w for _, w in pairs)
    if tot == 0:
        return None, excluded
    return sum(v * w for v, w in pairs) / tot, excluded


def multiclass_metrics(cm, averaging: str = "macro") -> EvalReport:
    """Overall accuracy plus class-averaged PR/SE/SP.

    ``averaging`` is ``macro`` (unweighted class mean) or ``weighted`` (by
    true-class support). F1 is the harmonic mean of the averaged PR and SE.
    Undefined per-class values are excluded from the averages and counted
    in ``excluded``.
    """
    counts = np.asarray(getattr(cm, "counts", cm), dtype=np.int64)
    C = counts.shape[0]
    if C < 2:
        raise ValueError("multiclass_metrics needs at least 2 classes")
    if averaging not in ("macro", "weighted"):
        raise ValueError(f"averaging must be 'macro' or 'weighted', got {averaging!r}")
    per = per_class(counts)
    weights = counts.sum(axis=1).astype(float).tolist() if averaging == "weighted" else None
    avg, excluded = {}, {}
    for m in ("PR", "SE", "SP"):
        avg[m], excluded[m] = _mean_defined(per[m], weights)
    n = counts.sum()
    k = kappa(counts) if n else None
    return EvalReport(
        AC=_ratio(np.trace(counts), n), PR=avg["PR"], SE=avg["SE"], F1=_f1(avg["PR"], avg["SE"]),
        SP=avg["SP"], K=None if k is None else 100 * k, n_classes=C, averaging=averaging,
        per_class=per, excluded=excluded,
    )


def evaluate(cm: ConfusionMatrix, averaging: str = "macro") -> EvalReport:
    return binary_metrics(cm) if cm.counts.shape == (2, 2) else multiclass_metrics(cm, averaging)


@dataclass
class Aggregate:
    mean: dict[str, float | None]
    std: dict[str, float | None]


def aggregate_folds(reports: Sequence[EvalReport]) -> Aggregate:
    """Arithmetic mean and sample (n-1) standard deviation per metric."""
    if len(reports) < 2:
        raise ValueError("aggregate_folds needs at least 2 reports")
    sizes = {r.n_classes for r in reports}
    if len(sizes) > 1:
        raise ValueError(f"reports mix class counts {sorted(sizes)}")
    mean, std = {}, {}
    for m in METRICS:
        vals = [getattr(r, m) for r in reports]
        if any(v is None for v in vals):
            mean[m] = std[m] = None
            continue
        a = np.asarray(vals, dtype=np.float64)
        mean[m] = float(a.mean())
        std[m] = float(a.std(ddof=1))
    return Aggregate(mean, std)


def report_table(reports: Sequence[EvalReport], row_names: Sequence[str] | None = None,
                 digits: int = 2) -> str:
    """Per-fold rows, then ``Mean`` and ``Std`` rows (columns AC,PR,SE,F1,SP,K)."""
    names = list(row_names) if row_names else [f"Fold {i + 1}" for i in range(len(reports))]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["Fold", *METRICS])
    for name, r in zip(names, reports):
        w.writerow([name, *(_fmt(getattr(r, m), digits) for m in METRICS)])
    if len(reports) >= 2:
        agg = aggregate_folds(reports)
        w.writerow(["Mean", *(_fmt(agg.mean[m], digits) for m in METRICS)])
        w.writerow(["Std", *(_fmt(agg.std[m], digits) for m in METRICS)])
    return buf.getvalue()

