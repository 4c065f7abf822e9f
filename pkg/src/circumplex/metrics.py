"""Classification and regression metrics plus the :class:`EvalReport` bundle."""

from __future__ import annotations

import csv
import io
import json
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from . import losses
from .errors import LabelError, ShapeError


def confusion_matrix(pred, true, num_classes: int) -> np.ndarray:
    """Entry (i, j) counts samples of true class i predicted as j."""
    pred = np.asarray(pred, dtype=np.int64).ravel()
    true = np.asarray(true, dtype=np.int64).ravel()
    if pred.shape != true.shape:
        raise ShapeError(f"{pred.size} predictions for {true.size} targets")
    for name, arr in (("prediction", pred), ("target", true)):
        if arr.size and (arr.min() < 0 or arr.max() >= num_classes):
            raise LabelError(f"{name} index outside 0..{num_classes - 1}")
    cm = np.zeros((num_classes, num_classes), dtype=np.int64)
    np.add.at(cm, (true, pred), 1)
    return cm


def _safe_div(num, den):
    num = np.asarray(num, dtype=np.float64)
    den = np.asarray(den, dtype=np.float64)
    return np.divide(num, den, out=np.zeros_like(num), where=den != 0)


@dataclass
class PRF:
    precision: float
    recall: float
    f1: float
    per_class: list[tuple[float, float, float]]
    micro_precision: float
    micro_recall: float
    micro_f1: float
    accuracy: float


def prf1_from_counts(tp, fp, fn) -> PRF:
    tp, fp, fn = (np.asarray(a, dtype=np.float64) for a in (tp, fp, fn))
    p = _safe_div(tp, tp + fp)
    r = _safe_div(tp, tp + fn)
    f = _safe_div(2 * p * r, p + r)
    mp = float(_safe_div(tp.sum(), tp.sum() + fp.sum()))
    mr = float(_safe_div(tp.sum(), tp.sum() + fn.sum()))
    mf = float(_safe_div(2 * mp * mr, mp + mr))
    per_class = [(float(a), float(b), float(c)) for a, b, c in zip(p, r, f)]
    return PRF(float(p.mean()), float(r.mean()), float(f.mean()), per_class, mp, mr, mf, accuracy=mr)


def prf1_macro(confusion) -> PRF:
    """Macro precision/recall/F1 from a confusion matrix; 0/0 counts as 0."""
    cm = np.asarray(confusion)
    if cm.ndim != 2 or cm.shape[0] != cm.shape[1]:
        raise ShapeError(f"confusion matrix must be square, got {cm.shape}")
    tp = np.diag(cm)
    out = prf1_from_counts(tp, cm.sum(axis=0) - tp, cm.sum(axis=1) - tp)
    total = cm.sum()
    out.accuracy = float(tp.sum() / total) if total else 0.0
    return out


def regression_errors(pred, target, dims: Sequence[str] | None = None) -> dict[str, dict[str, float]]:
    """MSE / MAE / RMSE per column and pooled over every entry."""
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise ShapeError(f"prediction shape {pred.shape} does not match target {target.shape}")
    if pred.ndim == 1:
        pred, target = pred[:, None], target[:, None]
    dims = list(dims) if dims is not None else [f"dim{j}" for j in range(pred.shape[1])]
    if len(dims) != pred.shape[1]:
        raise ShapeError(f"{len(dims)} dim names for {pred.shape[1]} columns")
    err = pred - target

    def summary(e):
        mse = float(np.mean(e * e))
        return {"mse": mse, "mae": float(np.mean(np.abs(e))), "rmse": float(np.sqrt(mse))}

    out = {d: summary(err[:, j]) for j, d in enumerate(dims)}
    out["pooled"] = summary(err)
    return out


def topk_indices(scores, k: int) -> np.ndarray:
    """Top-k class indices per row; ties go to the lower index."""
    scores = np.asarray(scores, dtype=np.float64)
    order = np.argsort(-scores, axis=1, kind="stable")
    return order[:, :k]


def topk_accuracy(scores, true_sets: Sequence[Sequence[int]], k: int) -> float:
    """Fraction of rows whose top-k classes hit at least one true label."""
    scores = np.asarray(scores, dtype=np.float64)
    n, num_classes = scores.shape
    if not 1 <= k <= num_classes:
        raise ValueError(f"k={k} outside 1..{num_classes}")
    if len(true_sets) != n:
        raise ShapeError(f"{len(true_sets)} label sets for {n} score rows")
    if n == 0:
        return 0.0
    top = topk_indices(scores, k)
    hits = 0
    for row, truth in zip(top, true_sets):
        if len(truth) == 0:
            raise LabelError("empty true label set")
        hits += bool(set(int(t) for t in truth) & set(row.tolist()))
    return hits / n


def abs_error_cdf(pred, target, grid) -> list[tuple[float, float]]:
    """Fraction of absolute errors at or below each grid threshold."""
    grid = np.asarray(grid, dtype=np.float64)
    if grid.size == 0:
        raise ValueError("empty threshold grid")
    if np.any(np.diff(grid) <= 0):
        raise ValueError("threshold grid must be strictly increasing")
    err = np.sort(np.abs(np.asarray(pred, dtype=np.float64) - np.asarray(target, dtype=np.float64)).ravel())
    if err.size == 0:
        return [(float(t), 0.0) for t in grid]
    counts = np.searchsorted(err, grid, side="right")
    return [(float(t), float(c / err.size)) for t, c in zip(grid, counts)]


def ccc_metric(pred, target) -> float:
    return losses.ccc(pred, target)


DEFAULT_CDF_GRID = np.round(np.arange(41) * 0.05, 10)


@dataclass
class EvalReport:
    precision: float | None = None
    recall: float | None = None
    f1: float | None = None
    accuracy: float | None = None
    micro_f1: float | None = None
    per_class_prf: list | None = None
    confusion: list | None = None
    regression: dict | None = None
    regression_unit: dict | None = None
    ccc: dict | None = None
    topk_accuracy: dict | None = None
    cdf: list | None = None
    cdf_per_dim: dict | None = None
    categories: list | None = None
    n_samples: int = 0
    space: str = ""
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def confusion_csv(self) -> str:
        if self.confusion is None:
            return ""
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        names = self.categories or [str(i) for i in range(len(self.confusion))]
        w.writerow(["true\\pred", *names])
        for name, row in zip(names, self.confusion):
            w.writerow([name, *row])
        return buf.getvalue()

    def cdf_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        dims = sorted(self.cdf_per_dim or {})
        w.writerow(["threshold", "pooled", *dims])
        for i, (t, frac) in enumerate(self.cdf or []):
            w.writerow([repr(t), repr(frac), *(repr(self.cdf_per_dim[d][i][1]) for d in dims)])
        return buf.getvalue()
