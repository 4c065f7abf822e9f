"""Losses for the discrete, combined and valence-arousal regimes.

Each public loss takes plain arrays and returns a :class:`LossResult` holding
the scalar value and gradients w.r.t. its prediction inputs. The ``*_graph``
variants operate on :class:`~circumplex.diffcore.Tensor` nodes and are what
the training loop uses.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import diffcore as dc
from .affect_core import ClassWeights
from .errors import ConfigError, LabelError, NumericError, ShapeError

_DEGENERATE = 1e-12


@dataclass
class LossConfig:
    alpha: float = 5.0
    beta: float = 3.0
    class_weights: ClassWeights | None = None
    pos_weights: np.ndarray | None = None

    def __post_init__(self):
        if self.alpha < 0 or self.beta < 0:
            raise ConfigError("alpha and beta must be non-negative")


@dataclass
class LossResult:
    value: float
    grads: dict[str, np.ndarray] = field(default_factory=dict)
    components: dict[str, float] = field(default_factory=dict)


def _leaf(x, name):
    return dc.Tensor(np.array(x, dtype=np.float64), requires_grad=True, name=name)


def _run(root: dc.Tensor, leaves: dict[str, dc.Tensor], components=None) -> LossResult:
    dc.backward(root)
    grads = {k: (t.grad if t.grad is not None else np.zeros_like(t.value)) for k, t in leaves.items()}
    comps = {k: float(v.value) for k, v in (components or {}).items()}
    return LossResult(float(root.value), grads, comps)


def _check_regression_shapes(pred, target):
    if pred.shape != target.shape:
        raise ShapeError(f"prediction shape {pred.shape} does not match target {target.shape}")
    if pred.ndim != 2:
        raise ShapeError(f"expected an N x D block, got shape {pred.shape}")


# graph-level building blocks ----------------------------------------------

def mse_graph(pred: dc.Tensor, target) -> dc.Tensor:
    target = np.asarray(target, dtype=np.float64)
    _check_regression_shapes(pred.value, target)
    return dc.mean(dc.square(dc.sub(pred, target)))


def weighted_ce_graph(logits: dc.Tensor, targets, weights=None) -> dc.Tensor:
    return dc.softmax_ce(logits, targets, weights)


def ccc_graph(x: dc.Tensor, y) -> dc.Tensor:
    """Concordance correlation with population moments as a graph node."""
    y = dc.as_tensor(y)
    mx, my = dc.mean(x), dc.mean(y)
    dx, dy = dc.sub(x, mx), dc.sub(y, my)
    cov = dc.mean(dc.mul(dx, dy))
    denom = dc.add(dc.add(dc.mean(dc.square(dx)), dc.mean(dc.square(dy))), dc.square(dc.sub(mx, my)))
    if float(denom.value) < _DEGENERATE:
        if np.allclose(x.value, y.value, rtol=0.0, atol=_DEGENERATE):
            return dc.Tensor(1.0)
        raise NumericError("degenerate CCC: both inputs constant and unequal")
    return dc.div(dc.scale(cov, 2.0), denom)


def ccc_term_graph(pred: dc.Tensor, target) -> dc.Tensor:
    """``1 - mean_d ccc(pred[:, d], target[:, d])`` over valence and arousal."""
    target = np.asarray(target, dtype=np.float64)
    _check_regression_shapes(pred.value, target)
    if pred.shape[0] < 2:
        raise ShapeError("CCC needs at least two samples")
    dims = min(2, pred.shape[1])
    total = None
    for d in range(dims):
        c = ccc_graph(pred[:, d], target[:, d])
        total = c if total is None else dc.add(total, c)
    return dc.sub(1.0, dc.scale(total, 1.0 / dims))


def combined_graph(logits, targets, pred_va, target_va, config: LossConfig):
    ce = weighted_ce_graph(logits, targets, config.class_weights)
    mse = mse_graph(pred_va, target_va)
    return dc.add(ce, dc.scale(mse, config.alpha)), {"ce": ce, "mse": mse}


def valence_arousal_graph(pred_va, target_va, config: LossConfig):
    ccc_term = ccc_term_graph(pred_va, target_va)
    mse = mse_graph(pred_va, target_va)
    return dc.add(ccc_term, dc.scale(mse, config.beta)), {"ccc": ccc_term, "mse": mse}


def bce_combined_graph(logits, multi_targets, pred_vad, target_vad, config: LossConfig):
    t = np.asarray(multi_targets, dtype=np.float64)
    if not np.all((t == 0) | (t == 1)):
        raise LabelError("multi-label targets must be 0 or 1")
    if config.pos_weights is None:
        raise ConfigError("weighted BCE needs pos_weights")
    bce = dc.bce_with_logits(logits, t, config.pos_weights)
    mse = mse_graph(pred_vad, target_vad)
    return dc.add(bce, dc.scale(mse, config.alpha)), {"bce": bce, "mse": mse}


# array-level API ----------------------------------------------------------

def weighted_cross_entropy(logits, targets, weights=None) -> LossResult:
    z = _leaf(logits, "logits")
    return _run(weighted_ce_graph(z, targets, weights), {"logits": z})


def mse_va(pred, target) -> LossResult:
    p = _leaf(pred, "pred")
    return _run(mse_graph(p, target), {"pred": p})


def combined_loss(logits, targets, pred_va, target_va, config: LossConfig | None = None) -> LossResult:
    if logits is None or pred_va is None:
        raise ConfigError("combined loss needs both the classification and regression heads")
    config = config or LossConfig()
    z, p = _leaf(logits, "logits"), _leaf(pred_va, "pred_va")
    root, comps = combined_graph(z, targets, p, target_va, config)
    return _run(root, {"logits": z, "pred_va": p}, comps)


def ccc(x, y) -> float:
    """Lin's concordance correlation coefficient (population moments)."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise ShapeError(f"ccc expects two equal-length vectors, got {x.shape} and {y.shape}")
    if x.size < 2:
        raise ShapeError("ccc needs at least two values")
    mx, my = x.mean(), y.mean()
    vx, vy = ((x - mx) ** 2).mean(), ((y - my) ** 2).mean()
    denom = vx + vy + (mx - my) ** 2
    if denom < _DEGENERATE:
        if np.allclose(x, y, rtol=0.0, atol=_DEGENERATE):
            return 1.0
        raise NumericError("degenerate CCC: both inputs constant and unequal")
    return float(2.0 * ((x - mx) * (y - my)).mean() / denom)


def ccc_loss(pred_va, target_va, config: LossConfig | None = None) -> LossResult:
    """Valence-arousal loss ``(1 - mean CCC) + beta * MSE``."""
    config = config or LossConfig()
    p = _leaf(pred_va, "pred_va")
    root, comps = valence_arousal_graph(p, target_va, config)
    return _run(root, {"pred_va": p}, comps)


def weighted_bce_combined(logits, multi_targets, pred_vad, target_vad, config: LossConfig) -> LossResult:
    z, p = _leaf(logits, "logits"), _leaf(pred_vad, "pred_vad")
    root, comps = bce_combined_graph(z, multi_targets, p, target_vad, config)
    return _run(root, {"logits": z, "pred_vad": p}, comps)
