"""A small reverse-mode autodiff engine over numpy arrays, plus AdamW and a
cosine learning-rate schedule.

Every op checks shapes when the graph is built. ``backward`` accumulates into
``.grad`` of every node that requires it; call :func:`zero_grads` between
steps to avoid double counting.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping

import numpy as np

from .errors import NumericError, ScheduleError, ShapeError


class Tensor:
    __slots__ = ("value", "grad", "requires_grad", "_parents", "_backward", "name")
    __array_priority__ = 100  # make ndarray <op> Tensor defer to Tensor

    def __init__(self, value, requires_grad: bool = False, name: str | None = None):
        self.value = np.asarray(value, dtype=np.float64)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable[[np.ndarray], tuple] | None = None
        self.name = name

    def __repr__(self):
        tag = f" {self.name}" if self.name else ""
        return f"Tensor{tag}(shape={self.shape}, requires_grad={self.requires_grad})"

    @property
    def shape(self):
        return self.value.shape

    @property
    def ndim(self):
        return self.value.ndim

    def zero_grad(self):
        self.grad = None

    def backward(self):
        backward(self)

    __add__ = lambda self, other: add(self, other)
    __radd__ = lambda self, other: add(other, self)
    __sub__ = lambda self, other: sub(self, other)
    __rsub__ = lambda self, other: sub(other, self)
    __mul__ = lambda self, other: mul(self, other)
    __rmul__ = lambda self, other: mul(other, self)
    __truediv__ = lambda self, other: div(self, other)
    __rtruediv__ = lambda self, other: div(other, self)
    __neg__ = lambda self: neg(self)
    __matmul__ = lambda self, other: matmul(self, other)

    def __getitem__(self, index):
        return take(self, index)

    def sum(self, axis=None, keepdims=False):
        return sum_(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean(self, axis, keepdims)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _make(value, parents: tuple[Tensor, ...], backward_fn) -> Tensor:
    out = Tensor(value)
    if any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = parents
        out._backward = backward_fn
    return out


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _broadcast_shape(a: Tensor, b: Tensor, op: str) -> tuple:
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(f"{op}: incompatible shapes {a.shape} and {b.shape}") from None


# elementwise binary ops ---------------------------------------------------

def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a, b, "add")
    return _make(a.value + b.value, (a, b),
                 lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)))


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a, b, "sub")
    return _make(a.value - b.value, (a, b),
                 lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)))


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a, b, "mul")
    return _make(a.value * b.value, (a, b),
                 lambda g: (_unbroadcast(g * b.value, a.shape), _unbroadcast(g * a.value, b.shape)))


def div(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a, b, "div")
    out = a.value / b.value
    return _make(out, (a, b),
                 lambda g: (_unbroadcast(g / b.value, a.shape),
                            _unbroadcast(-g * out / b.value, b.shape)))


def neg(a) -> Tensor:
    a = as_tensor(a)
    return _make(-a.value, (a,), lambda g: (-g,))


def scale(a, c: float) -> Tensor:
    a = as_tensor(a)
    c = float(c)
    return _make(a.value * c, (a,), lambda g: (g * c,))


def square(a) -> Tensor:
    a = as_tensor(a)
    return _make(a.value * a.value, (a,), lambda g: (2.0 * a.value * g,))


# linear algebra -----------------------------------------------------------

def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: cannot multiply {a.shape} by {b.shape}")
    return _make(a.value @ b.value, (a, b), lambda g: (g @ b.value.T, a.value.T @ g))


def affine(x, W, b) -> Tensor:
    """``x @ W + b`` for x (N, I), W (I, O), b (O,)."""
    x, W, b = as_tensor(x), as_tensor(W), as_tensor(b)
    if x.ndim != 2 or W.ndim != 2 or x.shape[1] != W.shape[0]:
        raise ShapeError(f"affine: input {x.shape} does not match weight {W.shape}")
    if b.shape != (W.shape[1],):
        raise ShapeError(f"affine: bias {b.shape} does not match weight {W.shape}")
    return _make(x.value @ W.value + b.value, (x, W, b),
                 lambda g: (g @ W.value.T, x.value.T @ g, g.sum(axis=0)))


# nonlinearities -----------------------------------------------------------

def relu(a) -> Tensor:
    a = as_tensor(a)
    mask = a.value > 0
    return _make(np.where(mask, a.value, 0.0), (a,), lambda g: (g * mask,))


def tanh(a) -> Tensor:
    a = as_tensor(a)
    out = np.tanh(a.value)
    return _make(out, (a,), lambda g: (g * (1.0 - out * out),))


def _sigmoid(z: np.ndarray) -> np.ndarray:
    # exp of a non-positive argument only, so no overflow
    e = np.exp(-np.abs(z))
    return np.where(z >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


def sigmoid(a) -> Tensor:
    a = as_tensor(a)
    out = _sigmoid(a.value)
    return _make(out, (a,), lambda g: (g * out * (1.0 - out),))


def exp(a) -> Tensor:
    a = as_tensor(a)
    out = np.exp(a.value)
    return _make(out, (a,), lambda g: (g * out,))


def log(a) -> Tensor:
    a = as_tensor(a)
    return _make(np.log(a.value), (a,), lambda g: (g / a.value,))


# reductions and indexing --------------------------------------------------

def sum_(a, axis=None, keepdims=False) -> Tensor:
    a = as_tensor(a)
    out = a.value.sum(axis=axis, keepdims=keepdims)

    def bw(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, a.shape).copy(),)

    return _make(out, (a,), bw)


def mean(a, axis=None, keepdims=False) -> Tensor:
    a = as_tensor(a)
    n = a.value.size if axis is None else np.prod([a.shape[i] for i in np.atleast_1d(axis)])
    return scale(sum_(a, axis, keepdims), 1.0 / n)


def take(a, index) -> Tensor:
    a = as_tensor(a)
    out = a.value[index]

    def bw(g):
        full = np.zeros_like(a.value)
        np.add.at(full, index, g)
        return (full,)

    return _make(out, (a,), bw)


# fused losses -------------------------------------------------------------

def softmax_ce(logits, targets, weights=None) -> Tensor:
    """Class-weighted softmax cross-entropy, reduced by weighted mean.

    ``sum_i w[y_i] * -log softmax(z_i)[y_i] / sum_i w[y_i]``; with
    ``weights=None`` every class weighs 1 and this is the plain mean.
    """
    logits = as_tensor(logits)
    z = logits.value
    if z.ndim != 2:
        raise ShapeError(f"softmax_ce: logits must be (N, K), got {z.shape}")
    n, k = z.shape
    targets = np.asarray(targets, dtype=np.int64)
    if targets.shape != (n,):
        raise ShapeError(f"softmax_ce: targets shape {targets.shape} does not match {n} rows")
    if n and (targets.min() < 0 or targets.max() >= k):
        raise ShapeError(f"softmax_ce: target index outside 0..{k - 1}")
    if not np.all(np.isfinite(z)):
        raise NumericError("softmax_ce: non-finite logits")
    w = np.ones(k) if weights is None else np.asarray(getattr(weights, "weights", weights), dtype=np.float64)
    if w.shape != (k,):
        raise ShapeError(f"softmax_ce: {w.shape[0]} class weights for {k} classes")
    shifted = z - z.max(axis=1, keepdims=True)
    log_norm = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    log_p = shifted - log_norm
    rows = np.arange(n)
    sw = w[targets]
    total = sw.sum()
    value = -(sw * log_p[rows, targets]).sum() / total

    def bw(g):
        grad = np.exp(log_p)
        grad[rows, targets] -= 1.0
        return (g * grad * (sw / total)[:, None],)

    return _make(value, (logits,), bw)


def softplus(x: np.ndarray) -> np.ndarray:
    return np.logaddexp(0.0, x)


def bce_with_logits(logits, targets, pos_weight=None) -> Tensor:
    """Mean positive-weighted binary cross-entropy over all N*K entries.

    Uses ``-log sigmoid(z) = softplus(-z)`` and ``-log(1 - sigmoid(z)) =
    softplus(z)`` so large |z| never overflows.
    """
    logits = as_tensor(logits)
    z = logits.value
    t = np.asarray(targets, dtype=np.float64)
    if t.shape != z.shape:
        raise ShapeError(f"bce_with_logits: targets {t.shape} vs logits {z.shape}")
    if not np.all(np.isfinite(z)):
        raise NumericError("bce_with_logits: non-finite logits")
    p = np.ones(z.shape[-1]) if pos_weight is None else np.asarray(pos_weight, dtype=np.float64)
    if p.shape != (z.shape[-1],):
        raise ShapeError(f"bce_with_logits: pos_weight {p.shape} for {z.shape[-1]} classes")
    loss = p * t * softplus(-z) + (1.0 - t) * softplus(z)
    count = z.size
    s = _sigmoid(z)

    def bw(g):
        return (g * (p * t * (s - 1.0) + (1.0 - t) * s) / count,)

    return _make(loss.sum() / count, (logits,), bw)


# backward -----------------------------------------------------------------

def _topological(root: Tensor) -> list[Tensor]:
    order, seen = [], set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for parent in node._parents:
            if parent.requires_grad and id(parent) not in seen:
                stack.append((parent, False))
    return order


def backward(root: Tensor) -> None:
    """Propagate d(root)/d(node) to every node that requires a gradient.

    Gradients accumulate into ``.grad``; a second call without
    :func:`zero_grads` adds the same contribution again.
    """
    if root.value.size != 1:
        raise ShapeError(f"backward needs a scalar root, got shape {root.shape}")
    if not root.requires_grad:
        return
    pending = {id(root): np.ones_like(root.value)}
    for node in reversed(_topological(root)):
        g = pending.pop(id(node), None)
        if g is None:
            continue
        node.grad = g.copy() if node.grad is None else node.grad + g
        if node._backward is None:
            continue
        for parent, pg in zip(node._parents, node._backward(g)):
            if not parent.requires_grad:
                continue
            pg = np.asarray(pg, dtype=np.float64).reshape(parent.shape)
            key = id(parent)
            pending[key] = pg if key not in pending else pending[key] + pg
    return None


def zero_grads(tensors: Iterable[Tensor]) -> None:
    for t in tensors:
        t.grad = None


# optimisation -------------------------------------------------------------

@dataclass
class OptimizerState:
    lr: float = 5e-5
    weight_decay: float = 0.01
    betas: tuple[float, float] = (0.9, 0.999)
    eps: float = 1e-8
    step: int = 0
    exp_avg: dict[str, np.ndarray] = field(default_factory=dict)
    exp_avg_sq: dict[str, np.ndarray] = field(default_factory=dict)


def adamw_step(params: Mapping[str, np.ndarray], grads: Mapping[str, np.ndarray],
               state: OptimizerState, lr: float | None = None):
    """One AdamW update with decoupled weight decay.

    Returns ``(new_params, new_state)``; the inputs are left untouched.
    Parameters missing from ``grads`` are treated as having zero gradient.
    """
    lr = state.lr if lr is None else lr
    beta1, beta2 = state.betas
    t = state.step + 1
    bc1 = 1.0 - beta1 ** t
    bc2 = 1.0 - beta2 ** t
    new_params, m_out, v_out = {}, {}, {}
    for name, w in params.items():
        g = grads.get(name)
        g = np.zeros_like(w) if g is None else np.asarray(g, dtype=np.float64)
        if g.shape != w.shape:
            raise ShapeError(f"gradient for {name} has shape {g.shape}, parameter {w.shape}")
        if not np.all(np.isfinite(g)):
            raise NumericError(f"non-finite gradient for parameter {name}")
        m = state.exp_avg.get(name, np.zeros_like(w))
        v = state.exp_avg_sq.get(name, np.zeros_like(w))
        m = beta1 * m + (1.0 - beta1) * g
        v = beta2 * v + (1.0 - beta2) * g * g
        decayed = w - lr * state.weight_decay * w
        new_params[name] = decayed - lr * (m / bc1) / (np.sqrt(v / bc2) + state.eps)
        m_out[name], v_out[name] = m, v
    new_state = OptimizerState(lr=state.lr, weight_decay=state.weight_decay, betas=state.betas,
                               eps=state.eps, step=t, exp_avg=m_out, exp_avg_sq=v_out)
    return new_params, new_state


def cosine_lr(step: int, total_steps: int, lr_max: float, lr_min: float = 0.0) -> float:
    if total_steps <= 0:
        raise ScheduleError("total_steps must be positive")
    if step < 0 or step > total_steps:
        raise ScheduleError(f"step {step} outside 0..{total_steps}")
    return lr_min + (lr_max - lr_min) * (1.0 + math.cos(math.pi * step / total_steps)) / 2.0
