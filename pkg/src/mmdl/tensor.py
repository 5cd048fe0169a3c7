"""Reverse-mode automatic differentiation over dense 2-D float64 matrices.

A :class:`Node` wraps a matrix value together with its gradient and the rule
that pushes an upstream gradient back to its parents.  Graphs are built
fresh for every forward pass; nothing is cached between training steps.

Example
-------
>>> x = Node([[1.0, 2.0]], requires_grad=True)
>>> loss = total_sum(mul(x, x))
>>> backward(loss)
>>> x.grad
array([[2., 4.]])
"""

from __future__ import annotations

import numpy as np

from .errors import DegenerateInputError, NumericError, ShapeError

NORM_EPS = 1e-12


def as_matrix(data, name="matrix"):
    """Return ``data`` as a 2-D float64 array, rejecting other ranks."""
    arr = np.asarray(data, dtype=np.float64)
    if arr.ndim != 2:
        raise ShapeError(f"{name} must be 2-D, got shape {arr.shape}")
    return arr


class Node:
    __slots__ = ("value", "grad", "parents", "requires_grad", "_backward")

    def __init__(self, value, requires_grad=False, parents=(), backward_rule=None):
        self.value = as_matrix(value)
        self.grad = np.zeros_like(self.value)
        self.parents = tuple(parents)
        self.requires_grad = requires_grad or any(p.requires_grad for p in self.parents)
        self._backward = backward_rule

    @property
    def shape(self):
        return self.value.shape

    def zero_grad(self):
        self.grad = np.zeros_like(self.value)

    def __repr__(self):
        return f"Node(shape={self.shape}, requires_grad={self.requires_grad})"

    def __add__(self, other):
        return add(self, _lift(other))

    def __sub__(self, other):
        return sub(self, _lift(other))

    def __mul__(self, other):
        if np.isscalar(other):
            return scale(self, float(other))
        return mul(self, _lift(other))

    __rmul__ = __mul__

    def __matmul__(self, other):
        return matmul(self, _lift(other))

    def __neg__(self):
        return scale(self, -1.0)


def _lift(x):
    return x if isinstance(x, Node) else Node(x)


def constant(value):
    return Node(value, requires_grad=False)


def parameter(value):
    return Node(np.array(value, dtype=np.float64, copy=True), requires_grad=True)


def _make(value, parents, rule):
    return Node(value, parents=parents, backward_rule=rule)


def _check_same_shape(a, b, op):
    if a.shape != b.shape:
        raise ShapeError(f"{op}: shapes {a.shape} and {b.shape} differ")


# -- linear algebra ----------------------------------------------------------


def matmul(a, b):
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: inner dimensions differ for {a.shape} @ {b.shape}")
    out = None

    def rule():
        g = out.grad
        if a.requires_grad:
            a.grad += g @ b.value.T
        if b.requires_grad:
            b.grad += a.value.T @ g

    out = _make(a.value @ b.value, (a, b), rule)
    return out


def transpose(a):
    out = None

    def rule():
        a.grad += out.grad.T

    out = _make(a.value.T.copy(), (a,), rule)
    return out


# -- elementwise -------------------------------------------------------------


def add(a, b):
    """Elementwise sum; ``b`` may also be a 1×w row broadcast over the rows of ``a``."""
    broadcast = b.shape[0] == 1 and a.shape[0] != 1 and a.shape[1] == b.shape[1]
    if not broadcast:
        _check_same_shape(a, b, "add")
    out = None

    def rule():
        g = out.grad
        if a.requires_grad:
            a.grad += g
        if b.requires_grad:
            b.grad += g.sum(axis=0, keepdims=True) if broadcast else g

    out = _make(a.value + b.value, (a, b), rule)
    return out


def sub(a, b):
    _check_same_shape(a, b, "sub")
    out = None

    def rule():
        if a.requires_grad:
            a.grad += out.grad
        if b.requires_grad:
            b.grad -= out.grad

    out = _make(a.value - b.value, (a, b), rule)
    return out


def mul(a, b):
    _check_same_shape(a, b, "mul")
    out = None

    def rule():
        g = out.grad
        if a.requires_grad:
            a.grad += g * b.value
        if b.requires_grad:
            b.grad += g * a.value

    out = _make(a.value * b.value, (a, b), rule)
    return out


def scale(a, factor):
    factor = float(factor)
    out = None

    def rule():
        a.grad += factor * out.grad

    out = _make(factor * a.value, (a,), rule)
    return out


def add_scalar(a, c):
    out = None

    def rule():
        a.grad += out.grad

    out = _make(a.value + float(c), (a,), rule)
    return out


def tanh(a):
    t = np.tanh(a.value)
    out = None

    def rule():
        a.grad += out.grad * (1.0 - t * t)

    out = _make(t, (a,), rule)
    return out


def relu(a):
    """Hinge ``max(x, 0)``; the subgradient at exactly 0 is taken as 0."""
    active = a.value > 0.0
    out = None

    def rule():
        a.grad += out.grad * active

    out = _make(np.where(active, a.value, 0.0), (a,), rule)
    return out


# -- reductions and indexing -------------------------------------------------


def row_sum(a):
    out = None

    def rule():
        a.grad += np.broadcast_to(out.grad, a.shape)

    out = _make(a.value.sum(axis=1, keepdims=True), (a,), rule)
    return out


def total_sum(a):
    out = None

    def rule():
        a.grad += out.grad[0, 0]

    out = _make(np.array([[a.value.sum()]]), (a,), rule)
    return out


def slice_rows(a, start, stop):
    if not 0 <= start <= stop <= a.shape[0]:
        raise ShapeError(f"slice_rows: [{start}:{stop}] out of bounds for {a.shape}")
    out = None

    def rule():
        a.grad[start:stop] += out.grad

    out = _make(a.value[start:stop].copy(), (a,), rule)
    return out


def take_rows(a, indices):
    """Gather rows by index (repeats allowed); gradients scatter-add back."""
    idx = np.asarray(indices, dtype=np.intp).reshape(-1)
    if idx.size and (idx.min() < 0 or idx.max() >= a.shape[0]):
        raise ShapeError(f"take_rows: index out of bounds for {a.shape}")
    out = None

    def rule():
        np.add.at(a.grad, idx, out.grad)

    out = _make(a.value[idx], (a,), rule)
    return out


def row_l2_normalize(a):
    norms = np.sqrt(np.einsum("ij,ij->i", a.value, a.value))[:, None]
    bad = np.flatnonzero(norms[:, 0] < NORM_EPS)
    if bad.size:
        raise DegenerateInputError(
            f"row {bad[0]} has norm {norms[bad[0], 0]:.3g} < {NORM_EPS}", row=int(bad[0])
        )
    u = a.value / norms
    out = None

    def rule():
        g = out.grad
        # d(x/|x|) = (g - u (u.g)) / |x|
        a.grad += (g - u * np.einsum("ij,ij->i", u, g)[:, None]) / norms

    out = _make(u, (a,), rule)
    return out


# -- losses --------------------------------------------------------------------


def softmax_cross_entropy(logits, targets):
    """Per-row cross-entropy ``-log softmax(logits)[target]`` as a b×1 column."""
    t = np.asarray(targets, dtype=np.intp).reshape(-1)
    if t.size != logits.shape[0]:
        raise ShapeError(f"softmax_cross_entropy: {t.size} targets for {logits.shape[0]} rows")
    rows = np.arange(t.size)
    top = logits.value.argmax(axis=1)
    shifted = logits.value - logits.value[rows, top][:, None]
    # log(1 + sum of the non-max terms) keeps precision when one logit dominates
    rest = np.exp(shifted)
    rest[rows, top] = 0.0
    logz = np.log1p(rest.sum(axis=1, keepdims=True))
    logp = shifted - logz
    out = None

    def rule():
        p = np.exp(logp)
        p[rows, t] -= 1.0
        logits.grad += p * out.grad

    out = _make(-logp[rows, t][:, None], (logits,), rule)
    return out


def target_angular_margin(cosines, targets, margins):
    """Replace each row's target cosine ``c`` with ``cos(arccos(c) + m)``.

    ``margins`` holds one margin per row.  Where ``arccos(c) + m`` would pass
    pi the value falls back to ``c - m*sin(m)``, which stays monotone in ``c``.
    """
    t = np.asarray(targets, dtype=np.intp).reshape(-1)
    m = np.asarray(margins, dtype=np.float64).reshape(-1)
    rows = np.arange(t.size)
    c = cosines.value[rows, t]
    cos_m, sin_m = np.cos(m), np.sin(m)
    sin_t = np.sqrt(np.clip(1.0 - c * c, 0.0, None))
    active = c > np.cos(np.pi - m)
    shifted = np.where(active, c * cos_m - sin_t * sin_m, c - m * sin_m)
    # derivative on the active branch: cos m + c sin m / sin(theta)
    with np.errstate(divide="ignore", invalid="ignore"):
        slope_active = cos_m + np.where(sin_t > 0.0, c * sin_m / sin_t, 0.0)
    slope = np.where(active & (m != 0.0), slope_active, 1.0)
    value = cosines.value.copy()
    value[rows, t] = shifted
    out = None

    def rule():
        g = out.grad.copy()
        g[rows, t] *= slope
        cosines.grad += g

    out = _make(value, (cosines,), rule)
    return out


# -- driver --------------------------------------------------------------------


def _topological_order(root):
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
        for p in node.parents:
            if id(p) not in seen:
                stack.append((p, False))
    return order


def backward(loss):
    """Accumulate d(loss)/d(node) into ``.grad`` of every node feeding ``loss``.

    Leaf gradients accumulate across calls; interior gradients are reset so a
    repeated call adds exactly one more copy of the gradient to the leaves.
    """
    if loss.shape != (1, 1):
        raise ShapeError(f"backward: loss must be 1x1, got {loss.shape}")
    order = _topological_order(loss)
    for node in order:
        if node.parents:
            node.grad = np.zeros_like(node.value)
    loss.grad = loss.grad + 1.0 if not loss.parents else np.ones((1, 1))
    for node in reversed(order):
        if node._backward is not None and node.requires_grad:
            node._backward()


def finite_diff_check(f, params, eps=1e-5):
    """Compare autodiff gradients of ``f`` with central finite differences.

    ``f`` maps a list of Nodes (one per entry of ``params``) to a 1×1 Node.
    Returns ``max |analytic - numeric| / max(1, |analytic|)`` over all entries.
    """
    if not 0.0 < eps <= 1e-3:
        raise ValueError(f"eps must lie in (0, 1e-3], got {eps}")
    base = [np.array(as_matrix(p), copy=True) for p in params]
    nodes = [parameter(p) for p in base]
    loss = f(nodes)
    _require_finite(loss.value[0, 0])
    backward(loss)
    analytic = [n.grad for n in nodes]

    def evaluate(values):
        v = f([constant(x) for x in values]).value[0, 0]
        _require_finite(v)
        return v

    worst = 0.0
    for k, p in enumerate(base):
        for idx in np.ndindex(p.shape):
            plus = [x.copy() for x in base]
            minus = [x.copy() for x in base]
            plus[k][idx] += eps
            minus[k][idx] -= eps
            numeric = (evaluate(plus) - evaluate(minus)) / (2.0 * eps)
            a = analytic[k][idx]
            worst = max(worst, abs(a - numeric) / max(1.0, abs(a)))
    return worst


def _require_finite(v):
    if not np.isfinite(v):
        raise NumericError(f"non-finite function value {v}")
