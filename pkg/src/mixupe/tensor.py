"""Dense float64 tensors with a dynamic reverse-mode autodiff graph.

Every differentiable op records its parents and a closure that maps the
upstream gradient to one gradient per parent. ``backward`` replays the
recorded nodes in reverse construction order, which is a valid reverse
topological order because a node is always created after its inputs.

Broadcasting is limited to a ``(1, n)`` row vector against an ``(m, n)``
matrix. Subgradients of ``relu`` and ``abs`` at exactly zero are 0.
"""

from __future__ import annotations

import itertools
import threading
from contextlib import contextmanager
from typing import Callable, Iterable, Sequence

import numpy as np

from . import _kernels as K

_ids = itertools.count()
_state = threading.local()


class TensorError(Exception):
    """Base class for engine errors."""


class ShapeError(TensorError, ValueError):
    pass


class NonFiniteError(TensorError, FloatingPointError):
    def __init__(self, op: str):
        super().__init__(f"non-finite value produced by op '{op}'")
        self.op = op


class BackwardError(TensorError, RuntimeError):
    pass


def _grad_enabled() -> bool:
    return getattr(_state, "enabled", True)


@contextmanager
def no_grad():
    """Evaluate ops without recording a graph."""
    prev = _grad_enabled()
    _state.enabled = False
    try:
        yield
    finally:
        _state.enabled = prev


@contextmanager
def frozen(params: Iterable["Tensor"]):
    """Temporarily treat ``params`` as constants."""
    params = list(params)
    flags = [p.requires_grad for p in params]
    for p in params:
        p.requires_grad = False
    try:
        yield
    finally:
        for p, f in zip(params, flags):
            p.requires_grad = f


class Tensor:
    __slots__ = ("data", "requires_grad", "grad", "_parents", "_backward", "_op", "_id", "_consumed")

    def __init__(self, data, requires_grad: bool = False):
        arr = np.array(data, dtype=np.float64)
        if arr.ndim > 2:
            raise ShapeError(f"tensors are at most 2-D, got shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise NonFiniteError("tensor")
        self.data = arr
        self.requires_grad = requires_grad
        self.grad: np.ndarray | None = None
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable | None = None
        self._op = "leaf"
        self._id = next(_ids)
        self._consumed = False

    @classmethod
    def _result(cls, data: np.ndarray, op: str, parents: Sequence["Tensor"], backward: Callable) -> "Tensor":
        if not np.all(np.isfinite(data)):
            raise NonFiniteError(op)
        out = cls.__new__(cls)
        out.data = data
        out.grad = None
        out._op = op
        out._id = next(_ids)
        out._consumed = False
        if _grad_enabled() and any(p.requires_grad for p in parents):
            out.requires_grad = True
            out._parents = tuple(parents)
            out._backward = backward
        else:
            out.requires_grad = False
            out._parents = ()
            out._backward = None
        return out

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def is_leaf(self) -> bool:
        return self._backward is None

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError(f"item() needs a single element, shape is {self.shape}")
        return float(self.data.reshape(()))

    def __float__(self) -> float:
        return self.item()

    def detach(self) -> "Tensor":
        return Tensor(self.data.copy())

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        rg = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor({self.data!r}{rg})"

    # operator sugar
    def __add__(self, other):
        return add(self, other) if isinstance(other, Tensor) else shift(self, float(other))

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other) if isinstance(other, Tensor) else shift(self, -float(other))

    def __rsub__(self, other):
        return shift(neg(self), float(other))

    def __mul__(self, other):
        return mul(self, other) if isinstance(other, Tensor) else scale(self, float(other))

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Tensor):
            raise TypeError("tensor / tensor is not supported")
        return scale(self, 1.0 / float(other))

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def backward(self) -> None:
        backward(self)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


# ---------------------------------------------------------------------------
# shape helpers
# ---------------------------------------------------------------------------


def _require_2d(t: Tensor, op: str) -> None:
    if t.data.ndim != 2:
        raise ShapeError(f"{op} expects a 2-D tensor, got shape {t.shape}")


def _broadcast_pair(a: Tensor, b: Tensor, op: str) -> None:
    if a.shape == b.shape:
        return
    sa, sb = a.shape, b.shape
    if len(sa) == 2 and len(sb) == 2 and sa[1] == sb[1] and (sa[0] == 1 or sb[0] == 1):
        return
    raise ShapeError(f"{op}: shapes {sa} and {sb} are not compatible")


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if g.shape == shape:
        return g
    return g.sum(axis=0, keepdims=True)


# ---------------------------------------------------------------------------
# binary ops
# ---------------------------------------------------------------------------


def matmul(a: Tensor, b: Tensor) -> Tensor:
    _require_2d(a, "matmul")
    _require_2d(b, "matmul")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: inner dimensions differ, {a.shape} x {b.shape}")
    ad, bd = a.data, b.data

    def bw(g):
        return (g @ bd.T if a.requires_grad else None, ad.T @ g if b.requires_grad else None)

    return Tensor._result(ad @ bd, "matmul", (a, b), bw)


def linear(x: Tensor, w: Tensor, b: Tensor | None = None) -> Tensor:
    """``x @ w.T + b`` with ``w`` stored as ``(out, in)``."""
    _require_2d(x, "linear")
    _require_2d(w, "linear")
    if x.shape[1] != w.shape[1]:
        raise ShapeError(f"linear: input width {x.shape[1]} does not match weight {w.shape}")
    xd, wd = x.data, w.data
    out = xd @ wd.T
    if b is None:

        def bw(g):
            return (g @ wd if x.requires_grad else None, g.T @ xd if w.requires_grad else None)

        return Tensor._result(out, "linear", (x, w), bw)
    if b.shape != (1, w.shape[0]):
        raise ShapeError(f"linear: bias shape {b.shape} does not match weight {w.shape}")
    out = out + b.data

    def bwb(g):
        return (
            g @ wd if x.requires_grad else None,
            g.T @ xd if w.requires_grad else None,
            g.sum(axis=0, keepdims=True) if b.requires_grad else None,
        )

    return Tensor._result(out, "linear", (x, w, b), bwb)


def add(a: Tensor, b: Tensor) -> Tensor:
    _broadcast_pair(a, b, "add")

    def bw(g):
        return (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape))

    return Tensor._result(a.data + b.data, "add", (a, b), bw)


def sub(a: Tensor, b: Tensor) -> Tensor:
    _broadcast_pair(a, b, "sub")

    def bw(g):
        return (_unbroadcast(g, a.shape), -_unbroadcast(g, b.shape))

    return Tensor._result(a.data - b.data, "sub", (a, b), bw)


def mul(a: Tensor, b: Tensor) -> Tensor:
    _broadcast_pair(a, b, "mul")
    ad, bd = a.data, b.data

    def bw(g):
        return (
            _unbroadcast(g * bd, a.shape) if a.requires_grad else None,
            _unbroadcast(g * ad, b.shape) if b.requires_grad else None,
        )

    return Tensor._result(ad * bd, "mul", (a, b), bw)


def scale(a: Tensor, c: float) -> Tensor:
    return Tensor._result(a.data * c, "scale", (a,), lambda g: (g * c,))


def shift(a: Tensor, c: float) -> Tensor:
    return Tensor._result(a.data + c, "shift", (a,), lambda g: (g,))


def neg(a: Tensor) -> Tensor:
    return Tensor._result(-a.data, "neg", (a,), lambda g: (-g,))


# ---------------------------------------------------------------------------
# unary elementwise ops
# ---------------------------------------------------------------------------


def abs(a: Tensor) -> Tensor:  # noqa: A001 - mirrors the op name
    s = np.sign(a.data)
    return Tensor._result(np.abs(a.data), "abs", (a,), lambda g: (g * s,))


def relu(a: Tensor) -> Tensor:
    mask = (a.data > 0).astype(np.float64)
    return Tensor._result(a.data * mask, "relu", (a,), lambda g: (g * mask,))


def relu_mask(a: Tensor) -> Tensor:
    """Step function of ``a``; a constant (zero derivative almost everywhere)."""
    return Tensor((a.data > 0).astype(np.float64))


def tanh(a: Tensor) -> Tensor:
    t = np.tanh(a.data)
    return Tensor._result(t, "tanh", (a,), lambda g: (g * (1.0 - t * t),))


def sigmoid(a: Tensor) -> Tensor:
    s = K.sigmoid(a.data)
    return Tensor._result(s, "sigmoid", (a,), lambda g: (g * s * (1.0 - s),))


def softplus(a: Tensor) -> Tensor:
    ad = a.data
    return Tensor._result(K.softplus(ad), "softplus", (a,), lambda g: (g * K.sigmoid(ad),))


def exp(a: Tensor) -> Tensor:
    with np.errstate(over="ignore"):
        e = np.exp(a.data)
    return Tensor._result(e, "exp", (a,), lambda g: (g * e,))


def log(a: Tensor) -> Tensor:
    ad = a.data
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.log(ad)
    return Tensor._result(out, "log", (a,), lambda g: (g / ad,))


# ---------------------------------------------------------------------------
# row-wise ops and reductions
# ---------------------------------------------------------------------------


def log_sum_exp_rows(a: Tensor) -> Tensor:
    """Stable ``log(sum(exp(a), axis=1))`` returned as ``(m, 1)``."""
    _require_2d(a, "log_sum_exp_rows")
    if a.shape[1] < 1:
        raise ShapeError("log_sum_exp_rows needs at least one column")
    out = K.logsumexp_rows(a.data)
    ad = a.data

    def bw(g):
        return (g * K.softmax_rows(ad),)

    return Tensor._result(out, "log_sum_exp_rows", (a,), bw)


def softmax_rows(a: Tensor) -> Tensor:
    _require_2d(a, "softmax_rows")
    s = K.softmax_rows(a.data)

    def bw(g):
        return (s * (g - (g * s).sum(axis=1, keepdims=True)),)

    return Tensor._result(s, "softmax_rows", (a,), bw)


def sum(a: Tensor) -> Tensor:  # noqa: A001
    shape = a.shape
    return Tensor._result(np.asarray(a.data.sum()), "sum", (a,), lambda g: (np.full(shape, float(g)),))


def mean(a: Tensor) -> Tensor:
    shape, n = a.shape, a.data.size
    return Tensor._result(np.asarray(a.data.mean()), "mean", (a,), lambda g: (np.full(shape, float(g) / n),))


def sum_rows(a: Tensor) -> Tensor:
    """Sum over columns, keeping ``(m, 1)``."""
    _require_2d(a, "sum_rows")
    shape = a.shape
    return Tensor._result(a.data.sum(axis=1, keepdims=True), "sum_rows", (a,), lambda g: (np.broadcast_to(g, shape).copy(),))


def column(a: Tensor, j: int) -> Tensor:
    """Column ``j`` of a 2-D tensor as ``(m, 1)``."""
    _require_2d(a, "column")
    shape = a.shape

    def bw(g):
        out = np.zeros(shape)
        out[:, j : j + 1] = g
        return (out,)

    return Tensor._result(a.data[:, j : j + 1].copy(), "column", (a,), bw)


# ---------------------------------------------------------------------------
# reverse pass
# ---------------------------------------------------------------------------


def _collect(root: Tensor) -> list[Tensor]:
    seen: set[int] = set()
    nodes: list[Tensor] = []
    stack = [root]
    while stack:
        t = stack.pop()
        if t._id in seen:
            continue
        seen.add(t._id)
        nodes.append(t)
        stack.extend(t._parents)
    nodes.sort(key=lambda t: t._id, reverse=True)
    return nodes


def backward(root: Tensor) -> None:
    """Populate ``.grad`` on every leaf that requires grad.

    The graph is released afterwards; a second call on the same graph
    raises :class:`BackwardError`.
    """
    if root.data.size != 1:
        raise BackwardError(f"backward needs a scalar root, got shape {root.shape}")
    if root._consumed:
        raise BackwardError("graph already consumed by backward(); run a fresh forward pass")
    if not root.requires_grad:
        return
    nodes = _collect(root)
    for t in nodes:
        if t._consumed:
            raise BackwardError("graph shares nodes with a consumed graph; run a fresh forward pass")
    grads: dict[int, np.ndarray] = {root._id: np.ones_like(root.data)}
    for t in nodes:
        g = grads.pop(t._id, None)
        if t._backward is None:
            if t.requires_grad and g is not None:
                g = np.asarray(g, dtype=np.float64).reshape(t.shape)
                t.grad = g.copy() if t.grad is None else t.grad + g
            continue
        if g is not None:
            for p, pg in zip(t._parents, t._backward(g)):
                if pg is None or not p.requires_grad:
                    continue
                if p._id in grads:
                    grads[p._id] = grads[p._id] + pg
                else:
                    grads[p._id] = pg
        t._consumed = True
        t._parents = ()
        t._backward = None
    root._consumed = True


def jacobian_rows(f: Callable[[Tensor], Tensor], x, params: Iterable[Tensor] = ()) -> np.ndarray:
    """Jacobian of ``f`` at a single row ``x`` (``1 x d``), shape ``(C, d)``.

    One forward and one backward pass per output coordinate. ``params`` are
    held constant so their gradients are left untouched.
    """
    xd = as_tensor(x).data
    if xd.ndim != 2 or xd.shape[0] != 1:
        raise ShapeError(f"jacobian_rows expects a 1 x d input, got {xd.shape}")
    rows = []
    with frozen(params):
        probe = f(Tensor(xd))
        if probe.data.ndim != 2 or probe.shape[0] != 1:
            raise ShapeError(f"jacobian_rows expects a 1 x C output, got {probe.shape}")
        for j in range(probe.shape[1]):
            xt = Tensor(xd.copy(), requires_grad=True)
            out = f(xt)
            backward(sum(column(out, j)))
            rows.append(xt.grad[0] if xt.grad is not None else np.zeros(xd.shape[1]))
    return np.vstack(rows)
