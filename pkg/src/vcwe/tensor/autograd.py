"""Reverse-mode automatic differentiation over dense numpy arrays.

A Tensor wraps an ndarray together with the op record that produced it
(parent tensors plus a vector-Jacobian closure). Graphs are built per
batch (define-by-run) and torn down with the Python objects; backward()
walks the recorded nodes once in reverse topological order.

Reductions and matrix products delegate to numpy, whose evaluation order
is fixed for fixed shapes, so identical inputs give bit-identical outputs.
"""

from __future__ import annotations

import numpy as np

from ..errors import NumericError, ShapeError

_DEBUG_CHECKS = False


def set_debug_checks(enabled: bool) -> None:
    """Toggle per-op finiteness checks (NaN/Inf raise NumericError)."""
    global _DEBUG_CHECKS
    _DEBUG_CHECKS = bool(enabled)


def _as_array(value) -> np.ndarray:
    arr = np.asarray(value)
    if not np.issubdtype(arr.dtype, np.floating):
        arr = arr.astype(np.float64)
    return arr


class Tensor:
    """A value node in the differentiation graph."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_vjp")

    def __init__(self, data, requires_grad: bool = False):
        self.data = _as_array(data)
        self.grad = None
        self.requires_grad = requires_grad
        self._parents: tuple[Tensor, ...] = ()
        self._vjp = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def item(self) -> float:
        return float(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def backward(self) -> None:
        backward(self)

    # -- operator sugar -------------------------------------------------
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(_lift(other), self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(self, other)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def sum(self, axis=None):
        return tensor_sum(self, axis=axis)

    def mean(self, axis=None):
        return tensor_mean(self, axis=axis)

    def reshape(self, *shape):
        return reshape(self, shape if len(shape) != 1 else shape[0])

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"


def _lift(value) -> Tensor:
    return value if isinstance(value, Tensor) else Tensor(value)


def _make(data: np.ndarray, parents: tuple[Tensor, ...], vjp, op: str) -> Tensor:
    if _DEBUG_CHECKS and not np.all(np.isfinite(data)):
        raise NumericError(f"non-finite values produced by op '{op}'")
    out = Tensor(data)
    if any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = parents
        out._vjp = vjp
    return out


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Reduce a broadcasted gradient back to the operand's shape."""
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


def backward(loss: Tensor, grad_map: dict | None = None) -> None:
    """Accumulate d(loss)/d(node) for every reachable node requiring grad.

    With grad_map given, gradients go into ``grad_map[id(tensor)]`` instead
    of the ``.grad`` attributes; this keeps concurrent backward passes over
    shared parameters from racing on the attribute.
    """
    if loss.data.size != 1:
        raise ShapeError(f"backward requires a scalar loss, got shape {loss.data.shape}")

    order: list[Tensor] = []
    seen: set[int] = set()
    work: list[tuple[Tensor, bool]] = [(loss, False)]
    while work:
        node, expanded = work.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        work.append((node, True))
        for parent in node._parents:
            if parent.requires_grad and id(parent) not in seen:
                work.append((parent, False))

    local: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    for node in reversed(order):
        grad = local.get(id(node))
        if grad is None:
            continue
        if grad_map is not None:
            if node.requires_grad and node._vjp is None:  # leaf
                acc = grad_map.get(id(node))
                grad_map[id(node)] = grad if acc is None else acc + grad
        else:
            node.grad = grad if node.grad is None else node.grad + grad
        if node._vjp is None:
            continue
        for parent, pgrad in zip(node._parents, node._vjp(grad)):
            if pgrad is None or not parent.requires_grad:
                continue
            acc = local.get(id(parent))
            local[id(parent)] = pgrad if acc is None else acc + pgrad


# -- elementwise and structural ops -------------------------------------

def add(a, b) -> Tensor:
    a, b = _lift(a), _lift(b)
    data = a.data + b.data

    def vjp(g):
        return _unbroadcast(g, a.data.shape), _unbroadcast(g, b.data.shape)

    return _make(data, (a, b), vjp, "add")


def sub(a, b) -> Tensor:
    a, b = _lift(a), _lift(b)
    data = a.data - b.data

    def vjp(g):
        return _unbroadcast(g, a.data.shape), _unbroadcast(-g, b.data.shape)

    return _make(data, (a, b), vjp, "sub")


def mul(a, b) -> Tensor:
    a, b = _lift(a), _lift(b)
    data = a.data * b.data

    def vjp(g):
        return _unbroadcast(g * b.data, a.data.shape), _unbroadcast(g * a.data, b.data.shape)

    return _make(data, (a, b), vjp, "mul")


def neg(a) -> Tensor:
    a = _lift(a)
    return _make(-a.data, (a,), lambda g: (-g,), "neg")


def tensor_sum(a: Tensor, axis=None) -> Tensor:
    data = a.data.sum(axis=axis)

    def vjp(g):
        if axis is None:
            return (np.broadcast_to(g, a.data.shape).copy(),)
        expanded = np.expand_dims(g, axis)
        return (np.broadcast_to(expanded, a.data.shape).copy(),)

    return _make(data, (a,), vjp, "sum")


def tensor_mean(a: Tensor, axis=None) -> Tensor:
    count = a.data.size if axis is None else a.data.shape[axis]
    return mul(tensor_sum(a, axis=axis), 1.0 / count)


def reshape(a: Tensor, shape) -> Tensor:
    data = a.data.reshape(shape)

    def vjp(g):
        return (g.reshape(a.data.shape),)

    return _make(data, (a,), vjp, "reshape")


def transpose(a: Tensor) -> Tensor:
    if a.data.ndim != 2:
        raise ShapeError(f"transpose expects a matrix, got shape {a.data.shape}")
    return _make(a.data.T.copy(), (a,), lambda g: (g.T,), "transpose")


def concat(tensors, axis: int = 0) -> Tensor:
    tensors = [_lift(t) for t in tensors]
    data = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.data.shape[axis] for t in tensors]
    bounds = np.cumsum(sizes)[:-1]

    def vjp(g):
        return tuple(np.split(g, bounds, axis=axis))

    return _make(data, tuple(tensors), vjp, "concat")


def stack_rows(tensors) -> Tensor:
    """Stack equal-shape tensors along a new leading axis."""
    tensors = [_lift(t) for t in tensors]
    data = np.stack([t.data for t in tensors])

    def vjp(g):
        return tuple(g[i] for i in range(len(tensors)))

    return _make(data, tuple(tensors), vjp, "stack_rows")


def gather(a: Tensor, indices) -> Tensor:
    """Select rows along axis 0; backward scatter-adds into the source."""
    idx = np.asarray(indices, dtype=np.intp)
    data = a.data[idx]

    def vjp(g):
        out = np.zeros_like(a.data)
        np.add.at(out, idx, g)
        return (out,)

    return _make(data, (a,), vjp, "gather")


def take_row(a: Tensor, index: int) -> Tensor:
    data = a.data[index]

    def vjp(g):
        out = np.zeros_like(a.data)
        out[index] = g
        return (out,)

    return _make(data, (a,), vjp, "take_row")


def narrow(a: Tensor, axis: int, start: int, length: int) -> Tensor:
    sel = [slice(None)] * a.data.ndim
    sel[axis] = slice(start, start + length)
    sel = tuple(sel)
    data = a.data[sel].copy()

    def vjp(g):
        out = np.zeros_like(a.data)
        out[sel] = g
        return (out,)

    return _make(data, (a,), vjp, "narrow")


# -- linear algebra ------------------------------------------------------

def matmul(a, b) -> Tensor:
    a, b = _lift(a), _lift(b)
    if a.data.ndim != 2 or b.data.ndim != 2:
        raise ShapeError(f"matmul expects matrices, got {a.data.shape} @ {b.data.shape}")
    if a.data.shape[1] != b.data.shape[0]:
        raise ShapeError(f"matmul inner dims disagree: {a.data.shape} @ {b.data.shape}")
    data = a.data @ b.data

    def vjp(g):
        return g @ b.data.T, a.data.T @ g

    return _make(data, (a, b), vjp, "matmul")


def matvec(a, x) -> Tensor:
    a, x = _lift(a), _lift(x)
    if a.data.ndim != 2 or x.data.ndim != 1 or a.data.shape[1] != x.data.shape[0]:
        raise ShapeError(f"matvec shape mismatch: {a.data.shape} . {x.data.shape}")
    data = a.data @ x.data

    def vjp(g):
        return np.outer(g, x.data), a.data.T @ g

    return _make(data, (a, x), vjp, "matvec")


def dot(u, v) -> Tensor:
    u, v = _lift(u), _lift(v)
    if u.data.shape != v.data.shape or u.data.ndim != 1:
        raise ShapeError(f"dot expects equal-length vectors, got {u.data.shape} and {v.data.shape}")
    data = np.dot(u.data, v.data)

    def vjp(g):
        return g * v.data, g * u.data

    return _make(data, (u, v), vjp, "dot")


# -- nonlinearities ------------------------------------------------------

def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def sigmoid(a) -> Tensor:
    a = _lift(a)
    y = _sigmoid(a.data)

    def vjp(g):
        return (g * y * (1.0 - y),)

    return _make(y, (a,), vjp, "sigmoid")


def tanh(a) -> Tensor:
    a = _lift(a)
    y = np.tanh(a.data)

    def vjp(g):
        return (g * (1.0 - y * y),)

    return _make(y, (a,), vjp, "tanh")


def log_sigmoid(a) -> Tensor:
    """log(sigmoid(x)) computed as min(x,0) - log1p(exp(-|x|))."""
    a = _lift(a)
    x = a.data
    y = np.minimum(x, 0.0) - np.log1p(np.exp(-np.abs(x)))
    sig = _sigmoid(x)

    def vjp(g):
        return (g * (1.0 - sig),)

    return _make(y, (a,), vjp, "log_sigmoid")


def softmax(a) -> Tensor:
    """Softmax over the last axis, with max subtraction for stability."""
    a = _lift(a)
    shifted = a.data - a.data.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=-1, keepdims=True)

    def vjp(g):
        inner = (g * y).sum(axis=-1, keepdims=True)
        return (y * (g - inner),)

    return _make(y, (a,), vjp, "softmax")
