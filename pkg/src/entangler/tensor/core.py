"""Dense tensors with reverse-mode differentiation.

A :class:`Tensor` wraps a numpy array. Operations on tensors that require
gradients record a closure which, given the gradient of the output,
accumulates gradients into the inputs. :meth:`Tensor.backward` walks the
recorded graph in reverse topological order.
"""

from __future__ import annotations

import contextlib
from typing import Callable, Iterable, Sequence

import numpy as np

from ..errors import UsageError
from . import _backend

_default_dtype = np.float32
_grad_enabled = True


def get_default_dtype():
    return _default_dtype


def set_default_dtype(dtype) -> None:
    global _default_dtype
    dtype = np.dtype(dtype).type
    if dtype not in (np.float32, np.float64):
        raise ValueError("default dtype must be float32 or float64")
    _default_dtype = dtype


@contextlib.contextmanager
def precision(dtype):
    """Temporarily change the dtype new floating tensors are created with."""
    previous = _default_dtype
    set_default_dtype(dtype)
    try:
        yield
    finally:
        set_default_dtype(previous)


@contextlib.contextmanager
def no_grad():
    global _grad_enabled
    previous = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = previous


def _as_array(data, dtype=None) -> np.ndarray:
    arr = np.asarray(data)
    if dtype is not None:
        return arr.astype(dtype, copy=False)
    if arr.dtype.kind in "fc" or arr.dtype.kind in "iub" and arr.ndim == 0:
        return arr.astype(_default_dtype, copy=False)
    return arr


class Tensor:
    __array_priority__ = 100

    def __init__(self, data, requires_grad: bool = False, dtype=None, name: str | None = None):
        if isinstance(data, Tensor):
            data = data.data
        self.data: np.ndarray = _as_array(data, dtype)
        self.requires_grad = bool(requires_grad)
        self.grad: np.ndarray | None = None
        self.name = name
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable[[np.ndarray], None] | None = None

    # -- basic properties ------------------------------------------------
    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def size(self) -> int:
        return self.data.size

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return self.data.item()

    def detach(self) -> Tensor:
        return Tensor(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype}{flag})"

    def __len__(self) -> int:
        return len(self.data)

    # -- autograd --------------------------------------------------------
    def _accumulate(self, g: np.ndarray) -> None:
        if g.shape != self.data.shape:
            raise AssertionError(f"gradient shape {g.shape} != tensor shape {self.data.shape}")
        if self.grad is None:
            self.grad = np.array(g, dtype=self.data.dtype, copy=True)
        else:
            self.grad = self.grad + g

    def _topo(self) -> list[Tensor]:
        order: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
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
                if id(parent) not in seen:
                    stack.append((parent, False))
        return order

    def backward(self, grad: np.ndarray | None = None) -> None:
        """Populate ``.grad`` on every leaf reachable from this scalar.

        Leaf gradients accumulate across calls; call ``zero_grad`` on the
        parameters between steps.
        """
        if grad is None:
            if self.data.size != 1 or self.data.ndim != 0:
                raise UsageError(f"backward() needs a scalar root, got shape {self.shape}")
            grad = np.ones((), dtype=self.data.dtype)
        order = self._topo()
        for node in order:
            if node._backward is not None:
                node.grad = None
        self._accumulate(np.asarray(grad, dtype=self.data.dtype))
        for node in reversed(order):
            if node._backward is None or node.grad is None:
                continue
            node._backward(node.grad)
            # interior gradients are not needed once propagated
            node.grad = None

    # -- operator sugar --------------------------------------------------
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, index):
        return getitem(self, index)

    def sum(self, axis=None, keepdims=False):
        return sum_(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean(self, axis, keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, *axes):
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        return transpose(self, axes or None)

    def swapaxes(self, a: int, b: int):
        axes = list(range(self.ndim))
        axes[a], axes[b] = axes[b], axes[a]
        return transpose(self, tuple(axes))

    def exp(self):
        return exp(self)

    def log(self):
        return log(self)

    def tanh(self):
        return tanh(self)


def tensor(data, requires_grad: bool = False, dtype=None) -> Tensor:
    return Tensor(data, requires_grad=requires_grad, dtype=dtype)


def _wrap(x, like: np.ndarray | None = None) -> Tensor:
    if isinstance(x, Tensor):
        return x
    dtype = like.dtype if like is not None and like.dtype.kind == "f" else None
    return Tensor(x, dtype=dtype)


def _result(data: np.ndarray, parents: Sequence[Tensor], backward: Callable[[np.ndarray], None]) -> Tensor:
    data = np.asarray(data)
    out = Tensor(data, dtype=data.dtype)
    if _grad_enabled and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward
    return out


def _needs(t: Tensor) -> bool:
    return t.requires_grad


def unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum ``g`` down to ``shape`` (inverse of numpy broadcasting)."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


# -- elementwise binary ----------------------------------------------------
def add(a, b) -> Tensor:
    a = _wrap(a, getattr(b, "data", None))
    b = _wrap(b, a.data)

    def backward(g):
        if _needs(a):
            a._accumulate(unbroadcast(g, a.shape))
        if _needs(b):
            b._accumulate(unbroadcast(g, b.shape))

    return _result(a.data + b.data, (a, b), backward)


def sub(a, b) -> Tensor:
    a = _wrap(a, getattr(b, "data", None))
    b = _wrap(b, a.data)

    def backward(g):
        if _needs(a):
            a._accumulate(unbroadcast(g, a.shape))
        if _needs(b):
            b._accumulate(unbroadcast(-g, b.shape))

    return _result(a.data - b.data, (a, b), backward)


def mul(a, b) -> Tensor:
    a = _wrap(a, getattr(b, "data", None))
    b = _wrap(b, a.data)

    def backward(g):
        if _needs(a):
            a._accumulate(unbroadcast(g * b.data, a.shape))
        if _needs(b):
            b._accumulate(unbroadcast(g * a.data, b.shape))

    return _result(a.data * b.data, (a, b), backward)


def div(a, b) -> Tensor:
    a = _wrap(a, getattr(b, "data", None))
    b = _wrap(b, a.data)
    out = a.data / b.data

    def backward(g):
        if _needs(a):
            a._accumulate(unbroadcast(g / b.data, a.shape))
        if _needs(b):
            b._accumulate(unbroadcast(-g * out / b.data, b.shape))

    return _result(out, (a, b), backward)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Batched matrix product over the last two axes (both inputs ≥ 2-D)."""
    a = _wrap(a)
    b = _wrap(b)
    if a.ndim < 2 or b.ndim < 2:
        raise UsageError("matmul expects operands with at least two dimensions")

    def backward(g):
        if _needs(a):
            a._accumulate(unbroadcast(g @ np.swapaxes(b.data, -1, -2), a.shape))
        if _needs(b):
            b._accumulate(unbroadcast(np.swapaxes(a.data, -1, -2) @ g, b.shape))

    return _result(a.data @ b.data, (a, b), backward)


def where(cond, a, b) -> Tensor:
    cond = np.asarray(cond, dtype=bool)
    a = _wrap(a, getattr(b, "data", None))
    b = _wrap(b, a.data)

    def backward(g):
        if _needs(a):
            a._accumulate(unbroadcast(np.where(cond, g, 0), a.shape))
        if _needs(b):
            b._accumulate(unbroadcast(np.where(cond, 0, g), b.shape))

    return _result(np.where(cond, a.data, b.data), (a, b), backward)


# -- elementwise unary -----------------------------------------------------
def exp(x: Tensor) -> Tensor:
    out = np.exp(x.data)
    return _result(out, (x,), lambda g: x._accumulate(g * out))


def log(x: Tensor) -> Tensor:
    return _result(np.log(x.data), (x,), lambda g: x._accumulate(g / x.data))


def tanh(x: Tensor) -> Tensor:
    out = np.tanh(x.data)
    return _result(out, (x,), lambda g: x._accumulate(g * (1.0 - out * out)))


def relu(x: Tensor) -> Tensor:
    return _result(np.maximum(x.data, 0), (x,), lambda g: x._accumulate(g * (x.data > 0)))


_GELU_C = np.sqrt(2.0 / np.pi)


def gelu(x: Tensor) -> Tensor:
    """GELU, tanh approximation (smooth everywhere, so finite differences agree)."""
    v = x.data
    inner = _GELU_C * (v + 0.044715 * v**3)
    t = np.tanh(inner)
    out = 0.5 * v * (1.0 + t)

    def backward(g):
        dinner = _GELU_C * (1.0 + 3 * 0.044715 * v * v)
        x._accumulate(g * (0.5 * (1.0 + t) + 0.5 * v * (1.0 - t * t) * dinner))

    return _result(out.astype(v.dtype, copy=False), (x,), backward)


# -- reductions and shape ops ----------------------------------------------
def sum_(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    out = x.data.sum(axis=axis, keepdims=keepdims)

    def backward(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        x._accumulate(np.broadcast_to(g, x.shape))

    return _result(np.asarray(out), (x,), backward)


def mean(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    if axis is None:
        count = x.size
    else:
        axes = (axis,) if isinstance(axis, int) else axis
        count = int(np.prod([x.shape[a] for a in axes]))
    return sum_(x, axis, keepdims) * (1.0 / count)


def reshape(x: Tensor, shape) -> Tensor:
    return _result(x.data.reshape(shape), (x,), lambda g: x._accumulate(g.reshape(x.shape)))


def transpose(x: Tensor, axes=None) -> Tensor:
    if axes is None:
        axes = tuple(reversed(range(x.ndim)))
    inverse = tuple(np.argsort(axes))
    return _result(np.transpose(x.data, axes), (x,), lambda g: x._accumulate(np.transpose(g, inverse)))


def getitem(x: Tensor, index) -> Tensor:
    if isinstance(index, Tensor):
        index = index.data

    def backward(g):
        full = np.zeros_like(x.data)
        np.add.at(full, index, g)
        x._accumulate(full)

    return _result(np.asarray(x.data[index]), (x,), backward)


def embedding(weight: Tensor, ids) -> Tensor:
    """Row lookup ``weight[ids]`` with scatter-add backward."""
    ids = np.asarray(ids)

    def backward(g):
        full = np.zeros_like(weight.data)
        np.add.at(full, ids.reshape(-1), g.reshape(-1, weight.shape[-1]))
        weight._accumulate(full)

    return _result(weight.data[ids], (weight,), backward)


def concat(tensors: Iterable[Tensor], axis: int = 0) -> Tensor:
    tensors = [_wrap(t) for t in tensors]
    sizes = [t.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def backward(g):
        for t, part in zip(tensors, np.split(g, splits, axis=axis)):
            if _needs(t):
                t._accumulate(part)

    return _result(np.concatenate([t.data for t in tensors], axis=axis), tensors, backward)


def stack(tensors: Iterable[Tensor], axis: int = 0) -> Tensor:
    tensors = [_wrap(t) for t in tensors]
    return concat([reshape(t, t.shape[:axis] + (1,) + t.shape[axis:]) for t in tensors], axis=axis)


# -- kernel-backed ops -----------------------------------------------------
def _rows(arr: np.ndarray) -> np.ndarray:
    return np.ascontiguousarray(arr.reshape(-1, arr.shape[-1]))


def softmax(x: Tensor, axis: int = -1, mask=None) -> Tensor:
    """Numerically stable softmax.

    ``mask`` (broadcastable to ``x``) marks admissible entries; excluded
    entries get exactly zero probability and a row with no admissible
    entry is all zeros.
    """
    moved = axis not in (-1, x.ndim - 1)
    data = np.moveaxis(x.data, axis, -1) if moved else x.data
    m = None
    if mask is not None:
        m = np.broadcast_to(np.asarray(mask, dtype=bool), x.shape)
        if moved:
            m = np.moveaxis(m, axis, -1)
        m = _rows(m).view(np.uint8)
    y = _backend.kernels.softmax_forward(_rows(data), m).reshape(data.shape)

    def backward(g):
        gm = np.moveaxis(g, axis, -1) if moved else g
        gx = _backend.kernels.softmax_backward(_rows(y), _rows(gm)).reshape(data.shape)
        x._accumulate(np.moveaxis(gx, -1, axis) if moved else gx)

    return _result(np.moveaxis(y, -1, axis) if moved else y, (x,), backward)


def log_softmax(x: Tensor) -> Tensor:
    """Log-softmax over the last axis."""
    data = x.data
    shifted = data - data.max(axis=-1, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=-1, keepdims=True))
    out = shifted - lse
    probs = np.exp(out)

    def backward(g):
        x._accumulate(g - probs * g.sum(axis=-1, keepdims=True))

    return _result(out, (x,), backward)


def layer_norm(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = 1e-5) -> Tensor:
    shape = x.shape
    y, xhat, rstd = _backend.kernels.layernorm_forward(_rows(x.data), gamma.data, beta.data, eps)

    def backward(g):
        gx, gg, gb = _backend.kernels.layernorm_backward(_rows(g), xhat, rstd, gamma.data)
        if _needs(x):
            x._accumulate(gx.reshape(shape))
        if _needs(gamma):
            gamma._accumulate(gg)
        if _needs(beta):
            beta._accumulate(gb)

    return _result(y.reshape(shape), (x, gamma, beta), backward)


def cross_entropy(logits: Tensor, targets, weights=None, mask=None) -> Tensor:
    """Mean negative log-likelihood of integer ``targets`` under row-softmax.

    ``logits`` is (N, C). ``weights`` (N,) selects/weights rows; the mean is
    taken over rows with nonzero weight. With no selected rows the loss is
    0 with an all-zero gradient. ``mask`` (N, C) removes classes from the
    softmax support.
    """
    if logits.ndim != 2:
        raise UsageError("cross_entropy expects (N, C) logits")
    n = logits.shape[0]
    targets = np.ascontiguousarray(np.asarray(targets, dtype=np.int64).reshape(n))
    if weights is None:
        weights = np.ones(n, dtype=logits.dtype)
    weights = np.asarray(weights, dtype=logits.dtype).reshape(n)
    selected = weights != 0
    count = int(selected.sum())
    safe_targets = np.where(selected, targets, 0)
    m = None
    if mask is not None:
        mb = np.array(np.broadcast_to(np.asarray(mask, dtype=bool), logits.shape))
        # unselected rows must still have a finite normaliser
        mb[~selected] = True
        m = np.ascontiguousarray(mb).view(np.uint8)
    if count == 0:
        zero = np.zeros((), dtype=logits.dtype)
        return _result(zero, (logits,), lambda g: logits._accumulate(np.zeros_like(logits.data)))
    losses, probs = _backend.kernels.xent_forward(_rows(logits.data), safe_targets, m)
    scale = (weights / count).astype(logits.dtype)
    value = np.asarray((losses[selected] * scale[selected]).sum(), dtype=logits.dtype)

    def backward(g):
        row_scale = np.ascontiguousarray(scale * g)
        logits._accumulate(_backend.kernels.xent_backward(probs, safe_targets, row_scale))

    return _result(value, (logits,), backward)


def dropout(x: Tensor, rate: float, rng: np.random.Generator | None, training: bool) -> Tensor:
    if not training or rate == 0.0:
        return x
    if rng is None:
        raise UsageError("dropout in training mode needs a random generator")
    keep = (rng.random(x.shape) >= rate).astype(x.dtype) / (1.0 - rate)
    return mul(x, Tensor(keep))
