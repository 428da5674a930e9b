"""Reverse-mode automatic differentiation over numpy arrays.

Every tensor produced by an operation keeps references to its parents and a
closure that pushes the output adjoint back to them.  ``backward`` walks the
graph once in reverse topological order.  Only first-order gradients are
supported.

Precision is a run-wide switch (``set_precision``): float32 for training,
float64 for gradient checks.
"""

from __future__ import annotations

import contextlib
from typing import Callable, Iterable, Sequence

import numpy as np

from . import kernels

_DTYPE = np.float32
_GRAD_ENABLED = True


class ShapeError(ValueError):
    """Operand shapes are incompatible for an operation."""

    def __init__(self, op: str, *shapes):
        self.op = op
        self.shapes = shapes
        desc = " vs ".join(str(tuple(s)) for s in shapes)
        super().__init__(f"{op}: incompatible shapes {desc}")


def set_precision(bits: int) -> None:
    global _DTYPE
    if bits == 32:
        _DTYPE = np.float32
    elif bits == 64:
        _DTYPE = np.float64
    else:
        raise ValueError(f"precision must be 32 or 64, got {bits}")


def get_dtype():
    return _DTYPE


@contextlib.contextmanager
def precision(bits: int):
    """Temporarily switch the default floating point precision."""
    old = _DTYPE
    set_precision(bits)
    try:
        yield
    finally:
        globals()["_DTYPE"] = old


@contextlib.contextmanager
def no_grad():
    """Evaluate without recording the graph (inference)."""
    global _GRAD_ENABLED
    old = _GRAD_ENABLED
    _GRAD_ENABLED = False
    try:
        yield
    finally:
        _GRAD_ENABLED = old


class Tensor:
    """Dense array with an optional gradient buffer."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "name")
    __array_priority__ = 100

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        if isinstance(data, Tensor):
            data = data.data
        arr = np.asarray(data)
        if arr.dtype != _DTYPE and arr.dtype.kind in "fiub":
            arr = arr.astype(_DTYPE)
        self.data = arr
        self.grad = None
        self.requires_grad = requires_grad
        self._parents: tuple = ()
        self._backward: Callable | None = None
        self.name = name

    # ---- introspection -------------------------------------------------
    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data)

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        tag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}{tag})"

    def __len__(self) -> int:
        return len(self.data)

    # ---- graph ---------------------------------------------------------
    def _accumulate(self, g: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.array(g, dtype=self.data.dtype, copy=True)
        else:
            self.grad += g

    def backward(self, grad: np.ndarray | None = None) -> None:
        """Populate ``.grad`` on every antecedent that requires it."""
        if grad is None:
            if self.data.size != 1:
                raise ValueError(f"backward() needs a scalar loss, got shape {self.shape}")
            grad = np.ones_like(self.data)
        order = _topological_order(self)
        grads: dict[int, np.ndarray] = {id(self): np.asarray(grad, dtype=self.data.dtype)}
        for node in reversed(order):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node._backward is None:
                node._accumulate(g)
                continue
            node.grad = g
            for parent, pg in zip(node._parents, node._backward(g)):
                if pg is None or not parent.requires_grad:
                    continue
                key = id(parent)
                grads[key] = grads[key] + pg if key in grads else pg

    # ---- operators -----------------------------------------------------
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return neg(self)

    def __pow__(self, p: float):
        return power(self, p)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, idx):
        return getitem(self, idx)

    def sum(self, axis=None, keepdims=False):
        return tsum(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        return tmean(self, axis, keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    @property
    def T(self):
        return transpose(self)


def _topological_order(root: Tensor) -> list[Tensor]:
    order: list[Tensor] = []
    seen: set[int] = set()
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
        for p in node._parents:
            if id(p) not in seen and p.requires_grad:
                stack.append((p, False))
    return order


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _make(data: np.ndarray, parents: Sequence[Tensor], backward: Callable) -> Tensor:
    out = Tensor(data)
    if _GRAD_ENABLED and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward
    return out


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


def _check_broadcast(op: str, a: Tensor, b: Tensor) -> tuple:
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(op, a.shape, b.shape) from None


# ---- binary elementwise ------------------------------------------------

def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast("add", a, b)
    sa, sb = a.shape, b.shape
    return _make(a.data + b.data, (a, b),
                 lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb)))


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast("sub", a, b)
    sa, sb = a.shape, b.shape
    return _make(a.data - b.data, (a, b),
                 lambda g: (_unbroadcast(g, sa), _unbroadcast(-g, sb)))


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast("mul", a, b)
    ad, bd = a.data, b.data

    def bw(g):
        return (_unbroadcast(g * bd, ad.shape) if a.requires_grad else None,
                _unbroadcast(g * ad, bd.shape) if b.requires_grad else None)

    return _make(ad * bd, (a, b), bw)


def div(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast("div", a, b)
    ad, bd = a.data, b.data
    out = ad / bd

    def bw(g):
        return (_unbroadcast(g / bd, ad.shape) if a.requires_grad else None,
                _unbroadcast(-g * out / bd, bd.shape) if b.requires_grad else None)

    return _make(out, (a, b), bw)


def neg(a) -> Tensor:
    a = as_tensor(a)
    return _make(-a.data, (a,), lambda g: (-g,))


def power(a, p: float) -> Tensor:
    """Elementwise ``a ** p`` for a constant exponent."""
    a = as_tensor(a)
    ad = a.data
    return _make(ad ** p, (a,), lambda g: (g * p * ad ** (p - 1),))


# ---- unary elementwise -------------------------------------------------

def tanh(a) -> Tensor:
    a = as_tensor(a)
    out = np.tanh(a.data)
    return _make(out, (a,), lambda g: (g * (1.0 - out * out),))


def _sigmoid_np(x: np.ndarray) -> np.ndarray:
    # branch-free stable form
    e = np.exp(-np.abs(x))
    return np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e)).astype(x.dtype, copy=False)


def sigmoid(a) -> Tensor:
    a = as_tensor(a)
    out = _sigmoid_np(a.data)
    return _make(out, (a,), lambda g: (g * out * (1.0 - out),))


def softplus(a) -> Tensor:
    a = as_tensor(a)
    x = a.data
    out = np.logaddexp(0.0, x).astype(x.dtype, copy=False)
    return _make(out, (a,), lambda g: (g * _sigmoid_np(x),))


def exp(a) -> Tensor:
    a = as_tensor(a)
    out = np.exp(a.data)
    return _make(out, (a,), lambda g: (g * out,))


def log(a) -> Tensor:
    a = as_tensor(a)
    x = a.data
    return _make(np.log(x), (a,), lambda g: (g / x,))


def log1mexp(a) -> Tensor:
    """``log(1 - exp(a))`` for ``a < 0``, accurate near zero."""
    a = as_tensor(a)
    x = a.data
    with np.errstate(divide="ignore"):
        out = np.where(x > -0.6931, np.log(-np.expm1(x)), np.log1p(-np.exp(x)))

    def bw(g):
        with np.errstate(over="ignore"):
            return (g / -np.expm1(-x),)

    return _make(out.astype(x.dtype, copy=False), (a,), bw)


def clamp(a, lo: float | None = None, hi: float | None = None) -> Tensor:
    """Clip to ``[lo, hi]``; the subgradient is 0 at and beyond the bounds."""
    a = as_tensor(a)
    x = a.data
    out = x
    mask = np.ones_like(x, dtype=bool)
    if lo is not None:
        out = np.maximum(out, lo)
        mask &= x > lo
    if hi is not None:
        out = np.minimum(out, hi)
        mask &= x < hi
    return _make(np.asarray(out, dtype=x.dtype), (a,), lambda g: (g * mask,))


def maximum(a, c: float) -> Tensor:
    return clamp(a, lo=c)


def minimum(a, c: float) -> Tensor:
    return clamp(a, hi=c)


# ---- reductions and shape ----------------------------------------------

def tsum(a, axis=None, keepdims=False) -> Tensor:
    a = as_tensor(a)
    shape = a.shape

    def bw(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, shape),)

    return _make(np.asarray(a.data.sum(axis=axis, keepdims=keepdims)), (a,), bw)


def tmean(a, axis=None, keepdims=False) -> Tensor:
    a = as_tensor(a)
    n = a.data.size if axis is None else np.prod([a.shape[i] for i in np.atleast_1d(axis)])
    return tsum(a, axis, keepdims) * (1.0 / n)


def reshape(a, shape) -> Tensor:
    a = as_tensor(a)
    old = a.shape
    return _make(a.data.reshape(shape), (a,), lambda g: (g.reshape(old),))


def transpose(a, axes=None) -> Tensor:
    a = as_tensor(a)
    inv = None if axes is None else np.argsort(axes)
    return _make(np.transpose(a.data, axes), (a,), lambda g: (np.transpose(g, inv),))


def getitem(a, idx) -> Tensor:
    a = as_tensor(a)
    shape, dtype = a.shape, a.data.dtype

    parts = idx if isinstance(idx, tuple) else (idx,)
    basic = all(isinstance(i, (int, np.integer, slice)) or i is None or i is Ellipsis
                for i in parts)

    def bw(g):
        full = np.zeros(shape, dtype=dtype)
        if basic:
            full[idx] = g
        else:
            np.add.at(full, idx, g)
        return (full,)

    return _make(a.data[idx], (a,), bw)


def take_rows(table, ids) -> Tensor:
    """Gather rows of a 2-d table by integer ids of any shape (embedding lookup)."""
    table = as_tensor(table)
    ids = np.asarray(ids, dtype=np.int64)
    shape, dtype = table.shape, table.data.dtype

    def bw(g):
        full = np.zeros(shape, dtype=dtype)
        np.add.at(full, ids.reshape(-1), g.reshape(-1, shape[1]))
        return (full,)

    return _make(table.data[ids], (table,), bw)


def concat(tensors: Sequence, axis: int = -1) -> Tensor:
    ts = [as_tensor(t) for t in tensors]
    sizes = [t.shape[axis] for t in ts]
    splits = np.cumsum(sizes)[:-1]
    try:
        out = np.concatenate([t.data for t in ts], axis=axis)
    except ValueError:
        raise ShapeError("concat", *[t.shape for t in ts]) from None
    return _make(out, ts, lambda g: tuple(np.split(g, splits, axis=axis)))


def stack(tensors: Sequence, axis: int = 0) -> Tensor:
    ts = [as_tensor(t) for t in tensors]
    try:
        out = np.stack([t.data for t in ts], axis=axis)
    except ValueError:
        raise ShapeError("stack", *[t.shape for t in ts]) from None
    n = len(ts)
    return _make(out, ts, lambda g: tuple(np.take(g, i, axis=axis) for i in range(n)))


def where(cond: np.ndarray, a, b) -> Tensor:
    """Select from ``a`` where ``cond`` is true, else ``b``; ``cond`` is constant."""
    a, b = as_tensor(a), as_tensor(b)
    cond = np.asarray(cond, dtype=bool)
    sa, sb = a.shape, b.shape
    return _make(np.where(cond, a.data, b.data), (a, b),
                 lambda g: (_unbroadcast(np.where(cond, g, 0), sa),
                            _unbroadcast(np.where(cond, 0, g), sb)))


# ---- linear algebra ----------------------------------------------------

def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 1 or b.ndim < 1 or a.shape[-1] != b.shape[-2 if b.ndim > 1 else 0]:
        raise ShapeError("matmul", a.shape, b.shape)
    ad, bd = a.data, b.data

    def bw(g):
        ga = gb = None
        if a.requires_grad:
            ga = g @ np.swapaxes(bd, -1, -2) if bd.ndim > 1 else np.multiply.outer(g, bd)
            ga = _unbroadcast(ga, ad.shape)
        if b.requires_grad:
            if ad.ndim == 1:
                gb = np.multiply.outer(ad, g)
            else:
                gb = np.swapaxes(ad, -1, -2) @ g
                gb = _unbroadcast(gb, bd.shape)
        return ga, gb

    return _make(ad @ bd, (a, b), bw)


def linear(x, weight, bias=None) -> Tensor:
    """``x @ weight.T + bias`` with weight stored as [out, in]."""
    x, weight = as_tensor(x), as_tensor(weight)
    if x.shape[-1] != weight.shape[1]:
        raise ShapeError("linear", x.shape, weight.shape)
    xd, wd = x.data, weight.data
    out = xd @ wd.T
    parents = [x, weight]
    if bias is not None:
        bias = as_tensor(bias)
        out = out + bias.data
        parents.append(bias)

    def bw(g):
        g2 = g.reshape(-1, g.shape[-1])
        gx = g @ wd if x.requires_grad else None
        gw = g2.T @ xd.reshape(-1, xd.shape[-1]) if weight.requires_grad else None
        if bias is None:
            return gx, gw
        return gx, gw, g2.sum(axis=0)

    return _make(out, parents, bw)


# ---- normalisation -----------------------------------------------------

def softmax(a, axis: int = -1) -> Tensor:
    a = as_tensor(a)
    x = a.data
    if np.isnan(x).any():
        raise ValueError("softmax: NaN in input")
    e = np.exp(x - x.max(axis=axis, keepdims=True))
    out = e / e.sum(axis=axis, keepdims=True)

    def bw(g):
        return (out * (g - (g * out).sum(axis=axis, keepdims=True)),)

    return _make(out, (a,), bw)


def log_softmax(a, axis: int = -1) -> Tensor:
    a = as_tensor(a)
    x = a.data
    if np.isnan(x).any():
        raise ValueError("log_softmax: NaN in input")
    shifted = x - x.max(axis=axis, keepdims=True)
    out = shifted - np.log(np.exp(shifted).sum(axis=axis, keepdims=True))

    def bw(g):
        return (g - np.exp(out) * g.sum(axis=axis, keepdims=True),)

    return _make(out, (a,), bw)


def pick(logp, ids) -> Tensor:
    """Select ``logp[..., ids]`` along the last axis (one id per leading row)."""
    logp = as_tensor(logp)
    ids = np.asarray(ids, dtype=np.int64)
    lead = np.indices(ids.shape)
    index = tuple(lead) + (ids,)
    shape, dtype = logp.shape, logp.data.dtype

    def bw(g):
        full = np.zeros(shape, dtype=dtype)
        full[index] = g
        return (full,)

    return _make(logp.data[index], (logp,), bw)


def dropout(x, rate: float, training: bool, rng: np.random.Generator | None) -> Tensor:
    """Inverted dropout; identity at inference or when ``rate`` is 0."""
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout rate must be in [0, 1), got {rate}")
    x = as_tensor(x)
    if not training or rate == 0.0:
        return x
    keep = (rng.random(x.shape) >= rate).astype(x.data.dtype) / (1.0 - rate)
    return _make(x.data * keep, (x,), lambda g: (g * keep,))


# ---- fused recurrent cell ----------------------------------------------

def gru_cell(x, h, w_ih, w_hh, b) -> Tensor:
    """One GRU step over a batch.

    ``w_ih``: [3H, I], ``w_hh``: [3H, H], ``b``: [3H]; gate blocks are ordered
    (update, reset, candidate) and the candidate uses ``U (r * h)``.
    """
    x, h, w_ih, w_hh, b = (as_tensor(t) for t in (x, h, w_ih, w_hh, b))
    hid = h.shape[-1]
    if w_hh.shape != (3 * hid, hid) or w_ih.shape != (3 * hid, x.shape[-1]) or b.shape != (3 * hid,):
        raise ShapeError("gru_cell", x.shape, h.shape, w_ih.shape, w_hh.shape, b.shape)
    xd = np.ascontiguousarray(x.data.reshape(-1, x.shape[-1]))
    hd = np.ascontiguousarray(h.data.reshape(-1, hid))
    out, cache = kernels.gru_forward(xd, hd, w_ih.data, w_hh.data, b.data)

    def bw(g):
        dx, dh, dwi, dwh, db = kernels.gru_backward(
            np.ascontiguousarray(g.reshape(-1, hid)), xd, hd, w_ih.data, w_hh.data, cache)
        return dx.reshape(x.shape), dh.reshape(h.shape), dwi, dwh, db

    return _make(out.reshape(h.shape), (x, h, w_ih, w_hh, b), bw)


# ---- testing oracle ----------------------------------------------------

def finite_diff_check(f: Callable[[], Tensor], params: Iterable[Tensor], h: float = 1e-5,
                      max_coords: int | None = None, rng: np.random.Generator | None = None,
                      atol: float = 0.0) -> float:
    """Max relative error between autodiff and central differences.

    ``f`` is re-evaluated from scratch for every perturbation and must be
    deterministic.  With ``max_coords`` only a random subset of each
    parameter's coordinates is probed.  Coordinates whose absolute
    disagreement is below ``atol`` count as exact.
    """
    params = list(params)
    for p in params:
        p.grad = None
    loss = f()
    loss.backward()
    analytic = [np.zeros_like(p.data) if p.grad is None else p.grad.copy() for p in params]
    worst = 0.0
    for p, ga in zip(params, analytic):
        flat = p.data.reshape(-1)
        coords = np.arange(flat.size)
        if max_coords is not None and flat.size > max_coords:
            coords = (rng or np.random.default_rng(0)).choice(flat.size, max_coords, replace=False)
        for i in coords:
            orig = flat[i]
            flat[i] = orig + h
            up = float(f().data)
            flat[i] = orig - h
            down = float(f().data)
            flat[i] = orig
            num = (up - down) / (2 * h)
            ana = float(ga.reshape(-1)[i])
            err = abs(ana - num) / (abs(ana) + abs(num) + 1e-12)
            if abs(ana - num) <= atol:
                err = 0.0
            worst = max(worst, err)
    return worst
