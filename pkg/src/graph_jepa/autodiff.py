"""Dense f64 tensors with reverse-mode differentiation, plus Adam and loss primitives."""

from __future__ import annotations

import numpy as np

_DEBUG_NAN = False


def set_debug_nan(flag):
    """When enabled, every op output is checked for NaN and raises on hit."""
    global _DEBUG_NAN
    _DEBUG_NAN = bool(flag)


class DimensionError(ValueError):
    pass


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward_fn")

    def __init__(self, data, requires_grad=False, parents=(), backward_fn=None):
        self.data = np.asarray(data, dtype=np.float64)
        if _DEBUG_NAN and np.isnan(self.data).any():
            raise FloatingPointError("NaN in tensor data")
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self._parents = tuple(p for p in parents if p.requires_grad)
        self._backward_fn = backward_fn

    @property
    def shape(self):
        return self.data.shape

    def item(self):
        return float(self.data)

    def _accumulate(self, g):
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += g

    def backward(self):
        """Reverse-mode sweep from a scalar; populates .grad on requires_grad leaves."""
        if self.data.size != 1:
            raise DimensionError(f"backward needs a scalar, got shape {self.shape}")
        topo, seen = [], set()
        stack = [(self, False)]
        while stack:
            node, processed = stack.pop()
            if processed:
                topo.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                stack.append((p, False))
        self.grad = np.ones_like(self.data)
        for node in reversed(topo):
            if node._backward_fn is not None and node.grad is not None:
                node._backward_fn(node.grad)

    # operator sugar -------------------------------------------------------
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
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __repr__(self):
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"


def as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def _unbroadcast(grad, shape):
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad.reshape(shape)


def _make(data, parents, backward_fn):
    req = any(p.requires_grad for p in parents)
    return Tensor(data, req, parents, backward_fn if req else None)


def add(a, b):
    a, b = as_tensor(a), as_tensor(b)
    try:
        out_data = a.data + b.data
    except ValueError:
        raise DimensionError(f"add: shapes {a.shape} vs {b.shape}")

    def backward(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g, a.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(g, b.shape))

    return _make(out_data, (a, b), backward)


def sub(a, b):
    a, b = as_tensor(a), as_tensor(b)
    try:
        out_data = a.data - b.data
    except ValueError:
        raise DimensionError(f"sub: shapes {a.shape} vs {b.shape}")

    def backward(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g, a.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(-g, b.shape))

    return _make(out_data, (a, b), backward)


def mul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    try:
        out_data = a.data * b.data
    except ValueError:
        raise DimensionError(f"mul: shapes {a.shape} vs {b.shape}")

    def backward(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g * b.data, a.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(g * a.data, b.shape))

    return _make(out_data, (a, b), backward)


def div(a, b):
    a, b = as_tensor(a), as_tensor(b)
    try:
        out_data = a.data / b.data
    except ValueError:
        raise DimensionError(f"div: shapes {a.shape} vs {b.shape}")

    def backward(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g / b.data, a.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(-g * a.data / (b.data * b.data), b.shape))

    return _make(out_data, (a, b), backward)


def matmul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    if a.data.ndim != 2 or b.data.ndim != 2 or a.shape[1] != b.shape[0]:
        raise DimensionError(f"matmul: shapes {a.shape} vs {b.shape}")
    out_data = a.data @ b.data

    def backward(g):
        if a.requires_grad:
            a._accumulate(g @ b.data.T)
        if b.requires_grad:
            b._accumulate(a.data.T @ g)

    return _make(out_data, (a, b), backward)


def _reduce(x, axis, keepdims, np_fn, grad_fn):
    x = as_tensor(x)
    out_data = np_fn(x.data, axis=axis, keepdims=keepdims)

    def backward(g):
        if not x.requires_grad:
            return
        if axis is None:
            gg = np.broadcast_to(g, x.shape) if keepdims else np.full(x.shape, g)
        else:
            gg = g if keepdims else np.expand_dims(g, axis)
            gg = np.broadcast_to(gg, x.shape)
        x._accumulate(grad_fn(gg))

    return _make(out_data, (x,), backward)


def tsum(x, axis=None, keepdims=False):
    return _reduce(x, axis, keepdims, np.sum, lambda gg: gg)


def tmean(x, axis=None, keepdims=False):
    x = as_tensor(x)
    denom = x.data.size if axis is None else x.shape[axis]
    return _reduce(x, axis, keepdims, np.mean, lambda gg: gg / denom)


def tmax(x, axis=None, keepdims=False):
    x = as_tensor(x)
    out_data = np.max(x.data, axis=axis, keepdims=keepdims)

    def backward(g):
        if not x.requires_grad:
            return
        if axis is None:
            expanded = np.full(x.shape, out_data) if not keepdims else out_data
            gg = np.full(x.shape, g) if not keepdims else np.broadcast_to(g, x.shape)
        else:
            expanded = out_data if keepdims else np.expand_dims(out_data, axis)
            gg = g if keepdims else np.expand_dims(g, axis)
            gg = np.broadcast_to(gg, x.shape)
            expanded = np.broadcast_to(expanded, x.shape)
        mask = (x.data == expanded).astype(np.float64)
        counts = mask.sum(axis=axis, keepdims=True) if axis is not None else mask.sum()
        x._accumulate(gg * mask / counts)

    return _make(out_data, (x,), backward)


def _elementwise(x, fn, dfn):
    x = as_tensor(x)
    out_data = fn(x.data)

    def backward(g):
        if x.requires_grad:
            x._accumulate(g * dfn(x.data, out_data))

    return _make(out_data, (x,), backward)


def relu(x):
    return _elementwise(x, lambda d: np.maximum(d, 0.0),
                        lambda d, o: (d > 0).astype(np.float64))


_GELU_C = np.sqrt(2.0 / np.pi)


def gelu(x):
    """Tanh-form gaussian error linear unit."""

    def fn(d):
        return 0.5 * d * (1.0 + np.tanh(_GELU_C * (d + 0.044715 * d**3)))

    def dfn(d, o):
        inner = _GELU_C * (d + 0.044715 * d**3)
        t = np.tanh(inner)
        dinner = _GELU_C * (1.0 + 3 * 0.044715 * d**2)
        return 0.5 * (1.0 + t) + 0.5 * d * (1.0 - t**2) * dinner

    return _elementwise(x, fn, dfn)


def exp(x):
    return _elementwise(x, np.exp, lambda d, o: o)


def log(x):
    return _elementwise(x, np.log, lambda d, o: 1.0 / d)


def sqrt(x):
    return _elementwise(x, np.sqrt, lambda d, o: 0.5 / o)


def cosh(x):
    return _elementwise(x, np.cosh, lambda d, o: np.sinh(d))


def sinh(x):
    return _elementwise(x, np.sinh, lambda d, o: np.cosh(d))


def acosh(x):
    return _elementwise(x, np.arccosh,
                        lambda d, o: 1.0 / np.sqrt(d * d - 1.0))


def clamp_max(x, limit):
    return _elementwise(x, lambda d: np.minimum(d, limit),
                        lambda d, o: (d < limit).astype(np.float64))


def softmax(x, axis=-1):
    x = as_tensor(x)
    shifted = x.data - np.max(x.data, axis=axis, keepdims=True)
    e = np.exp(shifted)
    out_data = e / e.sum(axis=axis, keepdims=True)

    def backward(g):
        if x.requires_grad:
            dot = np.sum(g * out_data, axis=axis, keepdims=True)
            x._accumulate(out_data * (g - dot))

    return _make(out_data, (x,), backward)


def layer_norm(x, eps=1e-5):
    """Normalize the last axis to zero mean, unit variance (no affine)."""
    x = as_tensor(x)
    mu = x.data.mean(axis=-1, keepdims=True)
    var = x.data.var(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (x.data - mu) * inv

    def backward(g):
        if not x.requires_grad:
            return
        n = x.shape[-1]
        gsum = g.sum(axis=-1, keepdims=True)
        gx = (g - gsum / n - xhat * np.sum(g * xhat, axis=-1, keepdims=True) / n) * inv
        x._accumulate(gx)

    return _make(xhat, (x,), backward)


def concat(tensors, axis=0):
    tensors = [as_tensor(t) for t in tensors]
    out_data = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.shape[axis] for t in tensors]

    def backward(g):
        offset = 0
        for t, size in zip(tensors, sizes):
            if t.requires_grad:
                idx = [slice(None)] * g.ndim
                idx[axis] = slice(offset, offset + size)
                t._accumulate(g[tuple(idx)])
            offset += size

    return _make(out_data, tuple(tensors), backward)


def index_select(x, idx, axis=0):
    x = as_tensor(x)
    idx = np.asarray(idx, dtype=np.int64)
    out_data = np.take(x.data, idx, axis=axis)

    def backward(g):
        if x.requires_grad:
            gx = np.zeros_like(x.data)
            if axis == 0:
                np.add.at(gx, idx, g)
            else:
                np.add.at(gx, tuple([slice(None)] * axis + [idx]), g)
            x._accumulate(gx)

    return _make(out_data, (x,), backward)


def scatter_add(src, idx, num_rows):
    """Row-wise scatter: out[i] = sum of src rows j with idx[j] == i."""
    src = as_tensor(src)
    idx = np.asarray(idx, dtype=np.int64)
    if idx.shape[0] != src.shape[0]:
        raise DimensionError(f"scatter_add: {idx.shape[0]} indices for {src.shape[0]} rows")
    out_data = np.zeros((num_rows,) + src.shape[1:])
    np.add.at(out_data, idx, src.data)

    def backward(g):
        if src.requires_grad:
            src._accumulate(g[idx])

    return _make(out_data, (src,), backward)


def stop_gradient(x):
    """Identity forward; blocks all gradient flow."""
    x = as_tensor(x)
    return Tensor(x.data.copy(), requires_grad=False)


def smooth_l1(pred, target, beta=1.0):
    """Mean smooth-L1: 0.5 d^2 / beta below beta, |d| - 0.5 beta above."""
    if beta <= 0:
        raise ValueError(f"beta must be > 0, got {beta}")
    pred, target = as_tensor(pred), as_tensor(target)
    if pred.shape != target.shape:
        raise DimensionError(f"smooth_l1: shapes {pred.shape} vs {target.shape}")
    d = pred.data - target.data
    absd = np.abs(d)
    quad = absd < beta
    s = np.where(quad, 0.5 * d * d / beta, absd - 0.5 * beta)
    out_data = s.mean()
    n = s.size

    def backward(g):
        ds = np.where(quad, d / beta, np.sign(d)) * (g / n)
        if pred.requires_grad:
            pred._accumulate(ds)
        if target.requires_grad:
            target._accumulate(-ds)

    return _make(out_data, (pred, target), backward)


class AdamState:
    """Standard bias-corrected Adam over a named parameter dict."""

    def __init__(self, params, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.step_count = 0
        self.m = {k: np.zeros_like(p.data) for k, p in params.items()}
        self.v = {k: np.zeros_like(p.data) for k, p in params.items()}


def adam_step(params, state):
    """One Adam update in-place; parameters with no gradient are left alone."""
    state.step_count += 1
    t = state.step_count
    bc1 = 1.0 - state.beta1**t
    bc2 = 1.0 - state.beta2**t
    for name, p in params.items():
        if p.grad is None:
            continue
        g = p.grad
        state.m[name] = state.beta1 * state.m[name] + (1 - state.beta1) * g
        state.v[name] = state.beta2 * state.v[name] + (1 - state.beta2) * g * g
        mhat = state.m[name] / bc1
        vhat = state.v[name] / bc2
        p.data = p.data - state.lr * mhat / (np.sqrt(vhat) + state.eps)


def zero_grads(params):
    for p in params.values():
        p.grad = None
