"""Dense tensors with reverse-mode automatic differentiation.

Values live in numpy arrays. Every differentiable operation records its
parents and a closure mapping the output gradient to parent gradients;
``Tensor.backward`` replays those closures in reverse execution order.

Training runs in 32-bit floats. ``float64_mode()`` switches newly created
tensors to 64-bit, which is what the finite-difference checks use.
"""

from __future__ import annotations

import contextlib
import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels

_seq = itertools.count()
_dtype = np.float32
_grad_enabled = True


class AutogradError(ValueError):
    """Misuse of the tape, e.g. backward from a non-scalar."""


def default_dtype():
    return _dtype


@contextlib.contextmanager
def float64_mode():
    global _dtype
    prev, _dtype = _dtype, np.float64
    try:
        yield
    finally:
        _dtype = prev


@contextlib.contextmanager
def no_grad():
    """Evaluate without recording anything on the tape."""
    global _grad_enabled
    prev, _grad_enabled = _grad_enabled, False
    try:
        yield
    finally:
        _grad_enabled = prev


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "_seq")

    def __init__(self, data, requires_grad=False):
        self.data = np.array(data, dtype=_dtype)
        self.grad = None
        self.requires_grad = requires_grad
        self._parents = ()
        self._backward = None
        self._seq = next(_seq)

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    def __repr__(self):
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    def zero_grad(self):
        self.grad = None

    def numpy(self):
        return self.data

    def item(self):
        return float(self.data)

    def backward(self):
        """Accumulate d(self)/d(leaf) into ``.grad`` of every reachable leaf.

        Only leaves keep gradients; intermediate gradients live in a local
        table so that repeated calls accumulate exactly once per call.
        """
        if self.data.size != 1:
            raise AutogradError(f"backward needs a scalar, got shape {self.shape}")
        if not self.requires_grad:
            raise AutogradError("tensor does not require grad")

        nodes = []
        seen = set()
        stack = [self]
        while stack:
            t = stack.pop()
            if id(t) in seen or t._backward is None:
                continue
            seen.add(id(t))
            nodes.append(t)
            stack.extend(p for p in t._parents if p.requires_grad)
        nodes.sort(key=lambda t: t._seq, reverse=True)

        if self._backward is None:
            _accumulate_leaf(self, np.ones_like(self.data))
            return
        pending = {id(self): np.ones_like(self.data)}
        for node in nodes:
            g = pending.pop(id(node), None)
            if g is None:
                continue
            for parent, pg in zip(node._parents, node._backward(g)):
                if pg is None or not parent.requires_grad:
                    continue
                if parent._backward is None:
                    _accumulate_leaf(parent, pg)
                else:
                    key = id(parent)
                    pending[key] = pg if key not in pending else pending[key] + pg

    # operator sugar
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return add(self, neg(_lift(other)))

    def __rsub__(self, other):
        return add(_lift(other), neg(self))

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def sum(self, axis=None, keepdims=False):
        return tsum(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, *axes):
        return transpose(self, axes)


def _accumulate_leaf(t, g):
    if g.shape != t.data.shape:
        raise AutogradError(f"gradient shape {g.shape} != tensor shape {t.data.shape}")
    t.grad = g if t.grad is None else t.grad + g


def _lift(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def _result(data, parents, backward):
    out = Tensor.__new__(Tensor)
    out.data = data
    out.grad = None
    out._seq = next(_seq)
    if _grad_enabled and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = parents
        out._backward = backward
    else:
        out.requires_grad = False
        out._parents = ()
        out._backward = None
    return out


def _unbroadcast(g, shape):
    """Sum ``g`` down to ``shape`` (reverse of numpy broadcasting)."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


def add(a, b):
    a, b = _lift(a), _lift(b)

    def backward(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return _result(a.data + b.data, (a, b), backward)


def neg(a):
    return _result(-a.data, (a,), lambda g: (-g,))


def mul(a, b):
    a, b = _lift(a), _lift(b)

    def backward(g):
        return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)

    return _result(a.data * b.data, (a, b), backward)


def square(a):
    return _result(a.data * a.data, (a,), lambda g: (2.0 * a.data * g,))


def matmul(a, b):
    """Matrix product over the last two axes; leading axes broadcast.

    A 2-D right operand is applied as one flat GEMM over all rows of ``a``.
    """
    a, b = _lift(a), _lift(b)
    if a.ndim < 2 or b.ndim < 2:
        raise ValueError("matmul needs operands of rank >= 2")
    if a.shape[-1] != b.shape[-2]:
        raise ValueError(f"matmul shape mismatch: {a.shape} @ {b.shape}")

    if b.ndim == 2:
        k = a.shape[-1]
        a2 = a.data.reshape(-1, k)
        out = (a2 @ b.data).reshape(a.shape[:-1] + (b.shape[1],))

        def backward(g):
            g2 = g.reshape(-1, g.shape[-1])
            ga = (g2 @ b.data.T).reshape(a.shape) if a.requires_grad else None
            gb = a2.T @ g2 if b.requires_grad else None
            return ga, gb

        return _result(out, (a, b), backward)

    def backward(g):
        ga = gb = None
        if a.requires_grad:
            ga = _unbroadcast(g @ np.swapaxes(b.data, -1, -2), a.shape)
        if b.requires_grad:
            gb = _unbroadcast(np.swapaxes(a.data, -1, -2) @ g, b.shape)
        return ga, gb

    return _result(a.data @ b.data, (a, b), backward)


def reshape(a, shape):
    return _result(a.data.reshape(shape), (a,), lambda g: (g.reshape(a.shape),))


def transpose(a, axes):
    axes = tuple(axes) if axes else tuple(reversed(range(a.ndim)))
    inverse = tuple(np.argsort(axes))
    return _result(a.data.transpose(axes), (a,), lambda g: (g.transpose(inverse),))


def tsum(a, axis=None, keepdims=False):
    def backward(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, a.shape).copy(),)

    return _result(np.asarray(a.data.sum(axis=axis, keepdims=keepdims)), (a,), backward)


def mean(a, axis=None, keepdims=False):
    n = a.data.size if axis is None else a.shape[axis]
    return mul(tsum(a, axis=axis, keepdims=keepdims), 1.0 / n)


def narrow(a, axis, start, length):
    """Slice ``length`` entries of ``axis`` beginning at ``start``."""
    idx = [slice(None)] * a.ndim
    idx[axis] = slice(start, start + length)
    idx = tuple(idx)

    def backward(g):
        full = np.zeros_like(a.data)
        full[idx] = g
        return (full,)

    return _result(a.data[idx], (a,), backward)


def take_last(a, index):
    """Pick ``a[..., index[...]]`` along the last axis."""
    index = np.asarray(index, dtype=np.int64)[..., None]

    def backward(g):
        full = np.zeros_like(a.data)
        np.put_along_axis(full, index, g[..., None], axis=-1)
        return (full,)

    return _result(np.take_along_axis(a.data, index, axis=-1)[..., 0], (a,), backward)


def causal_mask(n):
    """Boolean [n, n] array, True where column > row (future positions)."""
    return np.triu(np.ones((n, n), dtype=bool), k=1)


def masked_softmax(scores, causal=True):
    """Softmax over the last axis; with ``causal`` the future is exactly 0."""
    scores = _lift(scores)
    if causal and scores.shape[-1] != scores.shape[-2]:
        raise ValueError("causal softmax needs square trailing axes")
    y = kernels.softmax_forward(scores.data, causal)
    return _result(y, (scores,), lambda g: (kernels.softmax_backward(y, g),))


def layer_norm(x, gain, bias, eps=1e-5):
    """Normalize each row of the last axis, then apply gain and bias."""
    x, gain, bias = _lift(x), _lift(gain), _lift(bias)
    xhat, rstd = kernels.layer_norm_forward(x.data, eps)
    out = xhat * gain.data + bias.data

    def backward(g):
        gx = kernels.layer_norm_backward(xhat, rstd, g * gain.data) if x.requires_grad else None
        lead = tuple(range(g.ndim - 1))
        ggain = (g * xhat).sum(axis=lead) if gain.requires_grad else None
        gbias = g.sum(axis=lead) if bias.requires_grad else None
        return gx, ggain, gbias

    return _result(out, (x, gain, bias), backward)


def gelu(x):
    """GELU, tanh approximation (the GPT-2 form)."""
    x = _lift(x)
    y, t = kernels.gelu_forward(x.data)
    return _result(y, (x,), lambda g: (kernels.gelu_backward(x.data, t, g),))


def dropout(x, p, training, rng):
    """Inverted dropout: zero with probability ``p``, scale survivors by 1/(1-p)."""
    if not 0.0 <= p < 1.0:
        raise ValueError(f"dropout probability must be in [0, 1), got {p}")
    x = _lift(x)
    if not training or p == 0.0:
        return x
    keep = rng.random(x.shape, dtype=np.float32) >= np.float32(p)
    scale = keep * x.data.dtype.type(1.0 / (1.0 - p))
    return _result(x.data * scale, (x,), lambda g: (g * scale,))


class Adam:
    """Bias-corrected Adam; owns the per-parameter moment state.

    ``clip_norm`` rescales all gradients jointly when their global L2 norm
    exceeds it. Off by default.
    """

    def __init__(self, params, lr=1e-4, betas=(0.9, 0.999), eps=1e-8, clip_norm=None):
        self.params = list(params)
        self.lr = lr
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.clip_norm = clip_norm
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]
        self.t = 0

    def zero_grad(self):
        for p in self.params:
            p.grad = None

    def step(self):
        self.t += 1
        grads = [p.grad for p in self.params]
        if self.clip_norm is not None:
            total = math.sqrt(sum(float(np.sum(g.astype(np.float64) ** 2)) for g in grads if g is not None))
            if total > self.clip_norm:
                grads = [None if g is None else g * (self.clip_norm / total) for g in grads]
        b1, b2 = self.beta1, self.beta2
        c1 = 1.0 - b1**self.t
        c2 = 1.0 - b2**self.t
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            if g is None:
                continue
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * (g * g)
            p.data -= (self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)).astype(p.data.dtype)


@dataclass
class GradCheckReport:
    max_rel_error: float
    tolerance: float
    errors: list = field(default_factory=list)

    @property
    def passed(self):
        return self.max_rel_error < self.tolerance


def relative_error(analytic, numeric):
    """Norm-wise relative error; absolute error when both sides vanish."""
    diff = float(np.linalg.norm(analytic - numeric))
    scale = max(float(np.linalg.norm(analytic)), float(np.linalg.norm(numeric)))
    return diff / scale if scale > 1e-12 else diff


def grad_check(f, inputs, tolerance=1e-4, h=1e-5):
    """Compare tape gradients of scalar ``f(*inputs)`` to central differences.

    ``inputs`` should be float64 tensors with ``requires_grad`` set. Their
    ``.grad`` is overwritten.
    """
    for t in inputs:
        t.grad = None
    f(*inputs).backward()
    analytic = [np.zeros_like(t.data) if t.grad is None else t.grad.copy() for t in inputs]

    errors = []
    with no_grad():
        for t, a in zip(inputs, analytic):
            numeric = np.zeros_like(t.data)
            flat = t.data.reshape(-1)
            nflat = numeric.reshape(-1)
            for i in range(flat.size):
                orig = flat[i]
                flat[i] = orig + h
                up = float(f(*inputs).data)
                flat[i] = orig - h
                down = float(f(*inputs).data)
                flat[i] = orig
                nflat[i] = (up - down) / (2.0 * h)
            errors.append(relative_error(a, numeric))
    return GradCheckReport(max(errors) if errors else 0.0, tolerance, errors)
