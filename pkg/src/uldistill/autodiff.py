"""Minimal reverse-mode differentiation over dense numpy arrays.

Operations record themselves on the active :class:`Tape` when any input
requires a gradient. :func:`backward` replays the tape in reverse and
accumulates gradients in tape order, so results are bitwise reproducible.
"""

import math

import numpy as np

from .errors import ParameterError

MASK_VALUE = -1e9


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "name")

    def __init__(self, data, requires_grad=False, name=None):
        self.data = np.asarray(data)
        self.grad = None
        self.requires_grad = requires_grad
        self.name = name

    @property
    def shape(self):
        return self.data.shape

    def zero_grad(self):
        self.grad = None

    def __repr__(self):
        tag = f" {self.name!r}" if self.name else ""
        return f"Tensor{tag}(shape={self.shape}, requires_grad={self.requires_grad})"


class Tape:
    """Ordered record of operations; use as a context manager to make it active."""

    _active = []

    def __init__(self):
        self.nodes = []

    def __enter__(self):
        Tape._active.append(self)
        return self

    def __exit__(self, *exc):
        Tape._active.pop()

    def record(self, out, backward_fn):
        self.nodes.append((out, backward_fn))


def _tape():
    return Tape._active[-1] if Tape._active else None


def _wrap(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def _accum(t, g):
    if not t.requires_grad:
        return
    if t.grad is None:
        t.grad = np.array(g, dtype=t.data.dtype, copy=True)
    else:
        t.grad += g


def _unbroadcast(g, shape):
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


def _result(data, inputs, backward_fn):
    needs = any(t.requires_grad for t in inputs)
    out = Tensor(data, requires_grad=needs)
    tape = _tape()
    if needs and tape is not None:
        tape.record(out, lambda: backward_fn(out.grad))
    return out


# -- primitives ---------------------------------------------------------------


def matmul(a, b):
    a, b = _wrap(a), _wrap(b)
    if a.shape[-1] != b.shape[-2 if b.data.ndim > 1 else 0]:
        raise ParameterError(f"matmul shape mismatch {a.shape} @ {b.shape}")
    out = a.data @ b.data

    def back(g):
        if a.requires_grad:
            _accum(a, _unbroadcast(g @ np.swapaxes(b.data, -1, -2), a.shape))
        if b.requires_grad:
            if b.data.ndim == 2 and a.data.ndim > 2:
                k, n = b.shape
                gb = a.data.reshape(-1, k).T @ g.reshape(-1, n)
            else:
                gb = _unbroadcast(np.swapaxes(a.data, -1, -2) @ g, b.shape)
            _accum(b, gb)

    return _result(out, (a, b), back)


def add(a, b):
    a, b = _wrap(a), _wrap(b)
    try:
        out = a.data + b.data
    except ValueError as exc:
        raise ParameterError(f"add shape mismatch {a.shape} + {b.shape}") from exc

    def back(g):
        _accum(a, _unbroadcast(g, a.shape))
        _accum(b, _unbroadcast(g, b.shape))

    return _result(out, (a, b), back)


def mul(a, b):
    a, b = _wrap(a), _wrap(b)
    try:
        out = a.data * b.data
    except ValueError as exc:
        raise ParameterError(f"mul shape mismatch {a.shape} * {b.shape}") from exc

    def back(g):
        if a.requires_grad:
            _accum(a, _unbroadcast(g * b.data, a.shape))
        if b.requires_grad:
            _accum(b, _unbroadcast(g * a.data, b.shape))

    return _result(out, (a, b), back)


def gather_rows(table, ids):
    """Embedding lookup: ``table[ids]`` for an integer array ``ids``."""
    table = _wrap(table)
    ids = np.asarray(ids)
    if ids.size and (ids.min() < 0 or ids.max() >= table.shape[0]):
        raise ParameterError(f"row index out of range for table of {table.shape[0]} rows")
    out = table.data[ids]

    def back(g):
        gt = np.zeros_like(table.data)
        np.add.at(gt, ids.reshape(-1), g.reshape(-1, table.shape[1]))
        _accum(table, gt)

    return _result(out, (table,), back)


def softmax(x):
    """Softmax along the last axis (max-subtracted)."""
    x = _wrap(x)
    z = x.data - x.data.max(axis=-1, keepdims=True)
    e = np.exp(z)
    y = e / e.sum(axis=-1, keepdims=True)

    def back(g):
        _accum(x, y * (g - (g * y).sum(axis=-1, keepdims=True)))

    return _result(y, (x,), back)


def rms_norm(x, gain, eps=1e-5):
    """``x / sqrt(mean(x**2) + eps) * gain`` over the last axis."""
    x, gain = _wrap(x), _wrap(gain)
    if gain.shape != x.shape[-1:]:
        raise ParameterError(f"gain shape {gain.shape} does not match {x.shape[-1:]}")
    r = 1.0 / np.sqrt((x.data * x.data).mean(axis=-1, keepdims=True) + eps)
    xhat = x.data * r
    out = xhat * gain.data

    def back(g):
        if gain.requires_grad:
            _accum(gain, (g * xhat).reshape(-1, gain.shape[0]).sum(axis=0))
        if x.requires_grad:
            gh = g * gain.data
            d = x.shape[-1]
            _accum(x, r * (gh - xhat * (gh * xhat).sum(axis=-1, keepdims=True) / d))

    return _result(out, (x, gain), back)


_GELU_C = math.sqrt(2.0 / math.pi)


def gelu(x):
    """tanh approximation of GELU."""
    x = _wrap(x)
    xd = x.data
    u = _GELU_C * (xd + 0.044715 * (xd * xd * xd))
    t = np.tanh(u)
    out = 0.5 * xd * (1.0 + t)

    def back(g):
        du = _GELU_C * (1.0 + 3 * 0.044715 * xd * xd)
        _accum(x, g * (0.5 * (1.0 + t) + 0.5 * xd * (1.0 - t * t) * du))

    return _result(out, (x,), back)


def reshape(x, shape):
    x = _wrap(x)
    try:
        out = x.data.reshape(shape)
    except ValueError as exc:
        raise ParameterError(f"cannot reshape {x.shape} to {shape}") from exc

    def back(g):
        _accum(x, g.reshape(x.shape))

    return _result(out, (x,), back)


def transpose(x, axes):
    x = _wrap(x)
    axes = tuple(axes)
    inv = tuple(np.argsort(axes))
    out = x.data.transpose(axes)

    def back(g):
        _accum(x, g.transpose(inv))

    return _result(out, (x,), back)


def causal_mask_add(scores):
    """Add a large negative constant above the diagonal of the last two axes."""
    scores = _wrap(scores)
    t, s = scores.shape[-2:]
    if t != s:
        raise ParameterError(f"causal mask needs square scores, got {scores.shape}")
    mask = np.triu(np.full((t, t), MASK_VALUE, dtype=scores.data.dtype), k=1)
    out = scores.data + mask

    def back(g):
        _accum(scores, g)

    return _result(out, (scores,), back)


def sum_all(x):
    x = _wrap(x)

    def back(g):
        _accum(x, np.broadcast_to(g, x.shape))

    return _result(np.asarray(x.data.sum()), (x,), back)


def external_loss(x, value, grad):
    """Scalar node with a precomputed value and gradient ``dvalue/dx``.

    Lets losses with closed-form gradients (see :mod:`uldistill.losses`)
    terminate a tape without re-expressing them as primitives.
    """
    x = _wrap(x)
    grad = np.asarray(grad)
    if grad.shape != x.shape:
        raise ParameterError(f"gradient shape {grad.shape} does not match {x.shape}")

    def back(g):
        _accum(x, (g * grad).astype(x.data.dtype, copy=False))

    return _result(np.asarray(value, dtype=np.float64), (x,), back)


# -- driver -------------------------------------------------------------------


def backward(tape, loss):
    if loss.data.size != 1:
        raise ParameterError(f"backward needs a scalar loss, got shape {loss.shape}")
    loss.grad = np.ones_like(loss.data)
    for out, fn in reversed(tape.nodes):
        if out.grad is not None:
            fn()


def finite_difference(fun, x, h=1e-6):
    """Central-difference gradient of a scalar function of a numpy array."""
    x = np.array(x, dtype=np.float64)
    g = np.empty_like(x)
    flat, gf = x.reshape(-1), g.reshape(-1)
    for i in range(flat.size):
        old = flat[i]
        flat[i] = old + h
        fp = float(fun(x))
        flat[i] = old - h
        fm = float(fun(x))
        flat[i] = old
        gf[i] = (fp - fm) / (2 * h)
    return g


def relative_error(analytic, numeric):
    """Worst coordinate error, scaled by the larger gradient's max magnitude."""
    a = np.asarray(analytic, dtype=np.float64)
    b = np.asarray(numeric, dtype=np.float64)
    scale = max(np.abs(a).max(initial=0.0), np.abs(b).max(initial=0.0))
    if scale == 0.0:
        return 0.0
    return float(np.abs(a - b).max() / scale)


def grad_check(f, x, h=1e-6):
    """Compare the tape gradient of ``f`` at ``x`` with central differences.

    ``f`` maps a :class:`Tensor` to a scalar :class:`Tensor`. Returns the
    worst-coordinate relative error (see :func:`relative_error`).
    """
    x0 = np.array(x.data if isinstance(x, Tensor) else x, dtype=np.float64)
    xt = Tensor(x0.copy(), requires_grad=True)
    with Tape() as tape:
        y = f(xt)
    backward(tape, y)
    analytic = xt.grad if xt.grad is not None else np.zeros_like(x0)
    numeric = finite_difference(lambda v: f(Tensor(v)).data, x0, h)
    return relative_error(analytic, numeric)
