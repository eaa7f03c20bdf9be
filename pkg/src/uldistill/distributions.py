"""Probability-vector primitives: temperature softmax, zero padding, stable sort."""

import numpy as np

from .errors import InputError, ParameterError


def _as_logits(logits):
    z = np.asarray(logits, dtype=np.float64)
    if z.ndim == 0 or z.shape[-1] < 1:
        raise InputError("logits must have at least one entry")
    if not np.all(np.isfinite(z)):
        raise InputError("logits must be finite")
    return z


def softmax_temp(logits, tau=1.0):
    """Return ``softmax(logits / tau)`` along the last axis, in float64.

    Works on a single vector or on a stack of vectors (one per row).
    """
    if not tau > 0:
        raise ParameterError(f"tau must be positive, got {tau}")
    z = _as_logits(logits) / tau
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def log_softmax_temp(logits, tau=1.0):
    if not tau > 0:
        raise ParameterError(f"tau must be positive, got {tau}")
    z = _as_logits(logits) / tau
    z = z - z.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


def pad_to(p, n):
    """Extend ``p`` with exact zeros up to length ``n`` (last axis)."""
    p = np.asarray(p, dtype=np.float64)
    size = p.shape[-1]
    if n < size:
        raise ParameterError(f"cannot pad length {size} down to {n}")
    if n == size:
        return p.copy()
    out = np.zeros(p.shape[:-1] + (n,), dtype=np.float64)
    out[..., :size] = p
    return out


def sort_desc(p):
    """Stable descending sort.

    Returns ``(sorted, order)`` with ``sorted == p[order]``; equal values keep
    their original ascending index order.
    """
    p = np.asarray(p, dtype=np.float64)
    order = np.argsort(-p, axis=-1, kind="stable")
    return np.take_along_axis(p, order, axis=-1), order


def unsort(sorted_p, order):
    """Inverse of :func:`sort_desc`."""
    out = np.empty_like(sorted_p)
    np.put_along_axis(out, order, sorted_p, axis=-1)
    return out


def check_prob(p, atol=1e-9, name="p"):
    """Validate a probability vector and return it as float64."""
    p = np.asarray(p, dtype=np.float64)
    if p.ndim != 1 or p.size < 1:
        raise InputError(f"{name} must be a non-empty vector")
    if not np.all(np.isfinite(p)) or np.any(p < 0) or np.any(p > 1):
        raise InputError(f"{name} entries must lie in [0, 1]")
    if abs(p.sum() - 1.0) > atol:
        raise InputError(f"{name} sums to {p.sum()!r}, not 1")
    return p
