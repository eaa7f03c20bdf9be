"""Cross-entropy, KL distillation and the closed-form ULD Wasserstein loss.

All arithmetic is float64. Row-wise helpers (``*_rows``) take stacks of
vectors, one per time step, and are what the training loop calls; the
``*_step`` / ``*_sequence`` functions are the scalar reference surface.
"""

from dataclasses import dataclass, field

import numpy as np

from .distributions import pad_to, softmax_temp, sort_desc
from .errors import (
    AbsoluteContinuityError,
    DegenerateInputError,
    ParameterError,
    SupportError,
)

DEFAULT_LAMBDA = 1.5
DEFAULT_TAU = 1.0
CE_FLOOR = 1e-12

MODES = ("ce", "ce+kl", "ce+uld")


@dataclass(frozen=True)
class StepLossInput:
    """One aligned time step: student logits, teacher logits and gold token."""

    student_logits: np.ndarray
    gold_token: int
    teacher_logits: np.ndarray | None = None
    tau: float = DEFAULT_TAU
    lam: float = DEFAULT_LAMBDA

    def __post_init__(self):
        n = np.shape(self.student_logits)[-1]
        if not 0 <= self.gold_token < n:
            raise ParameterError(f"gold token {self.gold_token} outside [0, {n})")
        if self.lam < 0:
            raise ParameterError(f"lambda must be non-negative, got {self.lam}")


@dataclass
class LossReport:
    ce: float
    total: float
    w1: float | None = None
    kl: float | None = None
    per_step: list = field(default_factory=list)


# -- per-step reference functions -------------------------------------------


def ce_step(student_probs, gold_token):
    p = np.asarray(student_probs, dtype=np.float64)
    if not 0 <= gold_token < p.shape[-1]:
        raise ParameterError(f"gold token {gold_token} outside [0, {p.shape[-1]})")
    return float(-np.log(max(p[gold_token], CE_FLOOR)))


def kl_step(teacher_probs, student_probs):
    """``sum q * ln(q / p)`` with the convention ``0 * ln(0 / .) = 0``."""
    q = np.asarray(teacher_probs, dtype=np.float64)
    p = np.asarray(student_probs, dtype=np.float64)
    if q.shape != p.shape:
        raise SupportError(
            f"KL needs a shared vocabulary: teacher support {q.shape[-1]}, "
            f"student support {p.shape[-1]}"
        )
    mass = q > 0
    if np.any(mass & (p <= 0)):
        raise AbsoluteContinuityError(
            "teacher puts mass on tokens the student gives zero probability"
        )
    return float(np.sum(q[mass] * np.log(q[mass] / p[mass])))


def uld_w1_step(student_probs, teacher_probs):
    """Closed-form W1: L1 distance between the descending-sorted, zero-padded vectors."""
    p = np.asarray(student_probs, dtype=np.float64)
    q = np.asarray(teacher_probs, dtype=np.float64)
    return float(uld_rows(p[None, :], q[None, :])[0])


# -- row-wise kernels ---------------------------------------------------------


def _common_pad(p, q):
    n = max(p.shape[-1], q.shape[-1])
    return pad_to(p, n), pad_to(q, n)


def uld_rows(p, q):
    """Closed-form W1 for each row pair of ``p`` (R, Vs) and ``q`` (R, Vt)."""
    pp, qq = _common_pad(p, q)
    ps = -np.sort(-pp, axis=-1)
    qs = -np.sort(-qq, axis=-1)
    return np.abs(ps - qs).sum(axis=-1)


def uld_sign_rows(p, q):
    """Subgradient of the closed-form W1 with respect to each row of ``p``.

    The sorting permutation is frozen at its stable value and ``sign(0) = 0``.
    """
    vs = p.shape[-1]
    pp, qq = _common_pad(p, q)
    ps, order = sort_desc(pp)
    qs = -np.sort(-qq, axis=-1)
    s_sorted = np.sign(ps - qs)
    s = np.empty_like(s_sorted)
    np.put_along_axis(s, order, s_sorted, axis=-1)
    return s[..., :vs]


def softmax_vjp(p, g, tau=DEFAULT_TAU):
    """Pull ``g = dL/dp`` back through ``p = softmax(z / tau)``."""
    return p * (g - np.sum(p * g, axis=-1, keepdims=True)) / tau


def ce_rows(p, gold):
    gold = np.asarray(gold)
    pg = p[np.arange(p.shape[0]), gold]
    return -np.log(np.maximum(pg, CE_FLOOR))


def ce_grad_rows(p, gold, tau=DEFAULT_TAU):
    g = p.copy()
    g[np.arange(p.shape[0]), np.asarray(gold)] -= 1.0
    return g / tau


def kl_rows(q, p):
    if q.shape != p.shape:
        raise SupportError(
            f"KL needs a shared vocabulary: teacher support {q.shape[-1]}, "
            f"student support {p.shape[-1]}"
        )
    mass = q > 0
    if np.any(mass & (p <= 0)):
        raise AbsoluteContinuityError(
            "teacher puts mass on tokens the student gives zero probability"
        )
    ratio = np.where(mass, q, 1.0) / np.where(mass, p, 1.0)
    return np.sum(np.where(mass, q * np.log(ratio), 0.0), axis=-1)


def kl_grad_rows(q, p, tau=DEFAULT_TAU):
    return (p - q) / tau


# -- sequence losses ----------------------------------------------------------


def _check_steps(steps):
    if len(steps) == 0:
        raise DegenerateInputError("no aligned time steps")


def uld_sequence(steps, lam=DEFAULT_LAMBDA):
    """``sum_t CE(t) + lam * sum_t W1(t)`` over index-aligned steps."""
    _check_steps(steps)
    ce_total = 0.0
    w1_total = 0.0
    per_step = []
    for st in steps:
        p = softmax_temp(st.student_logits, st.tau)
        q = softmax_temp(st.teacher_logits, st.tau)
        ce = ce_step(p, st.gold_token)
        w1 = uld_w1_step(p, q)
        ce_total += ce
        w1_total += w1
        per_step.append({"ce": ce, "w1": w1, "total": ce + lam * w1})
    return LossReport(ce=ce_total, w1=w1_total, total=ce_total + lam * w1_total,
                      per_step=per_step)


def kl_sequence(steps, lam=DEFAULT_LAMBDA):
    """``sum_t CE(t) + lam * sum_t KL(q_t || p_t)``; needs one shared vocabulary."""
    _check_steps(steps)
    ce_total = 0.0
    kl_total = 0.0
    per_step = []
    for st in steps:
        p = softmax_temp(st.student_logits, st.tau)
        q = softmax_temp(st.teacher_logits, st.tau)
        ce = ce_step(p, st.gold_token)
        kl = kl_step(q, p)
        ce_total += ce
        kl_total += kl
        per_step.append({"ce": ce, "kl": kl, "total": ce + lam * kl})
    return LossReport(ce=ce_total, kl=kl_total, total=ce_total + lam * kl_total,
                      per_step=per_step)


def ce_sequence(steps):
    _check_steps(steps)
    ce_total = 0.0
    per_step = []
    for st in steps:
        ce = ce_step(softmax_temp(st.student_logits, st.tau), st.gold_token)
        ce_total += ce
        per_step.append({"ce": ce, "total": ce})
    return LossReport(ce=ce_total, total=ce_total, per_step=per_step)


def step_loss(mode, inp):
    """Scalar loss of one step under ``mode``; the function ``loss_grad`` differentiates."""
    p = softmax_temp(inp.student_logits, inp.tau)
    ce = ce_step(p, inp.gold_token)
    if mode == "ce":
        return ce
    q = softmax_temp(inp.teacher_logits, inp.tau)
    if mode == "ce+kl":
        return ce + inp.lam * kl_step(q, p)
    if mode == "ce+uld":
        return ce + inp.lam * uld_w1_step(p, q)
    raise ParameterError(f"unknown loss mode {mode!r}; expected one of {MODES}")


def loss_grad(mode, inp):
    """Analytic gradient of :func:`step_loss` with respect to the student logits.

    Teacher logits are constants. The CE part ignores the 1e-12 clamp.
    """
    if mode not in MODES:
        raise ParameterError(f"unknown loss mode {mode!r}; expected one of {MODES}")
    p = softmax_temp(inp.student_logits, inp.tau)[None, :]
    g = ce_grad_rows(p, [inp.gold_token], inp.tau)
    if mode == "ce+kl":
        q = softmax_temp(inp.teacher_logits, inp.tau)[None, :]
        g = g + inp.lam * kl_grad_rows(q, p, inp.tau)
    elif mode == "ce+uld":
        q = softmax_temp(inp.teacher_logits, inp.tau)[None, :]
        g = g + inp.lam * softmax_vjp(p, uld_sign_rows(p, q), inp.tau)
    return g[0]

