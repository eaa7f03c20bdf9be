"""Discrete optimal transport: exact and entropic solvers, cost matrices, scaling bench.

The exact solver is the correctness oracle for the closed-form loss in
:mod:`uldistill.losses`; it also powers the non-uniform-cost training variant.
"""

import csv
import itertools
import math
import time
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.distance import cdist
from scipy.special import logsumexp

from ._flow import ssp_transport
from .distributions import sort_desc
from .errors import InputError, ParameterError, ScaleError
from .losses import uld_w1_step
from .tokenizer import levenshtein

EXACT_MAX_SIZE = 4096
BRUTE_FORCE_MAX = 8
COST_KINDS = ("uniform01", "levenshtein", "embedding_l2", "custom")


class ConvergenceWarning(UserWarning):
    pass


@dataclass(frozen=True)
class CostMatrix:
    entries: np.ndarray
    kind: str = "custom"

    def __post_init__(self):
        c = np.asarray(self.entries, dtype=np.float64)
        if c.ndim != 2:
            raise ParameterError("cost matrix must be two-dimensional")
        if not np.all(np.isfinite(c)) or np.any(c < 0):
            raise InputError("cost entries must be finite and non-negative")
        if self.kind not in COST_KINDS:
            raise ParameterError(f"unknown cost kind {self.kind!r}")
        object.__setattr__(self, "entries", c)

    @property
    def shape(self):
        return self.entries.shape


@dataclass
class TransportPlan:
    flows: np.ndarray
    cost: float
    # dual potentials: u[i] + v[j] <= C[i, j], equality on the support of ``flows``
    u: np.ndarray | None = None
    v: np.ndarray | None = None
    converged: bool = True
    n_iter: int = 0
    info: dict = field(default_factory=dict)


def uniform01_cost(n, m=None):
    m = n if m is None else m
    return CostMatrix(1.0 - np.eye(n, m), kind="uniform01")


def abs_index_cost(n):
    """Cost ``|i - j|`` on an ordered integer support."""
    idx = np.arange(n, dtype=np.float64)
    return CostMatrix(np.abs(idx[:, None] - idx[None, :]), kind="custom")


def _entries(c):
    return c.entries if isinstance(c, CostMatrix) else CostMatrix(c).entries


def _check_mass(x, name):
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1 or x.size == 0:
        raise InputError(f"{name} must be a non-empty vector")
    if not np.all(np.isfinite(x)) or np.any(x < 0):
        raise InputError(f"{name} must be finite and non-negative")
    if abs(x.sum() - 1.0) > 1e-9:
        raise InputError(f"{name} sums to {x.sum()!r}, not 1")
    return x


def _integerize(x, scale):
    a = np.rint(x * scale).astype(np.int64)
    a[int(np.argmax(x))] += scale - int(a.sum())
    return a


def exact_ot(p, q, c, resolution=1e-12):
    """Minimum-cost transport plan between ``p`` and ``q`` under cost ``c``.

    Masses are rounded onto a ``resolution`` grid (the rounding residual goes
    to the largest entry) and the integer problem is solved exactly by
    successive shortest paths. The returned cost uses the float cost matrix.
    """
    p = _check_mass(p, "p")
    q = _check_mass(q, "q")
    C = _entries(c)
    if C.shape != (p.size, q.size):
        raise ParameterError(f"cost shape {C.shape} does not match supports ({p.size}, {q.size})")
    if max(p.size, q.size) > EXACT_MAX_SIZE:
        raise ScaleError(f"exact_ot is limited to supports of {EXACT_MAX_SIZE}")
    scale = int(round(1.0 / resolution))
    a = _integerize(p, scale)
    b = _integerize(q, scale)
    flow, pot_s, pot_t, n_aug = ssp_transport(a, b, np.ascontiguousarray(C))
    if n_aug < 0:
        raise InputError("transport problem is infeasible")
    flows = flow / scale
    return TransportPlan(
        flows=flows,
        cost=float(np.sum(flows * C)),
        u=-pot_s,
        v=pot_t.copy(),
        info={"augmentations": int(n_aug), "resolution": resolution},
    )


def w1_1d_cdf(p, q):
    """W1 on the ordered support ``0..n-1`` with cost ``|i - j|``, via CDF differences."""
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    if p.shape != q.shape:
        raise ParameterError(f"length mismatch: {p.size} vs {q.size}")
    return float(np.abs(np.cumsum(p) - np.cumsum(q)).sum())


def brute_force_alignment_min(p, q):
    """Minimum over all one-to-one alignments ``pi`` of ``sum_i |p[i] - q[pi[i]]|``."""
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    if p.shape != q.shape:
        raise ParameterError(f"length mismatch: {p.size} vs {q.size}")
    n = p.size
    if n > BRUTE_FORCE_MAX:
        raise ScaleError(f"brute force limited to n <= {BRUTE_FORCE_MAX}, got {n}")
    perms = np.array(list(itertools.permutations(range(n))), dtype=np.int64)
    return float(np.abs(p[None, :] - q[perms]).sum(axis=1).min())


def sinkhorn(p, q, c, epsilon, max_iter=10000, tol=1e-9, check_every=10):
    """Entropic OT in the log domain.

    Stops once the row-marginal L1 violation drops below ``tol`` (columns are
    exact after each sweep). Non-convergence is reported on the returned plan
    and through a :class:`ConvergenceWarning`; it is not an exception.
    """
    if not epsilon > 0:
        raise ParameterError(f"epsilon must be positive, got {epsilon}")
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    C = _entries(c)
    if C.shape != (p.size, q.size):
        raise ParameterError(f"cost shape {C.shape} does not match supports ({p.size}, {q.size})")
    log_p = np.log(np.maximum(p, 1e-30))
    log_q = np.log(np.maximum(q, 1e-30))
    f = np.zeros(p.size)
    g = np.zeros(q.size)
    err = np.inf
    it = 0
    while it < max_iter:
        f = epsilon * (log_p - logsumexp((g[None, :] - C) / epsilon, axis=1))
        g = epsilon * (log_q - logsumexp((f[:, None] - C) / epsilon, axis=0))
        it += 1
        if it % check_every == 0 or it == max_iter:
            P = np.exp((f[:, None] + g[None, :] - C) / epsilon)
            err = float(np.abs(P.sum(axis=1) - p).sum())
            if err < tol:
                break
    P = np.exp((f[:, None] + g[None, :] - C) / epsilon)
    converged = err < tol
    if not converged:
        warnings.warn(
            f"sinkhorn stopped after {it} iterations with marginal error {err:.3g}",
            ConvergenceWarning,
            stacklevel=2,
        )
    return TransportPlan(
        flows=P, cost=float(np.sum(P * C)), u=f, v=g,
        converged=converged, n_iter=it, info={"marginal_error": err},
    )


def levenshtein_cost_matrix(a, b):
    """Edit distance between every token of vocabulary ``a`` and every token of ``b``.

    ``a`` and ``b`` may be :class:`~uldistill.tokenizer.Vocabulary` objects or
    plain lists of token strings.
    """
    ta = list(getattr(a, "tokens", a))
    tb = list(getattr(b, "tokens", b))
    if not ta or not tb:
        raise ParameterError("vocabularies must be non-empty")
    C = np.empty((len(ta), len(tb)))
    if ta == tb:
        for i, s in enumerate(ta):
            C[i, i] = 0.0
            for j in range(i + 1, len(tb)):
                C[i, j] = C[j, i] = levenshtein(s, tb[j])
    else:
        for i, s in enumerate(ta):
            for j, t in enumerate(tb):
                C[i, j] = levenshtein(s, t)
    return CostMatrix(C, kind="levenshtein")


def embedding_l2_cost_matrix(a_embed, b_embed):
    a = np.asarray(a_embed, dtype=np.float64)
    b = np.asarray(b_embed, dtype=np.float64)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[1]:
        raise ParameterError(
            f"embedding tables must share dimensionality, got {a.shape} and {b.shape}"
        )
    return CostMatrix(cdist(a, b), kind="embedding_l2")


def char_count_embedding(tokens, alphabet=None):
    """Shared bag-of-characters embedding, one row per token string.

    Gives two unrelated vocabularies a common space for
    :func:`embedding_l2_cost_matrix` when no learned table is shared.
    """
    tokens = list(getattr(tokens, "tokens", tokens))
    if alphabet is None:
        alphabet = sorted({ch for t in tokens for ch in t})
    col = {ch: k for k, ch in enumerate(alphabet)}
    E = np.zeros((len(tokens), len(alphabet)))
    for i, t in enumerate(tokens):
        for ch in t:
            if ch in col:
                E[i, col[ch]] += 1.0
    return E


# -- complexity bench ---------------------------------------------------------


def _random_simplex(rng, n):
    x = rng.exponential(size=n)
    return x / x.sum()


def _fit_slope(ns, ts):
    return float(np.polyfit(np.log(ns), np.log(ts), 1)[0])


@dataclass
class BenchResult:
    rows: list  # (method, n, rep, seconds)
    slopes: dict
    max_identity_error: float

    def mean_times(self, method):
        out = {}
        for meth, n, _, sec in self.rows:
            if meth == method:
                out.setdefault(n, []).append(sec)
        return {n: float(np.mean(v)) for n, v in sorted(out.items())}

    def write_csv(self, path_or_file):
        own = isinstance(path_or_file, (str, bytes)) or hasattr(path_or_file, "__fspath__")
        fh = open(path_or_file, "w", newline="") if own else path_or_file
        try:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["method", "n", "rep", "seconds"])
            for meth, n, rep, sec in self.rows:
                w.writerow([meth, n, rep, f"{sec:.9f}"])
            for meth, s in self.slopes.items():
                w.writerow(["slope", meth, f"{s:.6f}"])
        finally:
            if own:
                fh.close()


def bench_scaling(sizes, repetitions=3, exact_max=512, seed=0, exact_sizes=None):
    """Time the closed form against :func:`exact_ot` over growing support sizes.

    ``exact_ot`` runs only for sizes up to ``exact_max`` (or over
    ``exact_sizes`` when given). Slopes are least-squares fits of
    log(mean seconds) on log(n). Where both methods run, the exact 0-1 cost
    of the sorted vectors is checked against half the closed form.
    """
    sizes = list(sizes)
    if sizes != sorted(sizes):
        raise ParameterError("sizes must be ascending")
    if exact_sizes is None:
        exact_sizes = [n for n in sizes if n <= exact_max]
    rng = np.random.default_rng(seed)
    rows = []
    max_err = 0.0

    # warm the jit and the allocator before timing
    exact_ot([0.5, 0.5], [0.5, 0.5], uniform01_cost(2))
    uld_w1_step(np.ones(4) / 4, np.ones(4) / 4)

    def run(method, n, fn):
        for rep in range(repetitions):
            t0 = time.perf_counter()
            fn()
            rows.append((method, n, rep, time.perf_counter() - t0))

    for n in sizes:
        p, q = _random_simplex(rng, n), _random_simplex(rng, n)
        run("closed_form", n, lambda: uld_w1_step(p, q))
    for n in exact_sizes:
        p, q = _random_simplex(rng, n), _random_simplex(rng, n)
        ps, qs = sort_desc(p)[0], sort_desc(q)[0]
        C = uniform01_cost(n)
        plans = []
        run("exact_ot", n, lambda: plans.append(exact_ot(ps, qs, C)))
        max_err = max(max_err, abs(plans[-1].cost - uld_w1_step(p, q) / 2))

    result = BenchResult(rows=rows, slopes={}, max_identity_error=max_err)
    for method in ("closed_form", "exact_ot"):
        means = result.mean_times(method)
        if len(means) >= 2:
            result.slopes[method] = _fit_slope(list(means), list(means.values()))
    return result


def total_variation(p, q):
    return 0.5 * float(np.abs(np.asarray(p, float) - np.asarray(q, float)).sum())


def log2_sizes(lo, hi):
    """Powers of two from ``lo`` to ``hi`` inclusive."""
    return [2 ** k for k in range(int(math.log2(lo)), int(math.log2(hi)) + 1)]
