"""Adam and the one-cycle learning-rate schedule."""

import math

import numpy as np


class Adam:
    def __init__(self, params, lr=1e-3, betas=(0.9, 0.999), eps=1e-8):
        self.params = list(params)
        self.lr = lr
        self.b1, self.b2 = betas
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]

    def step(self, lr=None):
        lr = self.lr if lr is None else lr
        self.t += 1
        c1 = 1.0 - self.b1**self.t
        c2 = 1.0 - self.b2**self.t
        for p, m, v in zip(self.params, self.m, self.v):
            if p.grad is None:
                continue
            g = p.grad
            m *= self.b1
            m += (1.0 - self.b1) * g
            v *= self.b2
            v += (1.0 - self.b2) * g * g
            upd = (lr / c1) * m / (np.sqrt(v / c2) + self.eps)
            p.data -= upd.astype(p.data.dtype, copy=False)


def one_cycle_lr(step, total_steps, max_lr, warmup_frac=0.3):
    """Linear warmup from ``max_lr/2`` to ``max_lr``, then cosine down to ``max_lr/10``."""
    initial = max_lr / 2
    final = initial / 5
    total_steps = max(total_steps, 1)
    warm = max(int(round(warmup_frac * total_steps)), 1)
    if step < warm:
        return initial + (max_lr - initial) * step / warm
    frac = (step - warm) / max(total_steps - warm, 1)
    return final + 0.5 * (max_lr - final) * (1.0 + math.cos(math.pi * min(frac, 1.0)))
