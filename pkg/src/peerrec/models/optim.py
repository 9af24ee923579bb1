"""Adam and the one-cycle learning-rate schedule, over lists of numpy arrays."""
import math

import numpy as np


def one_cycle_schedule(max_lr, total_steps, pct_start=0.3, div_factor=25.0, final_div_factor=100.0):
    """Per-step learning rates: linear warmup then cosine anneal.

    Starts at ``max_lr / div_factor``, reaches ``max_lr`` at exactly one
    step, and ends at ``max_lr / final_div_factor``.
    """
    if total_steps < 1:
        raise ValueError("total_steps must be >= 1")
    if total_steps == 1:
        return np.asarray([float(max_lr)])
    start = max_lr / div_factor
    end = max_lr / final_div_factor
    peak = min(max(int(round(pct_start * (total_steps - 1))), 1), total_steps - 1)
    lrs = np.empty(total_steps)
    lrs[:peak] = start + (max_lr - start) * np.arange(peak) / peak
    lrs[peak] = max_lr
    n_down = total_steps - 1 - peak
    if n_down:
        frac = np.arange(1, n_down + 1) / n_down
        lrs[peak + 1:] = end + (max_lr - end) * 0.5 * (1.0 + np.cos(math.pi * frac))
    return lrs


class Adam:
    """Adam with coupled L2 weight decay (decay added to the gradient)."""

    def __init__(self, params, betas=(0.9, 0.999), eps=1e-8, weight_decay=0.0):
        self.params = params
        self.b1, self.b2 = betas
        self.eps = eps
        self.weight_decay = weight_decay
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, grads, lr):
        self.t += 1
        c1 = 1.0 - self.b1 ** self.t
        c2 = 1.0 - self.b2 ** self.t
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            if self.weight_decay:
                g = g + self.weight_decay * p
            m *= self.b1
            m += (1.0 - self.b1) * g
            v *= self.b2
            v += (1.0 - self.b2) * g * g
            p -= lr * (m / c1) / (np.sqrt(v / c2) + self.eps)
