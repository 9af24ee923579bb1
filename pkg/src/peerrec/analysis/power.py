"""Standardized effect sizes and sample sizes for a one-tailed point-biserial test."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import stats

N_MIN, N_MAX = 4, 10_000_000


@dataclass(frozen=True)
class PowerRequest:
    effect_size_rho: float
    alpha: float = 0.05
    power: float = 0.8
    tails: int = 1

    def __post_init__(self):
        if not 0 < self.effect_size_rho < 1:
            raise ValueError("effect size rho must lie in (0, 1)")
        if not 0 < self.alpha < 1 or not 0 < self.power < 1:
            raise ValueError("alpha and power must lie in (0, 1)")
        if self.tails not in (1, 2):
            raise ValueError("tails must be 1 or 2")


def achieved_power(n, rho, alpha=0.05, tails=1):
    """Power of the t test of a point-biserial correlation ``rho`` with ``n`` units."""
    df = n - 2
    delta = rho * math.sqrt(n) / math.sqrt(1.0 - rho * rho)
    crit = stats.t.ppf(1.0 - alpha / tails, df)
    p = stats.nct.sf(crit, df, delta)
    if tails == 2:
        p += stats.nct.cdf(-crit, df, delta)
    return float(p)


def required_sample_size(req: PowerRequest) -> int:
    """Smallest n in [4, 1e7] reaching the requested power, by bisection."""
    rho, a, target, tails = req.effect_size_rho, req.alpha, req.power, req.tails
    if achieved_power(N_MIN, rho, a, tails) >= target:
        return N_MIN
    if achieved_power(N_MAX, rho, a, tails) < target:
        raise ValueError(f"power {target} not reachable with n <= {N_MAX}")
    lo, hi = N_MIN, N_MAX  # power(lo) < target <= power(hi)
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if achieved_power(mid, rho, a, tails) >= target:
            hi = mid
        else:
            lo = mid
    return hi


def pooled_sd(var_a, n_a, var_b, n_b):
    return math.sqrt(((n_a - 1) * var_a + (n_b - 1) * var_b) / (n_a + n_b - 2))


def effect_size(mean_p, var_p, mean_c=None, var_c=None, n_p=None, n_c=None):
    """Cohen's d.

    With only the participant group, ``d = mean_p / sd_p`` (behavior aimed
    at recommended sites, zero before exposure). With a comparison group the
    means are per-unit (before - after) changes and
    ``d = (mean_c - mean_p) / pooled_sd``, so a positive d means participants
    declined less than the comparison group.
    """
    if mean_c is None:
        sd = math.sqrt(var_p)
        if not sd > 0:
            raise ValueError("standard deviation must be positive")
        return mean_p / sd
    if None in (var_c, n_p, n_c):
        raise ValueError("difference-in-differences mode needs var_c, n_p and n_c")
    sd = pooled_sd(var_p, n_p, var_c, n_c)
    if not sd > 0:
        raise ValueError("pooled standard deviation must be positive")
    return (mean_c - mean_p) / sd


def effect_size_from_samples(after_p, before_p=None, after_c=None, before_c=None):
    """Cohen's d from per-unit weekly rates (simple mode when only ``after_p`` is given)."""
    after_p = np.asarray(after_p, dtype=float)
    if before_p is None:
        return effect_size(float(after_p.mean()), float(after_p.var(ddof=1)))
    dp = np.asarray(before_p, dtype=float) - after_p
    dc = np.asarray(before_c, dtype=float) - np.asarray(after_c, dtype=float)
    return effect_size(float(dp.mean()), float(dp.var(ddof=1)), float(dc.mean()), float(dc.var(ddof=1)),
                       len(dp), len(dc))
