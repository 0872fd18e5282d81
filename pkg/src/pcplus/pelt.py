"""Penalised optimal partitioning with PELT pruning, and its default penalty."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numba
import numpy as np
from scipy.stats import norm

from .model import StepFunction

__all__ = ["PeltConfig", "estimate_sd", "sic_penalty", "pelt", "segmentation_cost", "SD_FLOOR"]

SD_FLOOR = 1e-12
_IQR_SCALE = 2.0 * norm.ppf(0.75) * math.sqrt(2.0)


@dataclass(frozen=True)
class PeltConfig:
    penalty: float
    min_segment_length: int = 1

    def __post_init__(self):
        if not self.penalty > 0:
            raise ValueError("penalty must be positive")
        if self.min_segment_length < 1:
            raise ValueError("min_segment_length must be at least 1")


def estimate_sd(Y) -> float:
    """Difference-based robust noise sd: ``IQR(diff Y) / (2 q_.75 sqrt 2)``.

    Quartiles use the median-unbiased definition so results are
    reproducible bit for bit across numpy versions.
    """
    y = np.asarray(getattr(Y, "values", Y), dtype=float)
    if y.size < 3:
        raise ValueError("need at least 3 observations")
    d = np.diff(y)
    q1, q3 = np.quantile(d, [0.25, 0.75], method="median_unbiased")
    return float((q3 - q1) / _IQR_SCALE)


def sic_penalty(Y, *, literal_sd: bool = False) -> float:
    """``2 sigma^2 log n`` on the RSS scale (``2 sigma log n`` if ``literal_sd``)."""
    y = np.asarray(getattr(Y, "values", Y), dtype=float)
    sd = max(estimate_sd(y), SD_FLOOR)
    scale = sd if literal_sd else sd * sd
    return 2.0 * scale * math.log(y.size)


@numba.njit(cache=True)
def _pelt_core(z, penalty, min_len, prune):
    n = z.size
    cs = np.zeros(n + 1)
    cs2 = np.zeros(n + 1)
    for i in range(n):
        cs[i + 1] = cs[i] + z[i]
        cs2[i + 1] = cs2[i] + z[i] * z[i]
    F = np.full(n + 1, np.inf)
    cnt = np.zeros(n + 1, dtype=np.int64)
    last = np.zeros(n + 1, dtype=np.int64)
    F[0] = -penalty
    cand = np.empty(n + 1, dtype=np.int64)
    vals = np.empty(n + 1)
    ncand = 0
    for t in range(min_len, n + 1):
        # s = t - min_len becomes admissible
        s_new = t - min_len
        if s_new == 0 or (s_new >= min_len and np.isfinite(F[s_new])):
            cand[ncand] = s_new
            ncand += 1
        best = np.inf
        best_cnt = 0
        best_s = -1
        for k in range(ncand):
            s = cand[k]
            m = t - s
            seg = cs[t] - cs[s]
            c = cs2[t] - cs2[s] - seg * seg / m
            if c < 0.0:
                c = 0.0
            v = F[s] + c + penalty
            vals[k] = v
            nc = cnt[s] + (1 if s > 0 else 0)
            if v < best or (v == best and (nc < best_cnt or (nc == best_cnt and s < best_s))):
                best = v
                best_cnt = nc
                best_s = s
        F[t] = best
        cnt[t] = best_cnt
        last[t] = best_s
        if prune:
            margin = 1e-12 * (abs(best) + penalty)
            keep = 0
            for k in range(ncand):
                # F(s) + C(s, t) > F(t) can never be optimal later
                if vals[k] - penalty <= best + margin:
                    cand[keep] = cand[k]
                    keep += 1
            ncand = keep
    return F, last


def pelt(Z, cfg, *, prune: bool = True) -> StepFunction:
    """Exact minimiser of ``sum RSS(segment) + penalty * #changes``.

    Ties prefer fewer change-points, then the earlier last change.
    """
    if not isinstance(cfg, PeltConfig):
        cfg = PeltConfig(float(cfg))
    z = np.ascontiguousarray(getattr(Z, "values", Z), dtype=float)
    n = z.size
    if n < 2:
        raise ValueError("need at least 2 observations")
    if cfg.min_segment_length > n:
        return StepFunction(n=n, change_indices=[], levels=[z.mean()])
    F, last = _pelt_core(z, float(cfg.penalty), int(cfg.min_segment_length), prune)
    cps = []
    t = n
    while t > 0:
        s = int(last[t])
        if s > 0:
            cps.append(s)
        t = s
    cps = np.array(cps[::-1], dtype=np.int64)
    bounds = np.concatenate(([0], cps, [n]))
    levels = np.array([z[a:b].mean() for a, b in zip(bounds[:-1], bounds[1:])])
    # equal means give no change; merge them to keep levels distinct
    keep = np.flatnonzero(np.diff(levels) != 0)
    if keep.size != cps.size:
        return StepFunction.from_vector(np.repeat(levels, np.diff(bounds)))
    return StepFunction(n=n, change_indices=cps, levels=levels)


def segmentation_cost(Z, change_indices, penalty: float) -> float:
    """Objective of a segmentation, each segment's RSS computed directly."""
    z = np.asarray(Z, dtype=float)
    bounds = np.concatenate(([0], np.asarray(change_indices, dtype=int), [z.size]))
    total = 0.0
    for a, b in zip(bounds[:-1], bounds[1:]):
        seg = z[a:b]
        total += float(np.sum((seg - seg.mean()) ** 2))
    return total + penalty * (bounds.size - 2)
