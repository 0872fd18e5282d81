"""Signals, step functions, fit results and the synthetic scenarios.

Indexing follows the usual 1-based statistical convention at the public
surface: observation ``i`` sits at design point ``i/n`` and a change "at
index ``i``" means the levels at positions ``i`` and ``i + 1`` differ.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

INFINITE = math.inf

__all__ = [
    "INFINITE",
    "Series",
    "StepFunction",
    "FitResult",
    "Scenario",
    "eval_step",
    "olshen_signal",
    "shifted_cosine_signal",
    "standard_signals",
    "simulate",
]

OLSHEN_N = 497
OLSHEN_CHANGES = (138, 225, 242, 299, 308, 332)
OLSHEN_LEVELS = (-0.18, 0.08, 1.07, -0.53, 0.16, -0.69, -0.16)

_BLOCKS_T = (0.1, 0.13, 0.15, 0.23, 0.25, 0.40, 0.44, 0.65, 0.76, 0.78, 0.81)
_BLOCKS_H = (4.0, -5.0, 3.0, -4.0, 5.0, -4.2, 2.1, 4.3, -3.1, 2.1, -4.2)


def _frozen(a, dtype=float) -> np.ndarray:
    out = np.array(a, dtype=dtype, copy=True)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class Series:
    """Observations ``Y_1, ..., Y_n`` on the equidistant grid ``i/n``."""

    values: np.ndarray

    def __post_init__(self):
        v = _frozen(self.values)
        if v.ndim != 1:
            raise ValueError("series values must be one-dimensional")
        if v.size < 3:
            raise ValueError(f"series needs at least 3 observations, got {v.size}")
        if not np.all(np.isfinite(v)):
            raise ValueError("series values must be finite")
        object.__setattr__(self, "values", v)

    @property
    def n(self) -> int:
        return int(self.values.size)

    def __len__(self) -> int:
        return self.n


@dataclass(frozen=True)
class StepFunction:
    """Piecewise constant function on ``{1, ..., n}``.

    ``change_indices`` holds 1-based indices ``i`` with a jump between
    positions ``i`` and ``i + 1``; ``levels`` has one more entry than there
    are change-points.
    """

    n: int
    change_indices: np.ndarray
    levels: np.ndarray

    def __post_init__(self):
        cps = _frozen(self.change_indices, dtype=np.int64).reshape(-1)
        lv = _frozen(self.levels).reshape(-1)
        if self.n < 1:
            raise ValueError("n must be positive")
        if lv.size != cps.size + 1:
            raise ValueError("need exactly one more level than change-points")
        if cps.size:
            if cps[0] < 1 or cps[-1] > self.n - 1:
                raise ValueError("change indices must lie in {1, ..., n-1}")
            if np.any(np.diff(cps) <= 0):
                raise ValueError("change indices must be strictly increasing")
        if np.any(np.diff(lv) == 0):
            raise ValueError("adjacent levels must differ")
        object.__setattr__(self, "change_indices", cps)
        object.__setattr__(self, "levels", lv)

    @property
    def n_changes(self) -> int:
        return int(self.change_indices.size)

    @property
    def jump_sizes(self) -> np.ndarray:
        return np.diff(self.levels)

    def __call__(self, i: int) -> float:
        return eval_step(self, i)

    def to_vector(self) -> np.ndarray:
        bounds = np.concatenate(([0], self.change_indices, [self.n]))
        return np.repeat(self.levels, np.diff(bounds))

    @classmethod
    def from_vector(cls, values, atol: float = 0.0) -> "StepFunction":
        """Compress a length-``n`` level vector; jumps with ``|d| <= atol`` merge."""
        v = np.asarray(values, dtype=float).reshape(-1)
        d = np.diff(v)
        cps = np.flatnonzero(np.abs(d) > atol) + 1
        starts = np.concatenate(([0], cps))
        return cls(n=v.size, change_indices=cps, levels=v[starts])

    @classmethod
    def zero(cls, n: int) -> "StepFunction":
        return cls(n=n, change_indices=np.zeros(0, dtype=np.int64), levels=[0.0])


def eval_step(f: StepFunction, i: int) -> float:
    """Level of the segment containing the 1-based index ``i``."""
    if not 1 <= i <= f.n:
        raise IndexError(f"index {i} outside 1..{f.n}")
    k = int(np.searchsorted(f.change_indices, i, side="left"))
    return float(f.levels[k])


@dataclass(frozen=True)
class FitResult:
    f_hat: StepFunction
    g_hat: np.ndarray
    h_hat: np.ndarray
    bandwidth: float
    lam: float
    cv_score: Optional[float] = None
    diagnostics: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        g = _frozen(self.g_hat)
        object.__setattr__(self, "g_hat", g)
        object.__setattr__(self, "h_hat", _frozen(self.h_hat))
        if g.size != self.f_hat.n or self.h_hat.size != g.size:
            raise ValueError("f_hat, g_hat and h_hat must share length n")

    @property
    def change_indices(self) -> np.ndarray:
        return self.f_hat.change_indices


@dataclass(frozen=True)
class Scenario:
    """A true signal sampled at ``i/n`` with its change-points and noise level."""

    name: str
    signal: np.ndarray
    true_changes: np.ndarray
    noise_sd: float
    params: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "signal", _frozen(self.signal))
        tc = _frozen(self.true_changes, dtype=np.int64)
        if tc.size and (np.any(np.diff(tc) <= 0) or tc[0] < 1 or tc[-1] > self.n - 1):
            raise ValueError("true changes must be strictly increasing in {1, ..., n-1}")
        object.__setattr__(self, "true_changes", tc)
        if not self.noise_sd >= 0:
            raise ValueError("noise_sd must be nonnegative")

    @property
    def n(self) -> int:
        return int(self.signal.size)

    def h(self, i: int) -> float:
        """True signal ``h(i/n)`` at the 1-based index ``i``."""
        if not 1 <= i <= self.n:
            raise IndexError(f"index {i} outside 1..{self.n}")
        return float(self.signal[i - 1])


def olshen_signal(a: float, b: float) -> Scenario:
    """Six-change genomics-style signal plus a sinusoidal artefact."""
    if a < 0 or b < 0:
        raise ValueError("a and b must be nonnegative")
    n = OLSHEN_N
    f = StepFunction(n=n, change_indices=OLSHEN_CHANGES, levels=OLSHEN_LEVELS).to_vector()
    i = np.arange(1, n + 1)
    # x * n == i for x = i / n
    artefact = 0.25 * b * np.sin(a * np.pi * i)
    return Scenario(
        name="olshen",
        signal=f + artefact,
        true_changes=OLSHEN_CHANGES,
        noise_sd=0.2,
        params={"a": a, "b": b},
    )


def shifted_cosine_signal(a: float) -> Scenario:
    """Cosine with a unit jump at 1/2 whose right branch is phase shifted."""
    if not 0 <= a <= 0.5:
        raise ValueError("a must lie in [0, 0.5]")
    n = 200
    x = np.arange(1, n + 1) / n
    left = np.cos(2 * np.pi * x)
    right = 1 + np.cos(2 * np.pi * x + a * np.pi) - (np.cos((1 + a) * np.pi) - np.cos(np.pi))
    h = np.where(x < 0.5, left, right)
    # x < 1/2 holds for i <= 99, so the jump sits between 99 and 100
    return Scenario(
        name="shifted_cosine",
        signal=h,
        true_changes=[n // 2 - 1],
        noise_sd=0.3,
        params={"a": a},
    )


def _change_index(t: float, n: int) -> int:
    # first i with i/n >= t starts the new segment
    return int(math.ceil(t * n - 1e-9)) - 1


def standard_signals(name: str, n: int, a: float = 4.0) -> Scenario:
    """Donoho-Johnstone ``blocks`` or ``heavisine`` with noise sd ``sd(h) / a``."""
    if n < 3:
        raise ValueError("n must be at least 3")
    if a <= 0:
        raise ValueError("a must be positive")
    x = np.arange(1, n + 1) / n
    if name == "blocks":
        h = np.zeros(n)
        for t, jump in zip(_BLOCKS_T, _BLOCKS_H):
            h += jump * (x >= t)
        changes = sorted({_change_index(t, n) for t in _BLOCKS_T})
    elif name == "heavisine":
        h = 4 * np.sin(4 * np.pi * x) - np.where(x >= 0.3, 1.0, -1.0) - np.where(x >= 0.72, -1.0, 1.0)
        changes = [_change_index(0.3, n), _change_index(0.72, n)]
    else:
        raise ValueError(f"unsupported signal {name!r}; choose 'blocks' or 'heavisine'")
    changes = [c for c in changes if 1 <= c <= n - 1]
    return Scenario(
        name=name,
        signal=h,
        true_changes=changes,
        noise_sd=float(np.std(h, ddof=1) / a),
        params={"a": a, "n": n},
    )


def simulate(sc: Scenario, seed: int) -> Series:
    rng = np.random.default_rng(seed)
    noise = rng.normal(0.0, sc.noise_sd, size=sc.n) if sc.noise_sd > 0 else np.zeros(sc.n)
    return Series(sc.signal + noise)
