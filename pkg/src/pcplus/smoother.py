"""Row-stochastic smoothing matrices and their application.

Kernel smoothers are stored by rows: ``weights[i, k]`` is the entry
``S[i, i - L + k]`` for ``k = 0, ..., 2L``.  The infinite bandwidth is the
limit in which every kernel weight is equal, i.e. ``S = 11^T / n``; it is
kept as a sentinel without storage.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Union

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.linalg import solveh_banded

from .model import INFINITE

__all__ = [
    "KernelSpec",
    "SmootherMatrix",
    "epanechnikov",
    "build_kernel_smoother",
    "build_spline_smoother",
    "apply_smoother",
    "half_bandwidth",
]


def epanechnikov(x):
    """``0.75 (1 - x^2)`` on ``[-1, 1]``, zero outside."""
    x = np.asarray(x, dtype=float)
    out = np.where(np.abs(x) <= 1.0, 0.75 * (1.0 - x * x), 0.0)
    return out if out.ndim else float(out)


_KERNELS = {"epanechnikov": epanechnikov}


@dataclass(frozen=True)
class KernelSpec:
    bandwidth: float
    kind: Union[str, Callable] = "epanechnikov"

    def __post_init__(self):
        if not (self.bandwidth > 0):
            raise ValueError("bandwidth must be positive or INFINITE")
        if isinstance(self.kind, str) and self.kind not in _KERNELS:
            raise ValueError(f"unknown kernel {self.kind!r}")

    @property
    def weight_function(self) -> Callable:
        return _KERNELS[self.kind] if isinstance(self.kind, str) else self.kind


@dataclass(frozen=True)
class SmootherMatrix:
    n: int
    half_bandwidth: int
    kind: str  # "kernel", "spline" or "infinite"
    weights: Optional[np.ndarray] = None
    dense: Optional[np.ndarray] = None
    bandwidth: float = INFINITE

    @property
    def L(self) -> int:
        return self.half_bandwidth

    @property
    def is_infinite(self) -> bool:
        return self.kind == "infinite"

    def to_dense(self) -> np.ndarray:
        n = self.n
        if self.kind == "infinite":
            return np.full((n, n), 1.0 / n)
        if self.kind == "spline":
            return np.array(self.dense)
        L = self.half_bandwidth
        out = np.zeros((n, n))
        for k in range(2 * L + 1):
            d = k - L
            rows = np.arange(max(0, -d), min(n, n - d))
            out[rows, rows + d] = self.weights[rows, k]
        return out

    def row_sums(self) -> np.ndarray:
        if self.kind == "infinite":
            return np.ones(self.n)
        if self.kind == "spline":
            return self.dense.sum(axis=1)
        return self.weights.sum(axis=1)

    def __matmul__(self, v):
        return apply_smoother(self, v)


def half_bandwidth(n: int, bandwidth: float) -> int:
    # tolerate representation error in n * h, e.g. 0.3 * 10
    return int(math.floor(n * bandwidth + 1e-9))


def build_kernel_smoother(n: int, spec: Union[KernelSpec, float]) -> SmootherMatrix:
    """Nadaraya-Watson weights ``s((j - i)/(nh))`` normalised per row."""
    if not isinstance(spec, KernelSpec):
        spec = KernelSpec(float(spec))
    if n < 3:
        raise ValueError("n must be at least 3")
    h = spec.bandwidth
    if math.isinf(h):
        return SmootherMatrix(n=n, half_bandwidth=n - 1, kind="infinite")
    L = min(half_bandwidth(n, h), n - 1)
    offsets = np.arange(-L, L + 1)
    base = np.asarray(spec.weight_function(offsets / (n * h)), dtype=float)
    if np.any(base < 0):
        raise ValueError("kernel weights must be nonnegative")
    if L == 0 or not np.any(base[offsets != 0] > 0):
        raise ValueError(
            f"bandwidth {h} too small for n={n}: every row reduces to the identity"
        )
    i = np.arange(n)[:, None]
    cols = i + offsets[None, :]
    w = np.where((cols >= 0) & (cols < n), base[None, :], 0.0)
    w /= w.sum(axis=1, keepdims=True)
    w.setflags(write=False)
    return SmootherMatrix(n=n, half_bandwidth=L, kind="kernel", weights=w, bandwidth=h)


def _spline_system(n: int, mu: float):
    """Banded ``R + mu Q^T Q`` of the Reinsch form on the grid ``i/n``."""
    step = 1.0 / n
    m = n - 2
    # Q: n x m with columns (1, -2, 1) / step; R: tridiagonal (2/3, 1/6) * step
    r_diag = np.full(m, 2.0 * step / 3.0)
    r_off = np.full(m - 1, step / 6.0)
    q2 = 1.0 / step**2
    qtq_diag = np.full(m, 6.0 * q2)
    qtq_off1 = np.full(m - 1, -4.0 * q2)
    qtq_off2 = np.full(m - 2, 1.0 * q2)
    ab = np.zeros((3, m))
    ab[2] = r_diag + mu * qtq_diag
    ab[1, 1:] = r_off + mu * qtq_off1
    ab[0, 2:] = mu * qtq_off2
    return ab


def _qt(v: np.ndarray, n: int) -> np.ndarray:
    return (v[:-2] - 2.0 * v[1:-1] + v[2:]) * n


def _q(gamma: np.ndarray, n: int) -> np.ndarray:
    out = np.zeros((n,) + gamma.shape[1:])
    out[:-2] += gamma
    out[1:-1] -= 2.0 * gamma
    out[2:] += gamma
    return out * n


def build_spline_smoother(n: int, mu: float) -> SmootherMatrix:
    """Hat matrix of the natural cubic smoothing spline with knots at ``i/n``.

    Minimises ``sum (Y_i - g(i/n))^2 + mu * int g''^2``; uses the Reinsch
    form ``Z = I - mu Q (R + mu Q^T Q)^{-1} Q^T`` with a banded Cholesky.
    """
    if not mu > 0:
        raise ValueError("mu must be positive")
    if n < 3:
        raise ValueError("n must be at least 3")
    ab = _spline_system(n, mu)
    eye = np.eye(n)
    gamma = solveh_banded(ab, _qt(eye, n))
    Z = eye - mu * _q(gamma, n)
    Z = 0.5 * (Z + Z.T)
    Z.setflags(write=False)
    return SmootherMatrix(n=n, half_bandwidth=n - 1, kind="spline", dense=Z, bandwidth=mu)


def apply_smoother(S: SmootherMatrix, v) -> np.ndarray:
    """``S v`` by windowed weighted sums, ``O(nL)`` for kernel smoothers."""
    v = np.asarray(v, dtype=float)
    if v.shape[0] != S.n:
        raise ValueError(f"vector of length {v.shape[0]} does not match n={S.n}")
    if S.kind == "infinite":
        return np.broadcast_to(v.mean(axis=0), v.shape).copy()
    if S.kind == "spline":
        return S.dense @ v
    L = S.half_bandwidth
    if v.ndim == 1:
        padded = np.concatenate((np.zeros(L), v, np.zeros(L)))
        return np.einsum("ik,ik->i", S.weights, sliding_window_view(padded, 2 * L + 1))
    return np.column_stack([apply_smoother(S, v[:, k]) for k in range(v.shape[1])])
