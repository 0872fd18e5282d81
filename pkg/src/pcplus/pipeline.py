"""The three-step piecewise-constant-plus-smooth estimator.

1. modified fused Lasso on ``(I - S) Y`` with ``f_1 = 0``;
2. ``g = S (Y - f)``, then PELT on ``Y - g`` re-estimates the change set;
3. unpenalised least squares restricted to those changes, ``g = S (Y - f)``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, replace
from typing import Iterable, Iterator, Optional

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve

from .lasso import BandedDesign, LassoSolution, build_design, lasso_path, solve_lasso
from .model import INFINITE, FitResult, Series, StepFunction
from .pelt import PeltConfig, pelt, sic_penalty
from .smoother import KernelSpec, SmootherMatrix, apply_smoother, build_kernel_smoother, build_spline_smoother

__all__ = [
    "PipelineConfig",
    "make_smoother",
    "step1_modified_fused_lasso",
    "step2_pelt_refit",
    "step3_restricted_ls",
    "fit",
    "fit_path",
    "ZERO_JUMP",
]

ZERO_JUMP = 1e-10
RIDGE_JITTER = 1e-10


@dataclass(frozen=True)
class PipelineConfig:
    """Tuning parameters; for ``smoother_kind="spline"`` the bandwidth is the
    roughness penalty ``mu``."""

    bandwidth: float
    lam: float
    smoother_kind: str = "kernel"
    kernel: str = "epanechnikov"
    pelt_penalty_override: Optional[float] = None
    literal_sd_penalty: bool = False

    def __post_init__(self):
        if not self.lam >= 0:
            raise ValueError("lambda must be nonnegative")
        if not self.bandwidth > 0:
            raise ValueError("bandwidth must be positive or INFINITE")
        if self.smoother_kind not in ("kernel", "spline"):
            raise ValueError(f"unknown smoother kind {self.smoother_kind!r}")
        if self.pelt_penalty_override is not None and not self.pelt_penalty_override > 0:
            raise ValueError("PELT penalty override must be positive")


def _values(Y) -> np.ndarray:
    if isinstance(Y, Series):
        return Y.values
    return Series(Y).values


def make_smoother(n: int, cfg: PipelineConfig) -> SmootherMatrix:
    if cfg.smoother_kind == "spline" and not math.isinf(cfg.bandwidth):
        return build_spline_smoother(n, cfg.bandwidth)
    return build_kernel_smoother(n, KernelSpec(cfg.bandwidth, cfg.kernel))


def _step_from_jumps(n: int, cols, jumps) -> StepFunction:
    cols = np.asarray(cols, dtype=np.int64)
    jumps = np.asarray(jumps, dtype=float)
    keep = np.abs(jumps) > ZERO_JUMP
    cols, jumps = cols[keep], jumps[keep]
    return StepFunction(n=n, change_indices=cols + 1, levels=np.concatenate(([0.0], np.cumsum(jumps))))


def _lasso_step(y, S, cfg, design=None, warm_start=None, **solver_kw):
    D = design if design is not None else build_design(S, y)
    sol = solve_lasso(D, cfg.lam, warm_start, **solver_kw)
    act = sol.active_set
    return _step_from_jumps(y.size, act, sol.beta[act]), sol, D


def step1_modified_fused_lasso(Y, cfg: PipelineConfig, smoother: Optional[SmootherMatrix] = None) -> StepFunction:
    y = _values(Y)
    S = smoother if smoother is not None else make_smoother(y.size, cfg)
    f, _, _ = _lasso_step(y, S, cfg)
    return f


def step2_pelt_refit(Y, g_hat, cfg: PipelineConfig, penalty: Optional[float] = None) -> StepFunction:
    """PELT on ``Y - g_hat``; the penalty defaults to the SIC penalty of ``Y``."""
    y = _values(Y)
    g = np.asarray(g_hat, dtype=float)
    if g.shape != y.shape:
        raise ValueError("g_hat must have the same length as Y")
    if cfg.pelt_penalty_override is not None:
        penalty = cfg.pelt_penalty_override
    elif penalty is None:
        penalty = sic_penalty(y, literal_sd=cfg.literal_sd_penalty)
    return pelt(y - g, PeltConfig(penalty))


def _restricted_ls(D: BandedDesign, cols) -> np.ndarray:
    cols = np.asarray(cols, dtype=np.int64)
    if cols.size == 0:
        return np.zeros(0)
    M = D.gram(cols)
    v = D.rmatvec(D.centred_response())[cols]
    try:
        return cho_solve(cho_factor(M), v)
    except LinAlgError:
        warnings.warn("restricted least squares is singular; adding ridge jitter", RuntimeWarning)
        jitter = RIDGE_JITTER * max(1.0, float(np.mean(np.diag(M))))
        return np.linalg.solve(M + jitter * np.eye(cols.size), v)


def step3_restricted_ls(
    Y, J_hat, cfg: PipelineConfig, smoother: Optional[SmootherMatrix] = None, design: Optional[BandedDesign] = None
):
    """Unpenalised refit with changes exactly at ``J_hat`` (1-based indices).

    Returns ``(f_hat, g_hat)`` with ``g_hat = S (Y - f_hat)``.
    """
    y = _values(Y)
    n = y.size
    J = np.asarray(J_hat, dtype=np.int64).reshape(-1)
    if J.size and (np.any(np.diff(J) <= 0) or J[0] < 1 or J[-1] > n - 1):
        raise ValueError("J_hat must be strictly increasing interior indices")
    S = smoother if smoother is not None else make_smoother(n, cfg)
    D = design if design is not None else build_design(S, y)
    jumps = _restricted_ls(D, J - 1)
    f = _step_from_jumps(n, J - 1, jumps)
    g = apply_smoother(S, y - f.to_vector())
    return f, g


def _finish(y, S, D, sol: LassoSolution, f1: StepFunction, cfg, penalty, cache=None) -> FitResult:
    g1 = apply_smoother(S, y - f1.to_vector())
    f2 = step2_pelt_refit(y, g1, cfg, penalty)
    key = f2.change_indices.tobytes()
    if cache is not None and key in cache:
        f3, g3 = cache[key]
    else:
        f3, g3 = step3_restricted_ls(y, f2.change_indices, cfg, smoother=S, design=D)
        if cache is not None:
            cache[key] = (f3, g3)
    fv = f3.to_vector()
    return FitResult(
        f_hat=f3,
        g_hat=g3,
        h_hat=fv + g3,
        bandwidth=S.bandwidth if cfg.smoother_kind == "spline" else cfg.bandwidth,
        lam=cfg.lam,
        diagnostics={
            "step1_changes": f1.change_indices.tolist(),
            "step2_changes": f2.change_indices.tolist(),
            "lasso_kkt": sol.kkt_residual,
            "lasso_sweeps": sol.sweeps,
            "half_bandwidth": S.half_bandwidth,
        },
    )


def _lasso_only(y, S, sol: LassoSolution, f1: StepFunction, cfg) -> FitResult:
    fv = f1.to_vector()
    g1 = apply_smoother(S, y - fv)
    return FitResult(
        f_hat=f1,
        g_hat=g1,
        h_hat=fv + g1,
        bandwidth=S.bandwidth if cfg.smoother_kind == "spline" else cfg.bandwidth,
        lam=cfg.lam,
        diagnostics={"lasso_kkt": sol.kkt_residual, "lasso_sweeps": sol.sweeps, "half_bandwidth": S.half_bandwidth},
    )


def fit(Y, cfg: PipelineConfig, *, post_filter: bool = True) -> FitResult:
    """Run all three steps for fixed ``(bandwidth, lambda)``.

    With ``post_filter=False`` only the modified fused Lasso and the smooth
    re-estimate ``g = S (Y - f)`` are computed.
    """
    y = _values(Y)
    S = make_smoother(y.size, cfg)
    f1, sol, D = _lasso_step(y, S, cfg)
    if not post_filter:
        return _lasso_only(y, S, sol, f1, cfg)
    return _finish(y, S, D, sol, f1, cfg, None)


def fit_path(
    Y, cfg: PipelineConfig, lambdas: Iterable[float], *, post_filter: bool = True, **solver_kw
) -> Iterator[FitResult]:
    """Fits along a lambda sequence sharing one design.

    The Lasso solutions come from one exact homotopy pass over the whole
    sequence.  ``cfg.lam`` is ignored; every lambda in ``lambdas`` gets its
    own fit, in the order given.
    """
    y = _values(Y)
    S = make_smoother(y.size, cfg)
    D = build_design(S, y)
    penalty = None
    if cfg.pelt_penalty_override is None:
        penalty = sic_penalty(y, literal_sd=cfg.literal_sd_penalty)
    lambdas = [float(l) for l in lambdas]
    sols = lasso_path(D, lambdas, **solver_kw)
    cache = {}
    for lam, sol in zip(lambdas, sols):
        c = replace(cfg, lam=lam)
        act = sol.active_set
        f1 = _step_from_jumps(y.size, act, sol.beta[act])
        if not post_filter:
            yield _lasso_only(y, S, sol, f1, c)
            continue
        yield _finish(y, S, D, sol, f1, c, penalty, cache)
