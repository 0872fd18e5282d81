"""Joint V-fold cross-validation of the bandwidth and the fused-Lasso penalty."""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .lasso import ConvergenceError, build_design, lambda_max
from .model import INFINITE, FitResult, Series
from .pipeline import PipelineConfig, fit, fit_path, make_smoother
from .smoother import apply_smoother

__all__ = [
    "CvGrid",
    "CvReport",
    "make_grid",
    "bandwidth_grid",
    "assign_folds",
    "neighbour_predict",
    "predict_holdout",
    "cross_validate",
    "cv_fit",
    "cross_validate_smoother",
    "loocv_kernel_bandwidth",
]

LAMBDA_RATIO = 1e-4


@dataclass(frozen=True)
class CvGrid:
    bandwidths: np.ndarray  # INFINITE first, then descending finite values
    lambdas: tuple  # one increasing-index (descending-value) array per bandwidth
    smoother_kind: str = "kernel"

    @property
    def shape(self):
        return (len(self.bandwidths), max(len(l) for l in self.lambdas))


@dataclass
class CvReport:
    scores: np.ndarray
    selected: tuple
    fold_assignment: np.ndarray
    grid: CvGrid
    loss: str = "l1"
    selected_index: tuple = (0, 0)
    failures: list = field(default_factory=list)

    @property
    def best_score(self) -> float:
        return float(self.scores[self.selected_index])


def bandwidth_grid(n: int, n_h: int = 30, include_infinite: bool = True) -> np.ndarray:
    """``n_h`` geometric values from 0.5 down to ``2.01/n`` (INFINITE first)."""
    if n_h < 2:
        raise ValueError("n_h must be at least 2")
    finite = np.geomspace(0.5, 2.01 / n, n_h)
    finite[0], finite[-1] = 0.5, 2.01 / n
    return np.concatenate(([INFINITE], finite)) if include_infinite else finite


def _spline_mu(n: int, h: float) -> float:
    # equivalent-kernel bandwidth of a smoothing spline scales like (mu / n)^(1/4)
    return INFINITE if math.isinf(h) else n * h**4


def _base_cfg(h, smoother_kind, kernel="epanechnikov", lam=0.0, **kw) -> PipelineConfig:
    bw = _spline_mu_or_h(h, smoother_kind, kw.pop("n", None))
    return PipelineConfig(bandwidth=bw, lam=lam, smoother_kind=smoother_kind, kernel=kernel, **kw)


def _spline_mu_or_h(h, smoother_kind, n):
    if smoother_kind == "spline":
        return _spline_mu(n, h)
    return h


def make_grid(
    n: int,
    n_h: int = 30,
    n_lambda: int = 30,
    Y=None,
    *,
    smoother_kind: str = "kernel",
    kernel: str = "epanechnikov",
    lambda_ratio: float = LAMBDA_RATIO,
    bandwidths: Optional[Sequence[float]] = None,
) -> CvGrid:
    """Bandwidth grid plus, per bandwidth, a geometric lambda grid from the
    null-model threshold of the full-data design down to ``ratio`` times it.

    ``bandwidths`` replaces the default geometric bandwidth grid.
    """
    if n_lambda < 2:
        raise ValueError("n_lambda must be at least 2")
    if bandwidths is None:
        bws = bandwidth_grid(n, n_h)
    else:
        bws = np.asarray(sorted((float(b) for b in bandwidths), reverse=True), dtype=float)
        if bws.size == 0 or not np.all(bws > 0):
            raise ValueError("bandwidths must be positive or INFINITE")
    if Y is None:
        raise ValueError("the lambda grids need the observations Y")
    y = np.asarray(getattr(Y, "values", Y), dtype=float)
    if y.size != n:
        raise ValueError("Y does not have length n")
    lams = []
    for h in bws:
        cfg = _base_cfg(h, smoother_kind, kernel, n=n)
        lmax = lambda_max(build_design(make_smoother(n, cfg), y))
        if not lmax > 0:
            lmax = 1.0
        lams.append(np.geomspace(lmax, lmax * lambda_ratio, n_lambda))
    return CvGrid(bandwidths=bws, lambdas=tuple(lams), smoother_kind=smoother_kind)


def assign_folds(n: int, V: int) -> np.ndarray:
    """Interleaved folds: 1-based index ``i`` goes to fold ``((i-1) mod V) + 1``."""
    if V < 2:
        raise ValueError("need at least 2 folds")
    if V > n:
        raise ValueError(f"cannot split {n} observations into {V} folds")
    return np.arange(n) % V + 1


def neighbour_predict(train_idx, fitted, holdout_idx) -> np.ndarray:
    """Mean of the fitted values at the nearest training index on each side.

    Indices are 0-based positions in the full series; ``train_idx`` sorted.
    """
    train_idx = np.asarray(train_idx)
    fitted = np.asarray(fitted, dtype=float)
    hold = np.asarray(holdout_idx)
    pos = np.searchsorted(train_idx, hold)
    left = np.clip(pos - 1, 0, train_idx.size - 1)
    right = np.clip(pos, 0, train_idx.size - 1)
    has_left = pos > 0
    has_right = pos < train_idx.size
    both = has_left & has_right
    return np.where(both, 0.5 * (fitted[left] + fitted[right]), np.where(has_left, fitted[left], fitted[right]))


def predict_holdout(fit_on_train: FitResult, holdout_indices, train_indices=None) -> np.ndarray:
    """Hold-out predictions from a fit on the complement (1-based indices)."""
    hold = np.asarray(holdout_indices, dtype=np.int64) - 1
    if train_indices is None:
        n = fit_on_train.h_hat.size + hold.size
        mask = np.ones(n, dtype=bool)
        mask[hold] = False
        train = np.flatnonzero(mask)
    else:
        train = np.asarray(train_indices, dtype=np.int64) - 1
    return neighbour_predict(train, fit_on_train.h_hat, hold)


def _loss(err: np.ndarray, loss: str) -> float:
    if loss == "l1":
        return float(np.abs(err).sum())
    if loss == "l2":
        return float((err * err).sum())
    raise ValueError(f"unknown loss {loss!r}")


def _cell_job(y, folds, fold, b, h, lams, smoother_kind, kernel, loss, solver_kw, post_filter=True):
    train = np.flatnonzero(folds != fold)
    hold = np.flatnonzero(folds == fold)
    ytr = y[train]
    out = np.full(len(lams), np.inf)
    failures = []
    cfg = _base_cfg(h, smoother_kind, kernel, n=ytr.size)
    try:
        for k, res in enumerate(fit_path(ytr, cfg, lams, post_filter=post_filter, **solver_kw)):
            pred = neighbour_predict(train, res.h_hat, hold)
            out[k] = _loss(y[hold] - pred, loss)
    except (ConvergenceError, np.linalg.LinAlgError, ValueError) as exc:
        failures.append((fold, b, str(exc)))
    return fold, b, out, failures


def _select(scores: np.ndarray, bandwidths) -> tuple:
    """argmin; ties prefer the larger bandwidth, then the larger lambda."""
    best = np.min(scores)
    cells = np.argwhere(scores == best)
    # bandwidths are stored INFINITE-first and descending, lambdas descending
    b, k = min(((int(b), int(k)) for b, k in cells), key=lambda c: (c[0], c[1]))
    return b, k


def cross_validate(
    Y,
    grid: Optional[CvGrid] = None,
    V: int = 5,
    *,
    loss: str = "l1",
    kernel: str = "epanechnikov",
    threads: int = 1,
    solver_kw: Optional[dict] = None,
    post_filter: bool = True,
) -> CvReport:
    """Score every ``(bandwidth, lambda)`` cell by the mean hold-out loss."""
    y = np.asarray(getattr(Y, "values", Y), dtype=float)
    n = y.size
    if grid is None:
        grid = make_grid(n, Y=y)
    folds = assign_folds(n, V)
    nb, nl = grid.shape
    totals = np.zeros((nb, nl))
    failures = []
    jobs = [
        (y, folds, fold, b, h, grid.lambdas[b], grid.smoother_kind, kernel, loss, solver_kw or {}, post_filter)
        for fold in range(1, V + 1)
        for b, h in enumerate(grid.bandwidths)
    ]
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            results = list(ex.map(lambda a: _cell_job(*a), jobs))
    else:
        results = [_cell_job(*a) for a in jobs]
    # reduce in job order, independent of completion order
    for fold, b, out, fails in results:
        totals[b, : out.size] += out
        if out.size < nl:
            totals[b, out.size :] = np.inf
        failures.extend(fails)
    scores = totals / n
    b, k = _select(scores, grid.bandwidths)
    return CvReport(
        scores=scores,
        selected=(float(grid.bandwidths[b]), float(grid.lambdas[b][k])),
        fold_assignment=folds,
        grid=grid,
        loss=loss,
        selected_index=(b, k),
        failures=failures,
    )


def cv_fit(
    Y,
    *,
    V: int = 5,
    n_h: int = 30,
    n_lambda: int = 30,
    loss: str = "l1",
    smoother_kind: str = "kernel",
    kernel: str = "epanechnikov",
    bandwidths: Optional[Sequence[float]] = None,
    threads: int = 1,
    lambda_ratio: float = LAMBDA_RATIO,
    post_filter: bool = True,
):
    """Cross-validate, then fit the full series at the selected cell.

    ``bandwidths`` replaces the bandwidth grid (e.g. ``[INFINITE]`` for the
    ordinary fused Lasso with lambda chosen by cross-validation).
    """
    y = np.asarray(getattr(Y, "values", Y), dtype=float)
    n = y.size
    grid = make_grid(
        n, n_h, n_lambda, y, smoother_kind=smoother_kind, kernel=kernel, lambda_ratio=lambda_ratio, bandwidths=bandwidths
    )
    report = cross_validate(y, grid, V, loss=loss, kernel=kernel, threads=threads, post_filter=post_filter)
    h, lam = report.selected
    cfg = _base_cfg(h, smoother_kind, kernel, lam=lam, n=n)
    res = fit(y, cfg, post_filter=post_filter)
    res = FitResult(
        f_hat=res.f_hat,
        g_hat=res.g_hat,
        h_hat=res.h_hat,
        bandwidth=h,
        lam=lam,
        cv_score=report.best_score,
        diagnostics=res.diagnostics,
    )
    return res, report


# ---------------------------------------------------------------------------
# kernel smoothing baselines


def cross_validate_smoother(
    Y,
    bandwidths: Optional[Sequence[float]] = None,
    V: int = 5,
    *,
    loss: str = "l1",
    kernel: str = "epanechnikov",
):
    """Bandwidth-only CV of plain kernel smoothing with the same folds and
    neighbour-average hold-out rule.  Returns ``(scores, selected_bandwidth)``."""
    y = np.asarray(getattr(Y, "values", Y), dtype=float)
    n = y.size
    bws = bandwidth_grid(n) if bandwidths is None else np.asarray(bandwidths, dtype=float)
    folds = assign_folds(n, V)
    scores = np.zeros(bws.size)
    for b, h in enumerate(bws):
        total = 0.0
        for fold in range(1, V + 1):
            train = np.flatnonzero(folds != fold)
            hold = np.flatnonzero(folds == fold)
            try:
                S = make_smoother(train.size, PipelineConfig(bandwidth=h, lam=0.0, kernel=kernel))
            except ValueError:
                total = np.inf
                break
            fitted = apply_smoother(S, y[train])
            total += _loss(y[hold] - neighbour_predict(train, fitted, hold), loss)
        scores[b] = total / n
    return scores, float(bws[int(np.argmin(scores))])


def loocv_kernel_bandwidth(Y, bandwidths: Optional[Sequence[float]] = None, *, loss: str = "l2"):
    """Classical leave-one-out Nadaraya-Watson bandwidth selection.

    The prediction at ``i`` re-normalises row ``i`` of ``S`` without its
    diagonal entry.  Returns ``(scores, selected_bandwidth)``.
    """
    y = np.asarray(getattr(Y, "values", Y), dtype=float)
    n = y.size
    bws = bandwidth_grid(n, include_infinite=False) if bandwidths is None else np.asarray(bandwidths, dtype=float)
    scores = np.full(bws.size, np.inf)
    for b, h in enumerate(bws):
        try:
            S = make_smoother(n, PipelineConfig(bandwidth=h, lam=0.0))
        except ValueError:
            continue
        if S.is_infinite:
            pred = (y.sum() - y) / (n - 1)
        else:
            L = S.half_bandwidth
            diag = S.weights[:, L]
            pred = (apply_smoother(S, y) - diag * y) / (1.0 - diag)
        scores[b] = _loss(y - pred, loss) / n
    return scores, float(bws[int(np.nanargmin(scores))])
