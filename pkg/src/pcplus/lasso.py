"""Transformed fused-Lasso designs and their coordinate-descent solvers.

The modified fused Lasso with ``f_1 = 0`` is the Lasso problem

    min_beta ||(I - S) Y - (I - S) X beta||^2 + lam * ||beta||_1

where column ``j`` (0-based) of ``X`` is the step regressor with ones from
row ``j + 1`` on and ``beta_j = f_{j+2} - f_{j+1}`` is the jump after
(1-based) position ``j + 1``.

Two storage layouts exist.  ``"band"`` keeps column ``j`` as the rows
``lo[j], ..., lo[j] + width - 1`` (entries outside ``0..n-1`` are zero).
``"step"`` is the infinite-bandwidth case: raw step regressors plus an
unpenalised intercept, solved as a centred problem in ``O(n)`` per sweep.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numba
import numpy as np

from .smoother import SmootherMatrix

__all__ = [
    "BandedDesign",
    "LassoSolution",
    "ConvergenceError",
    "build_design",
    "build_filtered_design",
    "lambda_max",
    "solve_lasso",
    "lasso_path",
    "kkt_residual",
    "solve_group_fused",
    "group_objective",
]

KKT_TOL = 1e-8
STEP_TOL = 1e-7
MAX_SWEEPS = 100_000


class ConvergenceError(RuntimeError):
    def __init__(self, message, kkt_residual=float("nan"), beta=None):
        super().__init__(f"{message} (kkt residual {kkt_residual:.3g})")
        self.kkt_residual = kkt_residual
        self.beta = beta


@dataclass(frozen=True)
class BandedDesign:
    n: int
    kind: str  # "band" or "step"
    response: np.ndarray
    vals: Optional[np.ndarray] = None
    lo: Optional[np.ndarray] = None
    col_sq: Optional[np.ndarray] = None
    L: int = 0

    @property
    def n_cols(self) -> int:
        return self.n - 1

    @property
    def intercept(self) -> bool:
        return self.kind == "step"

    @property
    def width(self) -> int:
        return self.n if self.kind == "step" else self.vals.shape[1]

    def centred_response(self) -> np.ndarray:
        if self.kind == "step":
            return self.response - self.response.mean()
        return self.response

    def to_dense(self) -> np.ndarray:
        """Dense ``n x (n-1)`` matrix; raw step regressors for ``"step"``."""
        n = self.n
        if self.kind == "step":
            return np.tril(np.ones((n, n)), -1)[:, : n - 1]
        out = np.zeros((n, n - 1))
        rows = self.lo[:, None] + np.arange(self.vals.shape[1])[None, :]
        ok = (rows >= 0) & (rows < n)
        jj = np.broadcast_to(np.arange(n - 1)[:, None], rows.shape)
        out[rows[ok], jj[ok]] = self.vals[ok]
        return out

    def matvec(self, beta) -> np.ndarray:
        """``D beta``; for ``"step"`` the centred columns are used."""
        beta = np.asarray(beta, dtype=float)
        if self.kind == "step":
            cum = np.concatenate(([0.0], np.cumsum(beta)))
            return cum - cum.mean()
        return _band_matvec(self.vals, self.lo, self.n, beta)

    def rmatvec(self, r) -> np.ndarray:
        """``D^T r``; for ``"step"`` ``r`` is assumed centred."""
        r = np.asarray(r, dtype=float)
        if self.kind == "step":
            suffix = np.cumsum(r[::-1])[::-1]
            return suffix[1:] - (np.arange(self.n - 1, 0, -1) / self.n) * r.sum()
        return _band_rmatvec(self.vals, self.lo, r)

    def gram(self, cols: Sequence[int]) -> np.ndarray:
        """``D_J^T D_J`` for the 0-based columns ``cols`` (sorted)."""
        cols = np.asarray(cols, dtype=np.int64)
        if self.kind == "step":
            w = (self.n - 1 - cols).astype(float)
            wmax = np.minimum(w[:, None], w[None, :])
            return wmax - np.outer(w, w) / self.n
        return _band_gram(self.vals, self.lo, self.n, cols)


@dataclass(frozen=True)
class LassoSolution:
    beta: np.ndarray
    objective: float
    kkt_residual: float
    lam: float
    intercept: float = 0.0
    sweeps: int = 0

    @property
    def active_set(self) -> np.ndarray:
        return np.flatnonzero(self.beta)


# ---------------------------------------------------------------------------
# numba kernels


@numba.njit(cache=True)
def _band_matvec(vals, lo, n, beta):
    out = np.zeros(n)
    p, w = vals.shape
    for j in range(p):
        b = beta[j]
        if b == 0.0:
            continue
        base = lo[j]
        for t in range(max(0, -base), min(w, n - base)):
            out[base + t] += vals[j, t] * b
    return out


@numba.njit(cache=True)
def _band_rmatvec(vals, lo, r):
    n = r.size
    p, w = vals.shape
    out = np.zeros(p)
    for j in range(p):
        base = lo[j]
        acc = 0.0
        for t in range(max(0, -base), min(w, n - base)):
            acc += vals[j, t] * r[base + t]
        out[j] = acc
    return out


@numba.njit(cache=True)
def _band_gram(vals, lo, n, cols):
    k = cols.size
    w = vals.shape[1]
    G = np.zeros((k, k))
    for a in range(k):
        ja = cols[a]
        for b in range(a, k):
            jb = cols[b]
            # column supports are lo[j] .. lo[j] + w - 1
            start = max(max(lo[ja], lo[jb]), 0)
            stop = min(min(lo[ja], lo[jb]) + w, n)
            acc = 0.0
            for i in range(start, stop):
                acc += vals[ja, i - lo[ja]] * vals[jb, i - lo[jb]]
            G[a, b] = acc
            G[b, a] = acc
    return G


@numba.njit(cache=True)
def _band_coord(vals, lo, n, col_sq, half_lam, beta, r, j):
    base = lo[j]
    w = vals.shape[1]
    t0 = max(0, -base)
    t1 = min(w, n - base)
    g = 0.0
    for t in range(t0, t1):
        g += vals[j, t] * r[base + t]
    a = col_sq[j]
    if a <= 0.0:
        return 0.0
    bj = beta[j]
    z = g + a * bj
    if z > half_lam:
        new = (z - half_lam) / a
    elif z < -half_lam:
        new = (z + half_lam) / a
    else:
        new = 0.0
    d = new - bj
    if d != 0.0:
        for t in range(t0, t1):
            r[base + t] -= d * vals[j, t]
        beta[j] = new
    return abs(d)


@numba.njit(cache=True)
def _band_objective(r, beta, lam):
    return np.dot(r, r) + lam * np.sum(np.abs(beta))


@numba.njit(cache=True)
def _cd_band(vals, lo, n, col_sq, lam, beta, r, tol, max_sweeps, history):
    """Cyclic CD with active-set inner loops; returns sweeps used."""
    p = beta.size
    half_lam = 0.5 * lam
    sweeps = 0
    nhist = history.size
    while sweeps < max_sweeps:
        maxd = 0.0
        for j in range(p):
            d = _band_coord(vals, lo, n, col_sq, half_lam, beta, r, j)
            if d > maxd:
                maxd = d
        if sweeps < nhist:
            history[sweeps] = _band_objective(r, beta, lam)
        sweeps += 1
        if maxd <= tol * (1.0 + np.max(np.abs(beta))):
            break
        active = np.flatnonzero(beta)
        while sweeps < max_sweeps:
            maxd = 0.0
            for j in active:
                d = _band_coord(vals, lo, n, col_sq, half_lam, beta, r, j)
                if d > maxd:
                    maxd = d
            if sweeps < nhist:
                history[sweeps] = _band_objective(r, beta, lam)
            sweeps += 1
            if maxd <= tol * (1.0 + np.max(np.abs(beta))):
                break
    return sweeps


@numba.njit(cache=True)
def _step_sweep(A, wts, n, col_sq, half_lam, beta, idx, state):
    """One pass over ``idx`` (increasing) for the centred step design.

    ``state[0]`` carries ``sum_k w_k beta_k``.  Inactive coordinates outside
    ``idx`` are zero, so prefix and suffix sums only need ``idx``.
    """
    tot = state[0]
    Q = 0.0
    for j in idx:
        Q += wts[j] * beta[j]
    P = 0.0
    maxd = 0.0
    for j in idx:
        bj = beta[j]
        wj = wts[j]
        Q -= wj * bj
        c = A[j] - wj * (P + bj) - Q + (wj / n) * tot
        a = col_sq[j]
        z = c + a * bj
        if z > half_lam:
            new = (z - half_lam) / a
        elif z < -half_lam:
            new = (z + half_lam) / a
        else:
            new = 0.0
        d = new - bj
        if d != 0.0:
            tot += wj * d
            beta[j] = new
            if abs(d) > maxd:
                maxd = abs(d)
        P += new
    state[0] = tot
    return maxd


@numba.njit(cache=True)
def _step_objective(yc, beta, lam):
    n = yc.size
    cum = np.zeros(n)
    s = 0.0
    for i in range(1, n):
        s += beta[i - 1]
        cum[i] = s
    m = cum.mean()
    acc = 0.0
    for i in range(n):
        e = yc[i] - (cum[i] - m)
        acc += e * e
    return acc + lam * np.sum(np.abs(beta))


@numba.njit(cache=True)
def _cd_step(yc, lam, beta, tol, max_sweeps, history):
    n = yc.size
    p = n - 1
    A = np.zeros(p)
    acc = 0.0
    for i in range(n - 1, 0, -1):
        acc += yc[i]
        A[i - 1] = acc
    wts = np.empty(p)
    col_sq = np.empty(p)
    for j in range(p):
        wts[j] = n - 1 - j
        col_sq[j] = wts[j] - wts[j] * wts[j] / n
    state = np.zeros(1)
    state[0] = np.dot(wts, beta)
    half_lam = 0.5 * lam
    allidx = np.arange(p)
    nhist = history.size
    sweeps = 0
    while sweeps < max_sweeps:
        maxd = _step_sweep(A, wts, n, col_sq, half_lam, beta, allidx, state)
        if sweeps < nhist:
            history[sweeps] = _step_objective(yc, beta, lam)
        sweeps += 1
        if maxd <= tol * (1.0 + np.max(np.abs(beta))):
            break
        active = np.flatnonzero(beta)
        while sweeps < max_sweeps:
            maxd = _step_sweep(A, wts, n, col_sq, half_lam, beta, active, state)
            if sweeps < nhist:
                history[sweeps] = _step_objective(yc, beta, lam)
            sweeps += 1
            if maxd <= tol * (1.0 + np.max(np.abs(beta))):
                break
    return sweeps


# ---------------------------------------------------------------------------
# design construction


def build_design(S: SmootherMatrix, Y) -> BandedDesign:
    """``(I - S) X_{., -1}`` from running tail sums of each smoother row."""
    y = np.asarray(getattr(Y, "values", Y), dtype=float)
    n = S.n
    if y.size != n:
        raise ValueError(f"series of length {y.size} does not match smoother n={n}")
    if S.kind == "infinite":
        return BandedDesign(n=n, kind="step", response=y.copy(), L=n - 1)
    response = y - S @ y
    if S.kind == "spline":
        Z = S.dense
        tail = np.cumsum(Z[:, ::-1], axis=1)[:, ::-1]  # tail[i, m] = sum_{l >= m} Z[i, l]
        rows = np.arange(n)[:, None]
        m = np.arange(1, n)[None, :]
        D = (rows >= m).astype(float) - tail[:, 1:]
        return _band_from_dense(D, response, L=n - 1)
    L = S.half_bandwidth
    # tail[i, k] = sum_{k' >= k} S[i, i - L + k']
    tail = np.cumsum(S.weights[:, ::-1], axis=1)[:, ::-1]
    p = n - 1
    t = np.arange(2 * L)
    lo = np.arange(p) + 1 - L
    rows = lo[:, None] + t[None, :]
    ok = (rows >= 0) & (rows < n)
    vals = np.where(t[None, :] >= L, 1.0, 0.0) - tail[np.clip(rows, 0, n - 1), 2 * L - t[None, :]]
    vals = np.where(ok, vals, 0.0)
    return _finish_band(vals, lo.astype(np.int64), n, response, L)


def _finish_band(vals, lo, n, response, L) -> BandedDesign:
    vals = np.ascontiguousarray(vals)
    col_sq = np.einsum("ij,ij->i", vals, vals)
    for a in (vals, lo, col_sq, response):
        a.setflags(write=False)
    return BandedDesign(n=n, kind="band", response=response, vals=vals, lo=lo, col_sq=col_sq, L=L)


def _band_from_dense(D, response, L) -> BandedDesign:
    n = D.shape[0]
    return _finish_band(D.T.copy(), np.zeros(D.shape[1], dtype=np.int64), n, np.asarray(response, float), L)


def build_filtered_design(S: SmootherMatrix, F, Y) -> BandedDesign:
    """Design ``(I - S) F X_{., -1}`` for a causal filter.

    ``F`` is either the filter coefficients ``c_0, c_1, ...`` (with
    ``(F v)_i = sum_k c_k v_{i-k}``) or a dense lower-banded matrix.
    """
    y = np.asarray(getattr(Y, "values", Y), dtype=float)
    n = S.n
    if y.size != n:
        raise ValueError("series length does not match smoother")
    F = np.asarray(F, dtype=float)
    if F.ndim == 2:
        if F.shape != (n, n):
            raise ValueError("filter matrix must be n x n")
        if np.any(np.triu(F, 1)):
            raise ValueError("filter matrix must be lower triangular (causal)")
        q = 1 + max((k for k in range(n) if np.any(np.diag(F, -k))), default=0)
        FX = F @ np.tril(np.ones((n, n)), -1)[:, : n - 1]
    else:
        q = F.size
        if q >= n:
            raise ValueError(f"filter length {q} must be smaller than n={n}")
        profile = np.cumsum(F)
        FX = np.zeros((n, n - 1))
        for j in range(n - 1):
            stop = min(n, j + 1 + q)
            FX[j + 1 : stop, j] = profile[: stop - j - 1]
            FX[stop:, j] = profile[-1]
    if q >= n:
        raise ValueError(f"filter length {q} must be smaller than n={n}")
    response = y - S @ y
    if S.kind == "infinite":
        # the unpenalised constant is absorbed by centring
        D = FX - FX.mean(axis=0, keepdims=True)
        return _band_from_dense(D, response, L=n - 1)
    if S.kind == "spline":
        return _band_from_dense(FX - S.dense @ FX, response, L=n - 1)
    L = S.half_bandwidth
    width = 2 * L + q - 1
    p = n - 1
    lo = np.arange(p) + 1 - L
    vals = np.zeros((p, width))
    for j in range(p):
        r0, r1 = max(0, lo[j]), min(n, lo[j] + width)
        c0, c1 = max(0, r0 - L), min(n, r1 + L)
        col = FX[c0:c1, j]
        rows = np.arange(r0, r1)
        sm = np.zeros(rows.size)
        for k in range(2 * L + 1):
            src = rows - L + k
            okk = (src >= c0) & (src < c1)
            sm[okk] += S.weights[rows[okk], k] * col[src[okk] - c0]
        vals[j, r0 - lo[j] : r1 - lo[j]] = FX[r0:r1, j] - sm
    return _finish_band(vals, lo.astype(np.int64), n, response, L)


# ---------------------------------------------------------------------------
# solvers


def _gradient(D: BandedDesign, r) -> np.ndarray:
    """``2 D^T r`` (for ``"step"`` the residual of the centred problem)."""
    return 2.0 * D.rmatvec(r)


def lambda_max(D: BandedDesign) -> float:
    """Smallest ``lam`` with ``beta = 0`` optimal: ``max |2 D^T response|``."""
    return float(np.max(np.abs(_gradient(D, D.centred_response()))))


def kkt_residual(D: BandedDesign, beta, lam: float, r=None) -> float:
    beta = np.asarray(beta, dtype=float)
    if r is None:
        r = D.centred_response() - D.matvec(beta)
    g = _gradient(D, r)
    active = beta != 0
    res_active = np.abs(g[active] - lam * np.sign(beta[active]))
    res_inactive = np.maximum(np.abs(g[~active]) - lam, 0.0)
    out = 0.0
    if res_active.size:
        out = float(res_active.max())
    if res_inactive.size:
        out = max(out, float(res_inactive.max()))
    return out


def _objective(r, beta, lam) -> float:
    return float(r @ r + lam * np.abs(beta).sum())


def _polish(D: BandedDesign, beta, lam, yc):
    """Solve the stationarity equations on the support with fixed signs."""
    act = np.flatnonzero(beta)
    if act.size == 0:
        return None
    s = np.sign(beta[act])
    G = D.gram(act)
    v = D.rmatvec(yc)[act] - 0.5 * lam * s
    try:
        b = np.linalg.solve(G, v)
    except np.linalg.LinAlgError:
        return None
    if not np.all(np.isfinite(b)) or np.any(np.sign(b) != s):
        return None
    out = np.zeros_like(beta)
    out[act] = b
    return out


def _run_cd(D: BandedDesign, yc, lam, beta, tol, max_sweeps, history):
    if D.kind == "step":
        sweeps = _cd_step(yc, lam, beta, tol, max_sweeps, history)
        r = yc - D.matvec(beta)
    else:
        r = yc - D.matvec(beta)
        sweeps = _cd_band(D.vals, D.lo, D.n, D.col_sq, lam, beta, r, tol, max_sweeps, history)
        r = yc - D.matvec(beta)
    return sweeps, r


def solve_lasso(
    D: BandedDesign,
    lam: float,
    warm_start=None,
    *,
    tol: float = STEP_TOL,
    kkt_tol: float = KKT_TOL,
    max_sweeps: int = MAX_SWEEPS,
    history: Optional[list] = None,
) -> LassoSolution:
    """Minimise ``||response - D beta||^2 + lam ||beta||_1`` by coordinate descent.

    After the sweeps settle, the stationarity equations are solved exactly on
    the active set; the polished point is kept when it keeps the signs and
    passes the KKT check, otherwise sweeping resumes with a tighter step
    tolerance.

    Raises
    ------
    ConvergenceError
        if the KKT residual is still above ``kkt_tol`` after ``max_sweeps``.
    """
    if lam < 0:
        raise ValueError("lambda must be nonnegative")
    p = D.n_cols
    beta = np.zeros(p) if warm_start is None else np.array(warm_start, dtype=float)
    if beta.shape != (p,):
        raise ValueError("warm start has the wrong length")
    yc = D.centred_response()
    hist = np.zeros(max_sweeps if history is not None else 0)
    used = 0
    step_tol = tol
    kkt = np.inf
    if lam >= lambda_max(D):
        # beta = 0 is optimal; sweeping could leave round-off sized coefficients
        zero = np.zeros(p)
        return _finish_solution(D, zero, lam, kkt_residual(D, zero, lam, yc))
    while used < max_sweeps:
        sweeps, r = _run_cd(D, yc, lam, beta, step_tol, max_sweeps - used, hist[used:])
        used += sweeps
        kkt = kkt_residual(D, beta, lam, r)
        # polishing also runs after convergence so the KKT residual sits well below the tolerance
        polished = _polish(D, beta, lam, yc)
        if polished is not None:
            r_pol = yc - D.matvec(polished)
            kkt_pol = kkt_residual(D, polished, lam, r_pol)
            obj = _objective(r, beta, lam)
            if kkt_pol <= min(kkt, kkt_tol) and _objective(r_pol, polished, lam) <= obj + 1e-12 * (1 + abs(obj)):
                beta, r, kkt = polished, r_pol, kkt_pol
        if kkt <= kkt_tol:
            break
        step_tol = max(step_tol * 0.1, 1e-15)
    if history is not None:
        history.extend(hist[:used].tolist())
    if kkt > kkt_tol:
        raise ConvergenceError(f"lasso did not converge in {max_sweeps} sweeps", kkt, beta)
    intercept = 0.0
    if D.kind == "step":
        cum = np.concatenate(([0.0], np.cumsum(beta)))
        intercept = float(np.mean(D.response - cum))
    return LassoSolution(
        beta=beta,
        objective=_objective(r, beta, lam),
        kkt_residual=kkt,
        lam=float(lam),
        intercept=intercept,
        sweeps=used,
    )


# ---------------------------------------------------------------------------
# group fused Lasso


def _group_block(a, g, half_lam):
    """argmin_b sum_s (a_s b_s^2 - 2 g_s b_s) + 2 half_lam ||b||_2."""
    gn = np.sqrt(g @ g)
    if gn <= half_lam:
        return np.zeros_like(g)
    # b_s = g_s / (a_s + half_lam / t) with t = ||b||; solve phi(t) = 0
    def phi(t):
        return np.sqrt(np.sum((g / (a + half_lam / t)) ** 2)) - t

    hi = gn / a.min()
    lo = 0.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if phi(mid) > 0:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-15 * max(1.0, hi):
            break
    t = 0.5 * (lo + hi)
    return g / (a + half_lam / t)


def group_objective(designs, B, lam) -> float:
    total = 0.0
    for s, D in enumerate(designs):
        r = D.centred_response() - D.matvec(B[:, s])
        total += r @ r
    return float(total + lam * np.sqrt((B * B).sum(axis=1)).sum())


def solve_group_fused(
    designs: Sequence[BandedDesign],
    lam: float,
    *,
    tol: float = 1e-10,
    max_sweeps: int = 20_000,
    warm_start=None,
) -> np.ndarray:
    """Block coordinate descent for the shared-change group fused Lasso.

    Returns the ``(n-1) x p`` matrix of jumps; row ``j`` is the jump vector
    after position ``j + 1`` and is either entirely zero or entirely active.
    """
    if lam < 0:
        raise ValueError("lambda must be nonnegative")
    designs = [_as_band(D) for D in designs]
    n = designs[0].n
    if any(D.n != n for D in designs):
        raise ValueError("all series must share the same length")
    p = len(designs)
    m = n - 1
    B = np.zeros((m, p)) if warm_start is None else np.array(warm_start, dtype=float)
    R = np.column_stack([D.centred_response() for D in designs]) - np.column_stack(
        [D.matvec(B[:, s]) for s, D in enumerate(designs)]
    )
    half_lam = 0.5 * lam
    col_sq = np.column_stack([D.col_sq for D in designs])
    for _ in range(max_sweeps):
        maxd = 0.0
        for j in range(m):
            g = np.empty(p)
            spans = []
            for s, D in enumerate(designs):
                r0, r1 = max(0, D.lo[j]), min(n, D.lo[j] + D.vals.shape[1])
                col = D.vals[j, r0 - D.lo[j] : r1 - D.lo[j]]
                spans.append((r0, r1, col))
                g[s] = col @ R[r0:r1, s] + col_sq[j, s] * B[j, s]
            new = _group_block(col_sq[j], g, half_lam)
            d = new - B[j]
            if np.any(d):
                for s, (r0, r1, col) in enumerate(spans):
                    if d[s]:
                        R[r0:r1, s] -= d[s] * col
                B[j] = new
                maxd = max(maxd, float(np.abs(d).max()))
        if maxd <= tol * (1.0 + np.abs(B).max()):
            return B
    raise ConvergenceError("group fused lasso did not converge", maxd)


def _as_band(D: BandedDesign) -> BandedDesign:
    if D.kind == "band":
        return D
    n = D.n
    X = D.to_dense()
    return _band_from_dense(X - X.mean(axis=0, keepdims=True), D.centred_response(), L=n - 1)


# ---------------------------------------------------------------------------
# exact homotopy path


@numba.njit(cache=True)
def _op_rmat(mode, vals, lo, n, r):
    if mode == 0:
        return _band_rmatvec(vals, lo, r)
    out = np.empty(n - 1)
    acc = 0.0
    tot = 0.0
    for i in range(n):
        tot += r[i]
    for i in range(n - 1, 0, -1):
        acc += r[i]
        out[i - 1] = acc - (i / n) * tot
    return out


@numba.njit(cache=True)
def _op_mat(mode, vals, lo, n, beta):
    if mode == 0:
        return _band_matvec(vals, lo, n, beta)
    out = np.zeros(n)
    s = 0.0
    for i in range(1, n):
        s += beta[i - 1]
        out[i] = s
    m = out.mean()
    for i in range(n):
        out[i] -= m
    return out


@numba.njit(cache=True)
def _op_gram(mode, vals, lo, n, ja, jb):
    if mode == 1:
        wa = n - 1 - ja
        wb = n - 1 - jb
        return min(wa, wb) - wa * wb / n
    w = vals.shape[1]
    start = max(max(lo[ja], lo[jb]), 0)
    stop = min(min(lo[ja], lo[jb]) + w, n)
    acc = 0.0
    for i in range(start, stop):
        acc += vals[ja, i - lo[ja]] * vals[jb, i - lo[jb]]
    return acc


@numba.njit(cache=True)
def _chol_solve(R, m, s):
    z = s[:m].copy()
    # row-oriented forward substitution with R^T keeps memory access contiguous
    for l in range(m):
        z[l] /= R[l, l]
        zl = z[l]
        for i in range(l + 1, m):
            z[i] -= R[l, i] * zl
    for i in range(m - 1, -1, -1):
        acc = z[i]
        for l in range(i + 1, m):
            acc -= R[i, l] * z[l]
        z[i] = acc / R[i, i]
    return z


@numba.njit(cache=True)
def _chol_delete(R, m, q):
    for col in range(q, m - 1):
        for row in range(m):
            R[row, col] = R[row, col + 1]
    for row in range(m):
        R[row, m - 1] = 0.0
    for i in range(q, m - 1):
        a = R[i, i]
        b = R[i + 1, i]
        rr = np.hypot(a, b)
        if rr == 0.0:
            continue
        c = a / rr
        s = b / rr
        for col in range(i, m - 1):
            x = R[i, col]
            y = R[i + 1, col]
            R[i, col] = c * x + s * y
            R[i + 1, col] = -s * x + c * y
        R[i + 1, i] = 0.0
    for col in range(m):
        R[m - 1, col] = 0.0


@numba.njit(cache=True)
def _op_rmat_free(mode, vals, lo, n, r, pos, out):
    """``out[j] = (D^T r)_j`` for the columns with ``pos[j] < 0``."""
    if mode == 1:
        full = _op_rmat(mode, vals, lo, n, r)
        for j in range(n - 1):
            if pos[j] < 0:
                out[j] = full[j]
        return
    w = vals.shape[1]
    for j in range(n - 1):
        if pos[j] >= 0:
            continue
        base = lo[j]
        acc = 0.0
        for t in range(max(0, -base), min(w, n - base)):
            acc += vals[j, t] * r[base + t]
        out[j] = acc


@numba.njit(cache=True)
def _homotopy(mode, vals, lo, n, y, gam_grid, max_steps, out_beta):
    """LARS-Lasso path in ``gam = lam / 2``; fills ``out_beta`` at the grid.

    ``R`` is the upper Cholesky factor of the active Gram matrix in entry
    order and ``z = R^{-T} s`` is kept incrementally.  Returns the number of
    steps, or a negative status on failure.
    """
    p = n - 1
    ng = gam_grid.size
    width = n if mode == 1 else vals.shape[1]
    r = y.copy()
    c = _op_rmat(mode, vals, lo, n, r)
    a = np.zeros(p)
    beta = np.zeros(p)
    R = np.zeros((p, p))
    z = np.zeros(p)
    act = np.empty(p, dtype=np.int64)
    pos = np.full(p, -1, dtype=np.int64)
    sgn = np.zeros(p)
    j0 = 0
    for j in range(p):
        if abs(c[j]) > abs(c[j0]):
            j0 = j
    gam = abs(c[j0])
    k = 0
    while k < ng and gam_grid[k] >= gam:
        out_beta[k, :] = 0.0
        k += 1
    if k >= ng:
        return 0
    if gam <= 0.0:
        return -3
    gjj = _op_gram(mode, vals, lo, n, j0, j0)
    if gjj <= 0.0:
        return -2
    R[0, 0] = np.sqrt(gjj)
    act[0] = j0
    pos[j0] = 0
    sgn[j0] = 1.0 if c[j0] > 0 else -1.0
    z[0] = sgn[j0] / R[0, 0]
    m = 1
    steps = 0
    last_drop = -1
    full = np.zeros(p)
    d = np.zeros(p)
    while k < ng:
        if steps >= max_steps:
            return -1
        for i in range(m - 1, -1, -1):
            acc = z[i]
            for l in range(i + 1, m):
                acc -= R[i, l] * d[l]
            d[i] = acc / R[i, i]
        for i in range(m):
            full[act[i]] = d[i]
        u = _op_mat(mode, vals, lo, n, full)
        for i in range(m):
            full[act[i]] = 0.0
        _op_rmat_free(mode, vals, lo, n, u, pos, a)
        delta = gam
        jin = -1
        thr = 1e-14 * gam
        for j in range(p):
            if pos[j] >= 0 or j == last_drop:
                continue
            if a[j] < 1.0:
                t = (gam - c[j]) / (1.0 - a[j])
                if t > thr and t < delta:
                    delta = t
                    jin = j
            if a[j] > -1.0:
                t = (gam + c[j]) / (1.0 + a[j])
                if t > thr and t < delta:
                    delta = t
                    jin = j
        qout = -1
        for i in range(m):
            j = act[i]
            if d[i] * beta[j] < 0.0:
                t = -beta[j] / d[i]
                if t < delta:
                    delta = t
                    qout = i
        if qout >= 0:
            jin = -1
        while k < ng and gam_grid[k] >= gam - delta:
            t = gam - gam_grid[k]
            out_beta[k, :] = 0.0
            for i in range(m):
                j = act[i]
                out_beta[k, j] = beta[j] + t * d[i]
            k += 1
        if k >= ng:
            break
        for i in range(m):
            beta[act[i]] += delta * d[i]
        gam -= delta
        steps += 1
        if steps % 16 == 0:
            fit = _op_mat(mode, vals, lo, n, beta)
            for i in range(n):
                r[i] = y[i] - fit[i]
            _op_rmat_free(mode, vals, lo, n, r, pos, c)
        else:
            for i in range(n):
                r[i] -= delta * u[i]
            for j in range(p):
                if pos[j] < 0:
                    c[j] -= delta * a[j]
        if qout >= 0:
            j = act[qout]
            beta[j] = 0.0
            pos[j] = -1
            c[j] = gam * sgn[j]
            sgn[j] = 0.0
            _chol_delete(R, m, qout)
            for i in range(qout, m - 1):
                act[i] = act[i + 1]
                pos[act[i]] = i
            m -= 1
            if m == 0:
                return -4
            for i in range(qout, m):
                acc = sgn[act[i]]
                for l in range(i):
                    acc -= R[l, i] * z[l]
                z[i] = acc / R[i, i]
            last_drop = j
        elif jin >= 0:
            w = np.zeros(m)
            if mode == 1:
                for i in range(m):
                    w[i] = _op_gram(mode, vals, lo, n, act[i], jin)
            else:
                for kk in range(max(0, jin - width + 1), min(p, jin + width)):
                    if pos[kk] >= 0:
                        w[pos[kk]] = _op_gram(mode, vals, lo, n, kk, jin)
            for l in range(m):
                w[l] /= R[l, l]
                wl = w[l]
                for i in range(l + 1, m):
                    w[i] -= R[l, i] * wl
            gjj = _op_gram(mode, vals, lo, n, jin, jin)
            rho2 = gjj - np.dot(w, w)
            if rho2 <= 1e-13 * gjj:
                return -2
            rho = np.sqrt(rho2)
            for i in range(m):
                R[i, m] = w[i]
            R[m, m] = rho
            act[m] = jin
            pos[jin] = m
            sgn[jin] = 1.0 if c[jin] > 0 else -1.0
            z[m] = (sgn[jin] - np.dot(w, z[:m])) / rho
            m += 1
            last_drop = -1
        else:
            return -3
    return steps


def _finish_solution(D: BandedDesign, beta, lam, kkt, sweeps=0) -> LassoSolution:
    r = D.centred_response() - D.matvec(beta)
    intercept = 0.0
    if D.kind == "step":
        cum = np.concatenate(([0.0], np.cumsum(beta)))
        intercept = float(np.mean(D.response - cum))
    return LassoSolution(
        beta=beta, objective=_objective(r, beta, lam), kkt_residual=kkt, lam=float(lam), intercept=intercept, sweeps=sweeps
    )


def lasso_path(D: BandedDesign, lambdas, *, kkt_tol: float = KKT_TOL, max_steps: Optional[int] = None, **solver_kw):
    """Solutions at every ``lam`` in ``lambdas`` (any order) along the exact
    piecewise-linear homotopy.

    Each grid solution is checked against the KKT conditions; points that
    fail are re-solved by coordinate descent warm-started from the path.
    """
    lams = np.asarray(lambdas, dtype=float)
    if lams.ndim != 1 or np.any(lams < 0):
        raise ValueError("lambdas must be a 1-d array of nonnegative values")
    order = np.argsort(-lams, kind="stable")
    gam = np.ascontiguousarray(lams[order] * 0.5)
    n = D.n
    mode = 1 if D.kind == "step" else 0
    vals = D.vals if mode == 0 else np.zeros((0, 0))
    lo = D.lo if mode == 0 else np.zeros(0, dtype=np.int64)
    out = np.zeros((gam.size, n - 1))
    limit = 20 * n if max_steps is None else max_steps
    status = -5
    if gam.size and gam[-1] > 0:
        status = _homotopy(mode, vals, lo, n, np.ascontiguousarray(D.centred_response()), gam, limit, out)
    sols = [None] * lams.size
    prev = None
    for row, idx in enumerate(order):
        lam = float(lams[idx])
        beta = out[row].copy() if status >= 0 else None
        if beta is not None:
            kkt = kkt_residual(D, beta, lam)
            if kkt <= kkt_tol:
                sols[idx] = prev = _finish_solution(D, beta, lam, kkt)
                continue
        start = beta if beta is not None else (None if prev is None else prev.beta)
        sols[idx] = prev = solve_lasso(D, lam, start, kkt_tol=kkt_tol, **solver_kw)
    return sols
