"""Independent reference implementations used only by the tests.

Nothing here imports the package's numerical kernels; each oracle solves
its problem by a different (usually slower, denser) route.
"""

from __future__ import annotations

import numpy as np


def epanechnikov(x):
    x = np.asarray(x, dtype=float)
    return np.where(np.abs(x) <= 1, 0.75 * (1 - x * x), 0.0)


def dense_kernel_smoother(n, h):
    """``S_ij = s((j-i)/(nh)) / sum_l s((l-i)/(nh))`` built entry by entry."""
    if np.isinf(h):
        return np.full((n, n), 1.0 / n)
    S = np.zeros((n, n))
    for i in range(n):
        w = np.array([float(epanechnikov((j - i) / (n * h))) for j in range(n)])
        S[i] = w / w.sum()
    return S


def step_matrix(n):
    """``X_{., -1}``: column j has ones from row j+1 on."""
    return np.tril(np.ones((n, n)), -1)[:, : n - 1]


def dense_design(S, y):
    n = S.shape[0]
    IS = np.eye(n) - S
    return IS @ step_matrix(n), IS @ y


def spline_hat(n, mu):
    """Natural cubic smoothing spline hat matrix on ``x_i = i/n`` as the
    generalised ridge ``B (B^T B + mu Omega)^{-1} B^T`` with the truncated
    power basis of natural splines (knots at every design point)."""
    x = np.arange(1, n + 1) / n
    # natural cubic spline basis: 1, x, and d_k(x) - d_{n-2}(x)
    def d(k, t):
        a = np.maximum(t - x[k], 0) ** 3 - np.maximum(t - x[n - 1], 0) ** 3
        return a / (x[n - 1] - x[k])

    cols = [np.ones(n), x] + [d(k, x) - d(n - 2, x) for k in range(n - 2)]
    B = np.column_stack(cols)
    # Omega_jk = int B_j'' B_k'' by high-order Gauss-Legendre per knot interval
    gx, gw = np.polynomial.legendre.leggauss(8)

    def second(t):
        out = [np.zeros_like(t), np.zeros_like(t)]
        for k in range(n - 2):
            def d2(kk):
                return 6 * (np.maximum(t - x[kk], 0) - np.maximum(t - x[n - 1], 0)) / (x[n - 1] - x[kk])
            out.append(d2(k) - d2(n - 2))
        return np.column_stack(out)

    Om = np.zeros((n, n))
    for a, b in zip(x[:-1], x[1:]):
        t = 0.5 * (b - a) * gx + 0.5 * (a + b)
        M = second(t)
        Om += (M * (0.5 * (b - a) * gw)[:, None]).T @ M
    return B @ np.linalg.solve(B.T @ B + mu * Om, B.T)


def prox_grad_lasso(D, y, lam, iters=200000, tol=1e-14):
    """FISTA for ``||y - D b||^2 + lam ||b||_1``."""
    Lc = 2 * np.linalg.norm(D, 2) ** 2
    b = np.zeros(D.shape[1])
    z = b.copy()
    t = 1.0
    for _ in range(iters):
        g = -2 * D.T @ (y - D @ z)
        v = z - g / Lc
        bn = np.sign(v) * np.maximum(np.abs(v) - lam / Lc, 0)
        tn = 0.5 * (1 + np.sqrt(1 + 4 * t * t))
        z = bn + (t - 1) / tn * (bn - b)
        if np.max(np.abs(bn - b)) < tol:
            b = bn
            break
        b, t = bn, tn
    return b


def lasso_objective(D, y, b, lam):
    r = y - D @ b
    return float(r @ r + lam * np.abs(b).sum())


def brute_force_partition(z, penalty):
    """Exhaustive search over all 2^(n-1) segmentations, vectorised over masks.

    Ties prefer fewer changes, then the lexicographically smallest vector.
    """
    z = np.asarray(z, dtype=float)
    n = z.size
    masks = np.arange(2 ** (n - 1), dtype=np.int64)
    bits = ((masks[:, None] >> np.arange(n - 1)[None, :]) & 1).astype(bool)
    total = np.zeros(masks.size)
    everyone = np.ones(masks.size, dtype=bool)
    for s in range(n):
        start_ok = everyone if s == 0 else bits[:, s - 1]
        free = everyone.copy()
        for t in range(s + 1, n + 1):
            if t - 1 > s:
                free &= ~bits[:, t - 2]
            end_ok = everyone if t == n else bits[:, t - 1]
            seg = z[s:t]
            total += np.where(start_ok & free & end_ok, float(np.sum((seg - seg.mean()) ** 2)), 0.0)
    k = bits.sum(axis=1)
    total += penalty * k
    best = total.min()
    cand = np.flatnonzero(total == best)
    options = sorted((int(k[c]), [int(i) + 1 for i in np.flatnonzero(bits[c])]) for c in cand)
    return float(best), options[0][1]


def optimal_partition_dp(z, penalty):
    """Plain O(n^2) optimal partitioning without pruning, direct segment sums."""
    z = np.asarray(z, dtype=float)
    n = z.size
    F = np.full(n + 1, np.inf)
    F[0] = -penalty
    last = np.zeros(n + 1, dtype=int)
    for t in range(1, n + 1):
        for s in range(t):
            seg = z[s:t]
            v = F[s] + float(np.sum((seg - seg.mean()) ** 2)) + penalty
            if v < F[t]:
                F[t], last[t] = v, s
    cps, t = [], n
    while t > 0:
        if last[t] > 0:
            cps.append(int(last[t]))
        t = last[t]
    return F[n], cps[::-1]


def tv_denoise(y, lam):
    """Exact solution of ``0.5 ||y - x||^2 + lam sum |x_{i+1} - x_i|`` by the
    taut-string style direct algorithm (Condat 2013)."""
    y = np.asarray(y, dtype=float)
    N = y.size
    x = np.empty(N)
    if N == 0:
        return x
    k = k0 = kplus = kminus = 0
    umin, umax = lam, -lam
    vmin, vmax = y[0] - lam, y[0] + lam
    twolam = 2.0 * lam
    while True:
        while k == N - 1:
            if umin < 0.0:
                x[k0 : kminus + 1] = vmin
                k0 = kminus + 1
                k = kminus = k0
                vmin = y[k]
                umin = lam
                umax = vmin + umin - vmax
            elif umax > 0.0:
                x[k0 : kplus + 1] = vmax
                k0 = kplus + 1
                k = kplus = k0
                vmax = y[k]
                umax = -lam
                umin = vmax + umax - vmin
            else:
                vmin += umin / (k - k0 + 1)
                x[k0:] = vmin
                return x
        umin += y[k + 1] - vmin
        if umin < -lam:
            x[k0 : kminus + 1] = vmin
            k0 = kminus + 1
            k = kminus = kplus = k0
            vmin = y[k]
            vmax = vmin + twolam
            umin, umax = lam, -lam
            continue
        umax += y[k + 1] - vmax
        if umax > lam:
            x[k0 : kplus + 1] = vmax
            k0 = kplus + 1
            k = kminus = kplus = k0
            vmax = y[k]
            vmin = vmax - twolam
            umin, umax = lam, -lam
            continue
        k += 1
        if umin >= lam:
            kminus = k
            vmin += (umin - lam) / (kminus - k0 + 1)
            umin = lam
        if umax <= -lam:
            kplus = k
            vmax += (umax + lam) / (kplus - k0 + 1)
            umax = -lam


def restricted_ls_dense(S, y, J):
    """``min_c ||(I-S)(y - X_J c)||^2`` by numpy least squares; J 1-based."""
    n = y.size
    IS = np.eye(n) - S
    X = step_matrix(n)[:, np.asarray(J, dtype=int) - 1]
    c, *_ = np.linalg.lstsq(IS @ X, IS @ y, rcond=None)
    return c


def group_lasso_prox(Ds, ys, lam, iters=100000, tol=1e-13):
    """Proximal gradient for ``sum_s ||y_s - D_s b_s||^2 + lam sum_j ||B_j.||_2``."""
    m = Ds[0].shape[1]
    p = len(Ds)
    Lc = 2 * max(np.linalg.norm(D, 2) ** 2 for D in Ds)
    B = np.zeros((m, p))
    Z = B.copy()
    t = 1.0
    for _ in range(iters):
        G = np.column_stack([-2 * D.T @ (y - D @ Z[:, s]) for s, (D, y) in enumerate(zip(Ds, ys))])
        V = Z - G / Lc
        nrm = np.sqrt((V * V).sum(axis=1, keepdims=True))
        shrink = np.maximum(1 - (lam / Lc) / np.maximum(nrm, 1e-300), 0)
        Bn = V * shrink
        tn = 0.5 * (1 + np.sqrt(1 + 4 * t * t))
        Z = Bn + (t - 1) / tn * (Bn - B)
        if np.max(np.abs(Bn - B)) < tol:
            B = Bn
            break
        B, t = Bn, tn
    return B


def group_objective_dense(Ds, ys, B, lam):
    tot = sum(float(np.sum((y - D @ B[:, s]) ** 2)) for s, (D, y) in enumerate(zip(Ds, ys)))
    return tot + lam * float(np.sqrt((B * B).sum(axis=1)).sum())


def sic_penalty_direct(y):
    """``2 sd^2 log n`` with the IQR-of-differences scale, written out longhand."""
    from scipy.stats import norm

    d = np.diff(np.asarray(y, dtype=float))
    q1, q3 = np.percentile(d, [25, 75], method="median_unbiased")
    sd = max((q3 - q1) / (2 * norm.ppf(0.75) * np.sqrt(2)), 1e-12)
    return 2 * sd * sd * np.log(y.size)


def plain_fused_pelt_path(y, lam):
    """Ordinary fused Lasso, then unpruned optimal partitioning on the series
    minus its (constant) smooth estimate, then segment means.

    Returns ``(fused objective, change list, fitted vector)`` where the fused
    objective is ``||y - x||^2 + lam * TV(x)``.
    """
    y = np.asarray(y, dtype=float)
    x = tv_denoise(y, lam / 2)
    obj = float(np.sum((y - x) ** 2) + lam * np.abs(np.diff(x)).sum())
    g = np.full(y.size, np.mean(y - (x - x[0])))
    _, cps = optimal_partition_dp(y - g, sic_penalty_direct(y))
    bounds = [0] + cps + [y.size]
    fitted = np.concatenate([np.full(b - a, y[a:b].mean()) for a, b in zip(bounds[:-1], bounds[1:])])
    return obj, cps, fitted
