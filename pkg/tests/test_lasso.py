import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from oracles import dense_design, dense_kernel_smoother, group_lasso_prox, group_objective_dense, lasso_objective, prox_grad_lasso, step_matrix
from pcplus.cv import bandwidth_grid
from pcplus.lasso import (
    KKT_TOL,
    ConvergenceError,
    build_design,
    build_filtered_design,
    group_objective,
    kkt_residual,
    lambda_max,
    lasso_path,
    solve_group_fused,
    solve_lasso,
)
from pcplus.model import INFINITE
from pcplus.smoother import SmootherMatrix, build_kernel_smoother, build_spline_smoother


def _series(n, seed):
    rng = np.random.default_rng(seed)
    return np.cumsum(rng.normal(size=n)) * 0.3 + rng.normal(size=n)


@pytest.mark.parametrize("n", [3, 6, 11, 24, 50])
def test_design_matches_dense(n):
    y = _series(n, n)
    for h in bandwidth_grid(n, 20):
        try:
            S = build_kernel_smoother(n, h)
        except ValueError:
            continue
        D = build_design(S, y)
        Dd, yd = dense_design(dense_kernel_smoother(n, h), y)
        if S.is_infinite:
            np.testing.assert_array_equal(D.to_dense(), step_matrix(n))
            np.testing.assert_array_equal(D.response, y)
            continue
        assert np.max(np.abs(D.to_dense() - Dd)) <= 1e-12
        np.testing.assert_allclose(D.response, yd, atol=1e-12)
        b = np.random.default_rng(1).normal(size=n - 1)
        np.testing.assert_allclose(D.matvec(b), Dd @ b, atol=1e-11)
        np.testing.assert_allclose(D.rmatvec(yd), Dd.T @ yd, atol=1e-11)
        cols = np.arange(0, n - 1, 2)
        np.testing.assert_allclose(D.gram(cols), Dd[:, cols].T @ Dd[:, cols], atol=1e-11)


def test_design_n6_h05():
    y = _series(6, 0)
    D = build_design(build_kernel_smoother(6, 0.5), y)
    Dd, _ = dense_design(dense_kernel_smoother(6, 0.5), y)
    assert np.max(np.abs(D.to_dense() - Dd)) <= 1e-12


def test_infinite_design_is_step_regressors():
    D = build_design(build_kernel_smoother(3, INFINITE), np.array([1.0, 2.0, 4.0]))
    np.testing.assert_array_equal(D.to_dense()[:, 0], [0, 1, 1])
    np.testing.assert_array_equal(D.to_dense()[:, 1], [0, 0, 1])


def test_identity_smoother_gives_zero_design():
    n = 6
    w = np.zeros((n, 3))
    w[:, 1] = 1.0
    S = SmootherMatrix(n=n, half_bandwidth=1, kind="kernel", weights=w, bandwidth=0.2)
    D = build_design(S, _series(n, 2))
    assert np.all(D.to_dense() == 0)


@given(st.integers(8, 45), st.integers(0, 29), st.integers(0, 10_000))
def test_band_structure(n, hi, seed):
    h = bandwidth_grid(n)[1 + hi % 30]
    S = build_kernel_smoother(n, h)
    Dd = build_design(S, _series(n, seed)).to_dense()
    L = S.half_bandwidth
    i, j = np.indices(Dd.shape)
    # 1-based row, and the column's 1-based position in the full step matrix X
    ii, jj = i + 1, j + 2
    outside = (jj < ii - L + 1) | (jj > ii + L)
    assert np.all(Dd[outside] == 0)


def test_spline_design_matches_dense():
    n = 15
    y = _series(n, 3)
    Z = build_spline_smoother(n, 0.05)
    D = build_design(Z, y)
    IS = np.eye(n) - Z.to_dense()
    np.testing.assert_allclose(D.to_dense(), IS @ step_matrix(n), atol=1e-12)


def test_lambda_max_gives_zero():
    y = _series(30, 4)
    D = build_design(build_kernel_smoother(30, 0.2), y)
    lm = lambda_max(D)
    assert np.all(solve_lasso(D, lm).beta == 0)
    assert np.all(solve_lasso(D, 10 * lm).beta == 0)
    assert np.any(solve_lasso(D, 0.9 * lm).beta != 0)


@pytest.mark.parametrize("n", [5, 8, 10])
def test_lambda_zero_is_ols(n):
    y = _series(n, n)
    D = build_design(build_kernel_smoother(n, 0.4), y)
    Dd = D.to_dense()
    ols = np.linalg.solve(Dd.T @ Dd, Dd.T @ D.response)
    sol = solve_lasso(D, 0.0)
    np.testing.assert_allclose(sol.beta, ols, atol=1e-7)


def test_matches_proximal_gradient_oracle():
    rng = np.random.default_rng(7)
    for trial in range(5):
        n = 8
        y = rng.normal(size=n)
        S = dense_kernel_smoother(n, 0.5)
        D = build_design(build_kernel_smoother(n, 0.5), y)
        Dd, yd = dense_design(S, y)
        lam = lambda_max(D) * rng.uniform(0.01, 0.8)
        b_or = prox_grad_lasso(Dd, yd, lam)
        sol = solve_lasso(D, lam)
        assert abs(sol.objective - lasso_objective(Dd, yd, b_or, lam)) <= 1e-8


def test_step_kind_matches_oracle_with_intercept():
    rng = np.random.default_rng(3)
    n = 9
    y = rng.normal(size=n)
    D = build_design(build_kernel_smoother(n, INFINITE), y)
    X = step_matrix(n)
    Xc = X - X.mean(axis=0)
    lam = lambda_max(D) * 0.3
    b_or = prox_grad_lasso(Xc, y - y.mean(), lam)
    sol = solve_lasso(D, lam)
    assert abs(sol.objective - lasso_objective(Xc, y - y.mean(), b_or, lam)) <= 1e-8
    fit = X @ sol.beta + sol.intercept
    np.testing.assert_allclose(np.mean(y - fit), 0, atol=1e-12)


def _random_instance(rng):
    n = int(rng.integers(4, 40))
    y = rng.normal(size=n) + np.where(np.arange(n) > n // 2, rng.normal() * 2, 0)
    grid = bandwidth_grid(n)
    h = grid[int(rng.integers(0, grid.size))]
    try:
        S = build_kernel_smoother(n, h)
    except ValueError:
        S = build_kernel_smoother(n, INFINITE)
    D = build_design(S, y)
    lam = lambda_max(D) * 10 ** rng.uniform(-4, 0)
    return D, lam


def test_kkt_on_random_instances():
    rng = np.random.default_rng(2024)
    worst = 0.0
    for _ in range(200):
        D, lam = _random_instance(rng)
        sol = solve_lasso(D, lam)
        assert sol.kkt_residual <= KKT_TOL
        worst = max(worst, kkt_residual(D, sol.beta, lam))
    assert worst <= KKT_TOL


def test_warm_and_cold_agree():
    rng = np.random.default_rng(5)
    for _ in range(20):
        D, lam = _random_instance(rng)
        cold = solve_lasso(D, lam)
        warm = solve_lasso(D, lam, warm_start=rng.normal(size=D.n_cols))
        assert abs(cold.objective - warm.objective) <= 1e-8 * max(1.0, cold.objective)


def test_objective_monotone_per_sweep():
    rng = np.random.default_rng(9)
    for _ in range(10):
        D, lam = _random_instance(rng)
        hist = []
        solve_lasso(D, lam, tol=1e-12, history=hist)
        h = np.array(hist)
        assert np.all(np.diff(h) <= 1e-10 * (1 + np.abs(h[:-1])))


def test_nonconvergence_reported():
    y = _series(60, 1)
    D = build_design(build_kernel_smoother(60, 0.3), y)
    with pytest.raises(ConvergenceError) as err:
        solve_lasso(D, lambda_max(D) * 1e-4, max_sweeps=2)
    assert err.value.kkt_residual > KKT_TOL


def test_negative_lambda_and_bad_warm_start():
    D = build_design(build_kernel_smoother(10, 0.3), _series(10, 0))
    with pytest.raises(ValueError):
        solve_lasso(D, -1.0)
    with pytest.raises(ValueError):
        solve_lasso(D, 1.0, warm_start=np.zeros(3))


def test_size_mismatch():
    with pytest.raises(ValueError):
        build_design(build_kernel_smoother(10, 0.3), np.zeros(11))


def test_path_matches_coordinate_descent():
    rng = np.random.default_rng(11)
    for _ in range(15):
        D, _ = _random_instance(rng)
        lm = lambda_max(D)
        lams = np.geomspace(lm, lm * 1e-4, 12)
        path = lasso_path(D, lams[::-1])  # any order
        for lam, sol in zip(lams[::-1], path):
            assert sol.lam == lam
            assert sol.kkt_residual <= KKT_TOL
            ref = solve_lasso(D, lam)
            assert abs(sol.objective - ref.objective) <= 1e-8 * max(1.0, ref.objective)


def test_filtered_identity_reduces():
    n = 12
    y = _series(n, 8)
    for h in (0.3, INFINITE):
        S = build_kernel_smoother(n, h)
        a = build_design(S, y)
        b = build_filtered_design(S, [1.0], y)
        ad = a.to_dense() if a.kind == "band" else step_matrix(n) - step_matrix(n).mean(axis=0)
        np.testing.assert_allclose(b.to_dense(), ad, atol=1e-12)
        np.testing.assert_allclose(b.centred_response(), a.centred_response(), atol=1e-12)
    Fm = np.eye(n)
    np.testing.assert_allclose(build_filtered_design(build_kernel_smoother(n, 0.3), Fm, y).to_dense(), build_design(build_kernel_smoother(n, 0.3), y).to_dense(), atol=1e-12)


def test_filtered_moving_average_matches_dense():
    n = 6
    y = _series(n, 4)
    c = np.array([0.5, 0.5])
    F = np.eye(n) * 0.5 + np.eye(n, k=-1) * 0.5
    for h in (0.5, 0.34):
        S = build_kernel_smoother(n, h)
        D = build_filtered_design(S, c, y).to_dense()
        oracle = (np.eye(n) - dense_kernel_smoother(n, h)) @ F @ step_matrix(n)
        np.testing.assert_allclose(D, oracle, atol=1e-12)
        np.testing.assert_allclose(build_filtered_design(S, F, y).to_dense(), oracle, atol=1e-12)


def test_filtered_errors_and_huge_lambda():
    n = 8
    y = _series(n, 1)
    S = build_kernel_smoother(n, 0.4)
    with pytest.raises(ValueError):
        build_filtered_design(S, np.ones(n), y)
    with pytest.raises(ValueError):
        build_filtered_design(S, np.triu(np.ones((n, n))), y)
    D = build_filtered_design(S, [0.6, 0.3, 0.1], y)
    assert np.all(solve_lasso(D, 1e6).beta == 0)


def test_group_reduces_to_lasso_for_one_series():
    y = _series(20, 6)
    D = build_design(build_kernel_smoother(20, 0.25), y)
    lam = lambda_max(D) * 0.2
    B = solve_group_fused([D], lam, tol=1e-13)
    sol = solve_lasso(D, lam)
    np.testing.assert_allclose(B[:, 0], sol.beta, atol=1e-7)


def test_group_huge_lambda_and_shared_support():
    ys = [_series(16, s) for s in range(3)]
    Ds = [build_design(build_kernel_smoother(16, h), y) for h, y in zip((0.2, 0.3, INFINITE), ys)]
    assert np.all(solve_group_fused(Ds, 1e8) == 0)
    B = solve_group_fused(Ds, 2.0)
    active = np.abs(B) > 0
    assert np.all(active.all(axis=1) | (~active).all(axis=1))


def test_group_matches_generic_oracle():
    n = 8
    rng = np.random.default_rng(21)
    ys = [rng.normal(size=n) for _ in range(2)]
    hs = (0.5, 0.3)
    Ds = [build_design(build_kernel_smoother(n, h), y) for h, y in zip(hs, ys)]
    dense = [dense_design(dense_kernel_smoother(n, h), y) for h, y in zip(hs, ys)]
    lam = 1.0
    B = solve_group_fused(Ds, lam, tol=1e-13)
    Bo = group_lasso_prox([d for d, _ in dense], [r for _, r in dense], lam)
    ours = group_objective(Ds, B, lam)
    ref = group_objective_dense([d for d, _ in dense], [r for _, r in dense], Bo, lam)
    assert abs(ours - ref) <= 1e-6
    with pytest.raises(ValueError):
        solve_group_fused(Ds, -1.0)
