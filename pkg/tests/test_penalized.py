"""Lasso-penalized EM: soft threshold, coordinate descent, CV, reductions."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cgmix import (Dataset, DesignSpec, FitConfig, fit_em, soft_threshold)
from cgmix.model import DataError
from cgmix.penalized import (PenaltyConfig, PenalizedParams, cd_update_beta,
                             cv_select_lambda, fit_penalized_em,
                             gate_partial_quadratic, penalized_impute,
                             penalized_path, penalized_predict)


# ---------------------------------------------------------------------------
# soft threshold
# ---------------------------------------------------------------------------

def test_soft_threshold_fixed_points():
    assert soft_threshold(3.0, 1.0) == 2.0
    assert soft_threshold(-0.4, 1.0) == 0.0
    assert soft_threshold(-3.0, 1.0) == -2.0


@settings(max_examples=1000, deadline=None)
@given(z=st.floats(-1e6, 1e6), gamma=st.floats(0, 1e6))
def test_soft_threshold_closed_form(z, gamma):
    expect = np.sign(z) * max(abs(z) - gamma, 0.0)
    assert soft_threshold(z, gamma) == pytest.approx(expect, abs=1e-12)


# ---------------------------------------------------------------------------
# coordinate descent
# ---------------------------------------------------------------------------

def _lasso_objective(x, y, w, beta, lam):
    r = y - beta[0] - x @ beta[1:]
    return 0.5 * np.sum(w * r * r) + lam * np.abs(beta[1:]).sum()


def test_cd_reaches_stationary_point(rng):
    x = rng.standard_normal((60, 5))
    w = rng.random(60) + 0.05
    y = 1.0 + x @ np.array([2.0, 0, 0, -1.5, 0]) + 0.3 * rng.standard_normal(60)
    beta = cd_update_beta(x, y, w, np.zeros(6), lam=2.0,
                          max_cycles=5000, tol=1e-13)
    base = _lasso_objective(x, y, w, beta, 2.0)
    for j in range(6):
        for eps in (1e-6, -1e-6):
            trial = beta.copy()
            trial[j] += eps
            assert _lasso_objective(x, y, w, trial, 2.0) >= base - 1e-9


def test_cd_orthonormal_design_closed_form(rng):
    # with X'WX = I the lasso solution is coordinatewise soft thresholding
    n, q = 400, 3
    raw = rng.standard_normal((n, q))
    Qm, _ = np.linalg.qr(raw - raw.mean(axis=0))
    x = Qm                                   # columns orthonormal, mean ~0
    w = np.ones(n)
    btrue = np.array([5.0, 0.5, -4.0])
    y = x @ btrue + 0.0
    lam = 1.0
    beta = cd_update_beta(x, y, w, np.zeros(q + 1), lam,
                          max_cycles=5000, tol=1e-13)
    z = x.T @ y
    expect = np.sign(z) * np.maximum(np.abs(z) - lam, 0.0)  # d_j = 1
    np.testing.assert_allclose(beta[1:], expect, atol=1e-8)


def test_cd_huge_lambda_kills_all_slopes(rng):
    x = rng.standard_normal((50, 4))
    w = rng.random(50) + 0.1
    y = 2.0 + x @ rng.standard_normal(4)
    beta = cd_update_beta(x, y, w, rng.standard_normal(5), lam=1e9)
    np.testing.assert_allclose(beta[1:], 0.0)
    np.testing.assert_allclose(beta[0], np.sum(w * y) / w.sum(), rtol=1e-8)


def test_gate_partial_quadratic_skips_saturated_component():
    x = np.zeros((20, 1))
    pi = np.column_stack([np.ones(20), np.zeros(20)])
    alpha = np.array([[0.0, 0.0], [-30.0, 0.0]])   # p ~ 1e-13: all omega tiny
    out, skipped = gate_partial_quadratic(x, pi, alpha, lam=0.1)
    assert skipped == [2]
    np.testing.assert_array_equal(out, alpha)


# ---------------------------------------------------------------------------
# penalized EM
# ---------------------------------------------------------------------------

def _scalar_mixture(rng, n=300, q=4, missing=0.3):
    x = rng.standard_normal((n, q))
    z = (rng.random(n) < 0.5).astype(int)
    beta = np.array([[3.0, 2.0, 0, 0, 0], [-3.0, -2.0, 0, 0, 0]])
    xa = np.hstack([np.ones((n, 1)), x])
    y = (xa * beta[z]).sum(axis=1) + 0.4 * rng.standard_normal(n)
    delta = (rng.random(n) > missing).astype(int)[:, None]
    yy = np.where(delta[:, 0].astype(bool), y, np.nan)[:, None]
    return Dataset(x, yy, delta)


def test_penalized_requires_scalar_response(rng):
    d = Dataset(rng.standard_normal((10, 2)), rng.standard_normal((10, 2)),
                np.ones((10, 2)))
    with pytest.raises(DataError, match="scalar response"):
        fit_penalized_em(d, FitConfig(G=1), PenaltyConfig(), 1.0)


def test_penalized_near_zero_lambda_matches_unpenalized(rng):
    data = _scalar_mixture(rng, missing=0.25)
    cfg = FitConfig(G=2, n_starts=3, seed=1, tol=1e-10, max_iter=400)
    pen = PenaltyConfig(inner_cd_iter=50)
    params, _rep = fit_penalized_em(data, cfg, pen, 1e-8)
    ref = fit_em(data, DesignSpec(), cfg)
    got = np.sort([params.beta[g, 1] for g in range(2)])
    want = np.sort([float(ref.params.B[g][1, 0]) for g in range(2)])
    np.testing.assert_allclose(got, want, atol=1e-5 * max(1, np.abs(want).max()))


def test_penalized_large_lambda_gives_intercept_only(rng):
    data = _scalar_mixture(rng)
    params, _rep = fit_penalized_em(data, FitConfig(G=2, n_starts=2, seed=0),
                                    PenaltyConfig(), 1e7)
    np.testing.assert_allclose(params.beta[:, 1:], 0.0, atol=1e-10)
    np.testing.assert_allclose(params.alpha[:, 1:], 0.0, atol=1e-10)


def test_penalized_path_sparsity_monotone_ends(rng):
    data = _scalar_mixture(rng)
    pen = PenaltyConfig(lambda_grid=np.geomspace(300.0, 0.01, 8))
    path = penalized_path(data, FitConfig(G=2, n_starts=2, seed=0), pen)
    nnz = [int((np.abs(p.beta[:, 1:]) > 1e-10).sum()) for _l, p, _r in path]
    assert nnz[0] <= nnz[-1]
    assert nnz[0] == 0                       # lambda far above entry point


def test_penalized_fit_scale_equivariant(rng):
    """Rescaling a covariate must not change predictions (internal standardization)."""
    data = _scalar_mixture(rng, n=250)
    scale = np.array([1.0, 10.0, 0.1, 1.0])
    data2 = Dataset(data.x * scale, data.y, data.delta)
    cfg = FitConfig(G=2, n_starts=2, seed=4, tol=1e-9, max_iter=300)
    p1, _ = fit_penalized_em(data, cfg, PenaltyConfig(), 0.7)
    p2, _ = fit_penalized_em(data2, cfg, PenaltyConfig(), 0.7)
    np.testing.assert_allclose(penalized_predict(data, p1),
                               penalized_predict(data2, p2), atol=1e-4)


def test_penalized_impute_keeps_observed_values(rng):
    data = _scalar_mixture(rng)
    params, _ = fit_penalized_em(data, FitConfig(G=2, n_starts=1, seed=2),
                                 PenaltyConfig(), 1.0)
    out = penalized_impute(data, params)
    obs = data.delta[:, 0].astype(bool)
    np.testing.assert_array_equal(out[obs], data.y[obs, 0])
    assert np.isfinite(out).all()


def test_cv_selects_lambda_from_grid_and_ties_to_larger(rng):
    data = _scalar_mixture(rng, n=200)
    grid = np.geomspace(50.0, 0.05, 6)
    pen = PenaltyConfig(lambda_grid=grid, cv_folds=4)
    lam, curve = cv_select_lambda(data, FitConfig(G=2, n_starts=1, seed=0,
                                                  max_iter=100), pen)
    assert lam in grid
    assert curve.shape == (6, 2)
    assert np.isfinite(curve[:, 1]).all()
    # tie policy: the reported lambda is the first (largest) argmin
    best = curve[:, 1].min()
    first = grid[np.flatnonzero(curve[:, 1] == best)[0]]
    assert lam == first


def test_penalized_params_validation():
    with pytest.raises(DataError, match="row for component 1"):
        PenalizedParams(np.ones((2, 3)), np.zeros((2, 3)), np.ones(2))
    with pytest.raises(DataError, match="sigma2"):
        PenalizedParams(np.zeros((1, 3)), np.zeros((1, 3)), np.zeros(1))


def test_lambda_grid_validation():
    with pytest.raises(ValueError, match="descending"):
        PenaltyConfig(lambda_grid=np.array([0.1, 1.0]))
    with pytest.raises(ValueError, match="positive"):
        PenaltyConfig(lambda_grid=np.array([1.0, 0.0]))
