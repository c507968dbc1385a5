"""Fractional imputation, estimating equations, delete-a-group jackknife."""

import numpy as np
import pytest

from cgmix import (Dataset, DesignSpec, FitConfig, FitError, fit_em, impute,
                   estimate_mean, jackknife, solve_estimating_equation)
from cgmix.model import CgmmParams, GaussianBlock, conditional_gaussian
from cgmix.em import e_step

from conftest import random_mixture_dataset


def _fitted(rng, missing=0.35, n=120, p=2):
    data = random_mixture_dataset(rng, n=n, p=p, missing=missing)
    rep = fit_em(data, DesignSpec(), FitConfig(G=2, n_starts=2, seed=0))
    return data, rep.params


# ---------------------------------------------------------------------------
# impute
# ---------------------------------------------------------------------------

def test_impute_idempotent_on_complete_data(rng):
    data, params = _fitted(rng, missing=0.0)
    res = impute(data, params)
    np.testing.assert_array_equal(res.y_imputed, data.y)
    assert res.fractional == []


def test_fractional_weights_sum_to_one(rng):
    data, params = _fitted(rng)
    res = impute(data, params)
    assert len(res.fractional) == int((data.delta == 0).any(axis=1).sum())
    for rec in res.fractional:
        np.testing.assert_allclose(rec.weights.sum(), 1.0, atol=1e-12)
        assert rec.means.shape == (params.G, rec.mis_idx.size)


def test_fractional_means_match_conditional_gaussian(rng):
    """Each mu_ig cross-checked against the standalone conditional operator."""
    data, params = _fitted(rng)
    res = impute(data, params)
    pi = e_step(data, params).pi
    xa = np.hstack([np.ones((data.n, 1)), data.x])
    for rec in res.fractional[:20]:
        i = rec.row
        obs = np.flatnonzero(data.delta[i])
        np.testing.assert_allclose(rec.weights, pi[i], atol=1e-10)
        for g in range(params.G):
            block = GaussianBlock(xa[i] @ params.B[g], params.Sigma[g],
                                  obs, rec.mis_idx)
            mu, _cov = conditional_gaussian(block, data.y[i, obs])
            np.testing.assert_allclose(rec.means[g], mu, atol=1e-7)


def test_imputed_entries_blend_with_weights(rng):
    data, params = _fitted(rng)
    res = impute(data, params)
    for rec in res.fractional[:10]:
        blend = rec.weights @ rec.means
        np.testing.assert_allclose(res.y_imputed[rec.row, rec.mis_idx],
                                   blend, atol=1e-12)
    obs_mask = data.delta.astype(bool)
    np.testing.assert_array_equal(res.y_imputed[obs_mask], data.y[obs_mask])


# ---------------------------------------------------------------------------
# estimators
# ---------------------------------------------------------------------------

def test_estimate_mean_is_column_mean(rng):
    data, params = _fitted(rng)
    res = impute(data, params)
    np.testing.assert_allclose(estimate_mean(data, res),
                               res.y_imputed.mean(axis=0), atol=1e-14)


def test_linear_estimating_equation_equals_mean(rng):
    data, params = _fitted(rng, p=1)
    res = impute(data, params)
    xi = solve_estimating_equation(data, res,
                                   lambda xi, x, y: y[0] - xi[0],
                                   np.zeros(1))
    np.testing.assert_allclose(xi, estimate_mean(data, res), atol=1e-8)


def test_indicator_equation_on_complete_data_is_ecdf(rng):
    data, params = _fitted(rng, missing=0.0, p=1)
    res = impute(data, params)
    c = float(np.median(data.y[:, 0]))
    xi = solve_estimating_equation(
        data, res, lambda xi, x, y: float(y[0] <= c) - xi[0], np.array([0.5]))
    np.testing.assert_allclose(xi[0], np.mean(data.y[:, 0] <= c), atol=1e-8)


def test_quadratic_equation_matches_grid_oracle(rng):
    data, params = _fitted(rng, p=1, n=80)
    res = impute(data, params)

    def U(xi, x, y):
        return np.array([(y[0] - xi[0]) ** 3 + (y[0] - xi[0])])

    xi = solve_estimating_equation(data, res, U, np.zeros(1), tol=1e-12)

    def mean_score(v):
        total = 0.0
        frac = {r.row: r for r in res.fractional}
        for i in range(data.n):
            if i in frac:
                rec = frac[i]
                for g in range(rec.weights.size):
                    total += rec.weights[g] * U(np.array([v]), data.x[i],
                                                rec.means[g])[0]
            else:
                total += U(np.array([v]), data.x[i], data.y[i])[0]
        return total / data.n

    grid = np.linspace(xi[0] - 1.0, xi[0] + 1.0, 20001)
    vals = np.array([mean_score(v) for v in grid[::500]])
    # sign change brackets the root found by Newton
    coarse = grid[::500]
    k = int(np.argmin(np.abs(vals)))
    assert abs(coarse[k] - xi[0]) <= (coarse[1] - coarse[0])
    assert abs(mean_score(xi[0])) < 1e-6


# ---------------------------------------------------------------------------
# jackknife
# ---------------------------------------------------------------------------

def test_jackknife_matches_hand_rolled_loop(rng):
    data = random_mixture_dataset(rng, n=60, missing=0.0)
    pipeline = lambda d: d.y.mean(axis=0)
    K = 10
    jk = jackknife(data, pipeline, K, seed=9)
    # reproduce the partition and formula independently
    r2 = np.random.default_rng(np.random.SeedSequence(9).spawn(1)[0])
    groups = np.array_split(r2.permutation(60), K)
    reps = []
    for grp in groups:
        keep = np.setdiff1d(np.arange(60), grp)
        reps.append(data.y[keep].mean(axis=0))
    reps = np.array(reps)
    var = (K - 1) / K * ((reps - reps.mean(axis=0)) ** 2).sum(axis=0)
    np.testing.assert_allclose(jk.variance, var, atol=1e-12)
    np.testing.assert_allclose(jk.point, data.y.mean(axis=0), atol=1e-12)
    np.testing.assert_allclose(jk.ci_upper - jk.point, 1.96 * np.sqrt(var),
                               atol=1e-12)


def test_jackknife_variance_permutation_invariant(rng):
    """The variance formula ignores the order in which groups are deleted."""
    data = random_mixture_dataset(rng, n=40, missing=0.0)
    K = 8
    r2 = np.random.default_rng(np.random.SeedSequence(3).spawn(1)[0])
    groups = np.array_split(r2.permutation(40), K)
    reps = np.array([data.y[np.setdiff1d(np.arange(40), g)].mean(axis=0)
                     for g in groups])
    var_fwd = (K - 1) / K * ((reps - reps.mean(0)) ** 2).sum(0)
    rev = reps[::-1]
    var_rev = (K - 1) / K * ((rev - rev.mean(0)) ** 2).sum(0)
    np.testing.assert_allclose(var_fwd, var_rev, atol=1e-15)
    jk = jackknife(data, lambda d: d.y.mean(axis=0), K, seed=3)
    np.testing.assert_allclose(jk.variance, var_fwd, atol=1e-12)


def test_jackknife_iid_mean_variance_close_to_s2_over_n(rng):
    n = 600
    y = rng.standard_normal((n, 1))
    data = Dataset(np.zeros((n, 1)), y, np.ones((n, 1), dtype=int))
    jk = jackknife(data, lambda d: d.y.mean(axis=0), 100, seed=0)
    expect = np.var(y, ddof=1) / n
    assert 0.5 * expect < jk.variance[0] < 2.0 * expect


def test_jackknife_group_bounds(rng):
    data = random_mixture_dataset(rng, n=10)
    with pytest.raises(ValueError):
        jackknife(data, lambda d: d.y.mean(axis=0), 1)
    with pytest.raises(ValueError):
        jackknife(data, lambda d: d.y.mean(axis=0), 11)


def test_jackknife_replicate_failure_names_group(rng):
    data = random_mixture_dataset(rng, n=20, missing=0.0)
    calls = {"k": 0}

    def pipeline(d):
        calls["k"] += 1
        if calls["k"] == 4:              # full-sample call is #1; group 2 is #4
            raise RuntimeError("boom")
        return d.y.mean(axis=0)

    with pytest.raises(FitError, match="group 2"):
        jackknife(data, pipeline, 5, seed=1)
