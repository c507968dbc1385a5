"""Fractional imputation, downstream estimators, and jackknife intervals.

A fitted mixture turns each incomplete row into a weight system: the posterior
component probabilities given the observed part, paired with the
component-conditional means of the missing part.  Point imputations are the
weighted blend of those means; estimating equations average the estimating
function over the same weight system.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .model import (CgmmParams, Dataset, DesignSpec, FitError,
                    default_cov_floor, floor_spd)
from .em import _patterns, e_step


@dataclass
class FractionalRecord:
    """Weight system for one incomplete row: G (weight, conditional mean) pairs."""

    row: int
    mis_idx: np.ndarray
    weights: np.ndarray          # (G,), sums to 1
    means: np.ndarray            # (G, n_missing)


@dataclass
class ImputationResult:
    y_imputed: np.ndarray
    fractional: list = field(default_factory=list)
    params_used: CgmmParams | None = None


@dataclass
class JackknifeReport:
    point: np.ndarray
    variance: np.ndarray
    ci_lower: np.ndarray
    ci_upper: np.ndarray
    n_groups: int


def impute(data: Dataset, params: CgmmParams,
           spec: DesignSpec = DesignSpec()) -> ImputationResult:
    """Fill missing entries with the posterior-weighted conditional cell means."""
    floor = default_cov_floor(data)
    pi = e_step(data, params, spec, floor).pi
    xm = spec.mean_design(data.x)
    y_out = data.y.copy()
    records: dict[int, FractionalRecord] = {}
    G = params.G
    for obs, mis, rows in _patterns(data.delta):
        if mis.size == 0:
            continue
        means = np.empty((rows.size, G, mis.size))
        for g in range(G):
            mean_full = xm[rows] @ params.B[g]
            if obs.size == 0:
                means[:, g, :] = mean_full[:, mis]
                continue
            S = floor_spd(params.Sigma[g], floor)
            Soo = S[np.ix_(obs, obs)]
            Smo = S[np.ix_(mis, obs)]
            try:
                c, low = cho_factor(Soo, lower=True)
            except np.linalg.LinAlgError as exc:
                raise FitError("degenerate observed block") from exc
            gain = cho_solve((c, low), Smo.T).T
            resid = data.y[np.ix_(rows, obs)] - mean_full[:, obs]
            means[:, g, :] = mean_full[:, mis] + resid @ gain.T
        blend = np.einsum("ig,igm->im", pi[rows], means)
        y_out[np.ix_(rows, mis)] = blend
        for k, i in enumerate(rows):
            records[int(i)] = FractionalRecord(int(i), mis.copy(),
                                               pi[i].copy(), means[k].copy())
    fractional = [records[i] for i in sorted(records)]
    return ImputationResult(y_out, fractional, params.copy())


def estimate_mean(data: Dataset, result: ImputationResult) -> np.ndarray:
    """Columnwise mean mixing observed values and imputations."""
    if result.y_imputed.shape != data.y.shape:
        raise ValueError("imputation result does not match the dataset")
    return result.y_imputed.mean(axis=0)


def solve_estimating_equation(data: Dataset, result: ImputationResult, U,
                              xi0, max_iter: int = 100, tol: float = 1e-10):
    """Root of the fractionally imputed estimating equation.

    ``U(xi, x_row, y_row)`` returns a K-vector.  For incomplete rows the
    conditional expectation is approximated by evaluating U at each
    component's conditional mean and averaging with the fractional weights
    (exact when U is linear in the missing part).  Damped Newton with a
    forward-difference Jacobian.
    """
    xi = np.atleast_1d(np.asarray(xi0, dtype=float)).copy()
    K = xi.shape[0]
    frac = {rec.row: rec for rec in result.fractional}

    def mean_score(x):
        total = np.zeros(K)
        for i in range(data.n):
            rec = frac.get(i)
            if rec is None:
                total += np.atleast_1d(U(x, data.x[i], data.y[i]))
            else:
                yrow = data.y[i].copy()
                for g in range(rec.weights.shape[0]):
                    yrow[rec.mis_idx] = rec.means[g]
                    total += rec.weights[g] * np.atleast_1d(U(x, data.x[i], yrow))
        return total / data.n

    for _ in range(max_iter):
        F = mean_score(xi)
        if np.linalg.norm(F) < tol:
            return xi
        J = np.empty((K, K))
        for k in range(K):
            h = 1e-6 * max(1.0, abs(xi[k]))
            xp = xi.copy()
            xp[k] += h
            J[:, k] = (mean_score(xp) - F) / h
        try:
            step = np.linalg.solve(J, F)
        except np.linalg.LinAlgError as exc:
            raise FitError("singular Jacobian in estimating equation") from exc
        t = 1.0
        base = np.linalg.norm(F)
        for _ in range(30):
            cand = xi - t * step
            if np.linalg.norm(mean_score(cand)) < base:
                xi = cand
                break
            t *= 0.5
        else:
            xi = xi - step
    F = mean_score(xi)
    if np.linalg.norm(F) < 1e-6:
        return xi
    raise FitError(f"estimating equation did not converge; residual {F}")


def jackknife(data: Dataset, pipeline, n_groups: int,
              seed: int = 0) -> JackknifeReport:
    """Delete-a-group jackknife variance with normal-approximation 95% CIs.

    ``pipeline(dataset) -> estimate vector`` is re-run with each seeded random
    contiguous group of rows removed.
    """
    n = data.n
    if n_groups > n or n_groups < 2:
        raise ValueError("need 2 <= n_groups <= n")
    point = np.atleast_1d(np.asarray(pipeline(data), dtype=float))
    rng = np.random.default_rng(np.random.SeedSequence(seed).spawn(1)[0])
    perm = rng.permutation(n)
    groups = np.array_split(perm, n_groups)
    reps = np.empty((n_groups, point.shape[0]))
    for k, grp in enumerate(groups):
        keep = np.setdiff1d(np.arange(n), grp)
        try:
            reps[k] = np.atleast_1d(pipeline(data.subset(keep)))
        except Exception as exc:
            raise FitError(f"jackknife replicate failed for group {k}: {exc}") from exc
    center = reps.mean(axis=0)
    variance = (n_groups - 1) / n_groups * ((reps - center) ** 2).sum(axis=0)
    half = 1.96 * np.sqrt(variance)
    return JackknifeReport(point, variance, point - half, point + half, n_groups)
