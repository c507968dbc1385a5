"""Lasso-penalized EM for a scalar response with many covariates.

Expert coefficients are updated by cyclic coordinate descent with
soft-thresholding; the gate rows are updated one component at a time through a
partial quadratic (working-response) approximation, also solved by coordinate
descent.  Covariates are standardized internally over respondents and the
coefficients are mapped back to the original scale on return.  Intercepts are
never penalized.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.cluster.vq import kmeans2
from scipy.special import expit, logsumexp

from .model import DataError, Dataset, FitError, gate_prob_matrix
from .em import ALPHA_CAP, COLLAPSE_FRAC, FitConfig, FitReport
from .model import CgmmParams

OMEGA_FLOOR = 1e-5


@dataclass
class PenaltyConfig:
    lambda_grid: np.ndarray = field(
        default_factory=lambda: np.geomspace(100.0, 0.1, 50))
    cv_folds: int = 10
    inner_cd_iter: int = 8        # CD cycles per EM iteration (warm-started)
    cd_tol: float = 1e-8

    def __post_init__(self):
        self.lambda_grid = np.asarray(self.lambda_grid, dtype=float)
        if self.lambda_grid.size == 0 or (self.lambda_grid <= 0).any():
            raise ValueError("lambda grid must be strictly positive")
        if (np.diff(self.lambda_grid) >= 0).any():
            raise ValueError("lambda grid must be sorted descending")
        if self.cv_folds < 2:
            raise ValueError("cv_folds must be >= 2")


@dataclass
class PenalizedParams:
    """Gate and expert coefficients on the original covariate scale."""

    alpha: np.ndarray        # (G, q+1), row 1 zero
    beta: np.ndarray         # (G, q+1), column 0 is the intercept
    sigma2: np.ndarray       # (G,)

    def __post_init__(self):
        self.alpha = np.atleast_2d(np.asarray(self.alpha, dtype=float))
        self.beta = np.atleast_2d(np.asarray(self.beta, dtype=float))
        self.sigma2 = np.atleast_1d(np.asarray(self.sigma2, dtype=float))
        if np.abs(self.alpha[0]).max(initial=0.0) > 0:
            raise DataError("alpha row for component 1 must be zero")
        if (self.sigma2 <= 0).any():
            raise DataError("sigma2 must be positive")

    @property
    def G(self) -> int:
        return self.beta.shape[0]


# ---------------------------------------------------------------------------
# coordinate updates
# ---------------------------------------------------------------------------

def soft_threshold(z: float, gamma: float) -> float:
    """Shrink z toward zero by gamma, clamping to zero inside the threshold."""
    if z > gamma:
        return z - gamma
    if z < -gamma:
        return z + gamma
    return 0.0


def cd_update_beta(x: np.ndarray, y: np.ndarray, w: np.ndarray,
                   beta: np.ndarray, lam: float,
                   max_cycles: int = 200, tol: float = 1e-8) -> np.ndarray:
    """Weighted-lasso coordinate descent for one expert's coefficients.

    ``x`` is (n, q) without the intercept column; ``beta`` is (q+1,) with the
    unpenalized intercept first.  Cycles until the largest coefficient change
    drops below ``tol`` or ``max_cycles`` is reached.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    w = np.asarray(w, dtype=float)
    beta = np.asarray(beta, dtype=float).copy()
    q = x.shape[1]
    # Gram-matrix form: one weighted cross-product up front, then every
    # coordinate update is O(q) rather than O(n).
    xa = np.hstack([np.ones((x.shape[0], 1)), x])
    gram = xa.T @ (xa * w[:, None])
    c = xa.T @ (w * y)
    d = np.diag(gram)
    for _ in range(max_cycles):
        delta = 0.0
        if d[0] > 0:
            b0 = (c[0] - gram[0] @ beta + d[0] * beta[0]) / d[0]
            delta = abs(b0 - beta[0])
            beta[0] = b0
        for j in range(1, q + 1):
            if d[j] <= 0:
                if beta[j] != 0.0:
                    delta = max(delta, abs(beta[j]))
                    beta[j] = 0.0
                continue
            z = c[j] - gram[j] @ beta + d[j] * beta[j]
            bj = soft_threshold(z, lam) / d[j]
            if bj != beta[j]:
                delta = max(delta, abs(bj - beta[j]))
                beta[j] = bj
        if delta < tol:
            break
    return beta


def gate_partial_quadratic(x: np.ndarray, pi: np.ndarray, alpha: np.ndarray,
                           lam: float, max_cycles: int = 200,
                           tol: float = 1e-8):
    """One partial Newton pass over the gate rows g = 2..G.

    For each row a one-vs-rest logistic working response is formed at the
    current coefficients and the resulting penalized weighted least-squares
    subproblem is solved by coordinate descent.  Returns
    ``(alpha, skipped_components)``.
    """
    x = np.asarray(x, dtype=float)
    alpha = np.asarray(alpha, dtype=float).copy()
    G = alpha.shape[0]
    skipped = []
    for g in range(1, G):
        eta = alpha[g, 0] + x @ alpha[g, 1:]
        p = expit(eta)
        omega = p * (1.0 - p)
        if (omega < OMEGA_FLOOR).all():
            skipped.append(g + 1)
            continue
        omega = np.maximum(omega, OMEGA_FLOOR)
        h = eta + (pi[:, g] - p) / omega
        alpha[g] = cd_update_beta(x, h, omega, alpha[g], lam,
                                  max_cycles=max_cycles, tol=tol)
        alpha[g] = np.clip(alpha[g], -ALPHA_CAP, ALPHA_CAP)
    return alpha, skipped


# ---------------------------------------------------------------------------
# standardization helpers
# ---------------------------------------------------------------------------

def _resp_standardizer(data: Dataset):
    resp = data.delta[:, 0].astype(bool)
    base = data.x[resp] if resp.any() else data.x
    m = base.mean(axis=0)
    s = base.std(axis=0)
    s[s == 0] = 1.0
    return m, s


def _to_std(params: PenalizedParams, m: np.ndarray, s: np.ndarray) -> PenalizedParams:
    def conv(M):
        out = M.copy()
        out[:, 1:] = M[:, 1:] * s
        out[:, 0] = M[:, 0] + M[:, 1:] @ m
        return out
    return PenalizedParams(conv(params.alpha), conv(params.beta),
                           params.sigma2.copy())


def _to_orig(params: PenalizedParams, m: np.ndarray, s: np.ndarray) -> PenalizedParams:
    def conv(M):
        out = M.copy()
        out[:, 1:] = M[:, 1:] / s
        out[:, 0] = M[:, 0] - (M[:, 1:] / s) @ m
        return out
    return PenalizedParams(conv(params.alpha), conv(params.beta),
                           params.sigma2.copy())


# ---------------------------------------------------------------------------
# penalized EM
# ---------------------------------------------------------------------------

def _scalar_responsibilities(xa, y, resp, alpha, beta, sigma2):
    """(n, G) responsibilities; nonrespondent rows use the gate only."""
    loggate = np.log(np.clip(gate_prob_matrix(xa, alpha), 1e-300, None))
    logw = loggate.copy()
    mu = xa @ beta.T                                 # (n, G)
    dens = -0.5 * (np.log(2 * np.pi * sigma2)[None, :]
                   + (y[:, None] - mu) ** 2 / sigma2[None, :])
    logw[resp] += dens[resp]
    ll = float(logsumexp(logw, axis=1).sum())
    logw -= logw.max(axis=1, keepdims=True)
    w = np.exp(logw)
    w /= w.sum(axis=1, keepdims=True)
    return w, ll


def _penalty(alpha, beta, lam):
    return lam * (np.abs(alpha[1:, 1:]).sum() + np.abs(beta[:, 1:]).sum())


def _run_penalized(xs, y, resp, G, lam, pen, cfg, init, var_floor):
    n, q = xs.shape
    xa = np.hstack([np.ones((n, 1)), xs])
    if init is not None:
        alpha = init.alpha.copy()
        beta = init.beta.copy()
        sigma2 = init.sigma2.copy()
    else:
        raise FitError("penalized EM requires an initial state")
    trace = []
    converged = False
    for _ in range(cfg.max_iter):
        pi, ll = _scalar_responsibilities(xa, y, resp, alpha, beta, sigma2)
        if pi.sum(axis=0).min() < COLLAPSE_FRAC * n:
            raise FitError("component collapse")
        obj = ll - _penalty(alpha, beta, lam)
        trace.append(obj)
        if len(trace) > 1 and abs(trace[-1] - trace[-2]) / (abs(trace[-1]) + 1.0) < cfg.tol:
            converged = True
            break
        for g in range(G):
            wg = pi[resp, g]
            beta[g] = cd_update_beta(xs[resp], y[resp], wg, beta[g], lam,
                                     max_cycles=pen.inner_cd_iter,
                                     tol=pen.cd_tol)
            res = y[resp] - xa[resp] @ beta[g]
            ws = wg.sum()
            if ws > 0:
                sigma2[g] = max(float(wg @ (res * res) / ws), var_floor)
        if G > 1:
            alpha, _ = gate_partial_quadratic(xs, pi, alpha, lam,
                                              max_cycles=pen.inner_cd_iter,
                                              tol=pen.cd_tol)
    state = PenalizedParams(alpha, beta, sigma2)
    return state, np.asarray(trace), converged


def _init_state(xs, y, resp, G, rng) -> PenalizedParams:
    n, q = xs.shape
    ycomp = y.copy()
    if resp.any():
        ycomp[~resp] = y[resp].mean()
    feats = np.hstack([xs, ycomp[:, None]])
    sd = feats.std(axis=0)
    sd[sd == 0] = 1.0
    feats = (feats - feats.mean(axis=0)) / sd
    feats = feats + 1e-3 * rng.standard_normal(feats.shape)
    if G == 1:
        labels = np.zeros(n, dtype=int)
    else:
        _c, labels = kmeans2(feats, G, minit="++",
                             seed=int(rng.integers(2**31 - 1)))
    beta = np.zeros((G, q + 1))
    sigma2 = np.ones(G)
    base_var = float(np.var(y[resp])) if resp.sum() > 1 else 1.0
    for g in range(G):
        sel = resp & (labels == g)
        if sel.sum() >= 2:
            beta[g, 0] = y[sel].mean()
            sigma2[g] = max(float(np.var(y[sel])), 1e-3 * max(base_var, 1e-12))
        elif resp.any():
            beta[g, 0] = y[resp].mean()
            sigma2[g] = max(base_var, 1e-12)
    return PenalizedParams(np.zeros((G, q + 1)), beta, sigma2)


def fit_penalized_em(data: Dataset, cfg: FitConfig, pen: PenaltyConfig,
                     lam: float, init: PenalizedParams | None = None):
    """Penalized EM at a single lambda; returns (PenalizedParams, FitReport).

    ``init`` (original-scale parameters, e.g. the previous solution on a
    lambda path) turns the fit into a single warm-started run.
    """
    if data.p != 1:
        raise DataError("penalized fitting requires a scalar response")
    y = data.y[:, 0].copy()
    resp = data.delta[:, 0].astype(bool)
    y[~resp] = 0.0
    m, s = _resp_standardizer(data)
    xs = (data.x - m) / s
    var_floor = 1e-10 * max(float(np.var(y[resp])) if resp.sum() > 1 else 1.0,
                            1e-300)
    best = None
    if init is not None:
        state0 = _to_std(init, m, s)
        best = _run_penalized(xs, y, resp, cfg.G, lam, pen, cfg, state0, var_floor)
    else:
        streams = np.random.SeedSequence(cfg.seed).spawn(cfg.n_starts)
        for st in streams:
            rng = np.random.default_rng(st)
            state0 = _init_state(xs, y, resp, cfg.G, rng)
            try:
                out = _run_penalized(xs, y, resp, cfg.G, lam, pen, cfg,
                                     state0, var_floor)
            except FitError:
                continue
            if best is None or out[1][-1] > best[1][-1]:
                best = out
        if best is None:
            raise FitError("fit failed: all starts degenerate")
    state, trace, converged = best
    params = _to_orig(state, m, s)
    nz = int((state.alpha[1:, 1:] != 0).sum() + (state.beta != 0).sum()) + cfg.G
    bic = float(-2.0 * trace[-1] + nz * np.log(data.n))
    report = FitReport(_as_cgmm(params), trace, converged, bic, len(trace) - 1)
    return params, report


def _as_cgmm(params: PenalizedParams) -> CgmmParams:
    G = params.G
    return CgmmParams(G, params.alpha,
                      [params.beta[g][:, None] for g in range(G)],
                      [np.array([[params.sigma2[g]]]) for g in range(G)])


def penalized_predict(data: Dataset, params: PenalizedParams) -> np.ndarray:
    """Imputed conditional mean using the gate only (no response information)."""
    xa = np.hstack([np.ones((data.n, 1)), data.x])
    probs = gate_prob_matrix(xa, params.alpha)
    return (probs * (xa @ params.beta.T)).sum(axis=1)


def penalized_impute(data: Dataset, params: PenalizedParams) -> np.ndarray:
    """Completed response: observed values kept, missing filled by the
    responsibility-weighted component means (gate-only weights, since the
    response itself is missing)."""
    out = data.y[:, 0].copy()
    miss = ~data.delta[:, 0].astype(bool)
    if miss.any():
        sub = data.subset(miss)
        out[miss] = penalized_predict(sub, params)
    return out


# ---------------------------------------------------------------------------
# cross-validation
# ---------------------------------------------------------------------------

def penalized_path(data: Dataset, cfg: FitConfig, pen: PenaltyConfig):
    """Warm-started fits along the descending lambda grid.

    Returns a list of (lambda, PenalizedParams, FitReport)."""
    out = []
    prev = None
    for lam in pen.lambda_grid:
        params, report = fit_penalized_em(data, cfg, pen, float(lam), init=prev)
        out.append((float(lam), params, report))
        prev = params
    return out


def cv_select_lambda(data: Dataset, cfg: FitConfig, pen: PenaltyConfig):
    """10-fold (by default) cross-validation over the lambda grid.

    Folds are stratified over respondent rows; nonrespondents stay in every
    training set.  Held-out respondents are scored by the squared error of the
    gate-weighted conditional-mean prediction.  Returns
    ``(best_lambda, curve)`` where ``curve`` is (n_lambda, 2) of
    (lambda, mean CV error); ties go to the larger lambda.
    """
    resp_idx = np.flatnonzero(data.delta[:, 0])
    n_folds = pen.cv_folds
    if resp_idx.size < n_folds:
        n_folds = max(2, int(resp_idx.size))
    rng = np.random.default_rng(np.random.SeedSequence(cfg.seed).spawn(1)[0])
    perm = rng.permutation(resp_idx)
    folds = [f for f in np.array_split(perm, n_folds) if f.size > 0]
    n_lam = pen.lambda_grid.size
    sq_err = np.zeros(n_lam)
    n_held = np.zeros(n_lam)
    for fold in folds:
        keep = np.setdiff1d(np.arange(data.n), fold)
        train = data.subset(keep)
        held = data.subset(fold)
        prev = None
        for i, lam in enumerate(pen.lambda_grid):
            params, _rep = fit_penalized_em(train, cfg, pen, float(lam),
                                            init=prev)
            prev = params
            pred = penalized_predict(held, params)
            sq_err[i] += float(((pred - held.y[:, 0]) ** 2).sum())
            n_held[i] += fold.size
    curve = sq_err / n_held
    best_i = int(np.argmin(curve))          # grid descends: first win = larger lambda
    return float(pen.lambda_grid[best_i]), np.column_stack([pen.lambda_grid, curve])
