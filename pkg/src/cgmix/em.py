"""EM fitting of the conditional Gaussian mixture under complete and missing data.

Responsibilities and observed-data log-likelihoods are computed in log space,
grouped by missingness pattern so that each (pattern, component) pair costs one
Cholesky factorization.  The expert M-step under partial response uses the
standard Gaussian-EM sufficient statistics: missing coordinates are replaced by
their component-conditional means and the residual covariance accrues the
conditional-covariance correction.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.cluster.vq import kmeans2
from scipy.linalg import cho_factor, cho_solve, solve_triangular
from scipy.special import logsumexp

from .model import (CgmmParams, Dataset, DesignSpec, FitError,
                    Responsibilities, default_cov_floor, floor_spd,
                    gate_prob_matrix)

ALPHA_CAP = 30.0           # gate coefficient cap against separation blow-up
COLLAPSE_FRAC = 1e-6       # component mass below this fraction of n aborts a start


@dataclass
class FitConfig:
    G: int = 1
    max_iter: int = 500
    tol: float = 1e-8
    n_starts: int = 5
    seed: int = 0
    init: str = "kmeans"    # or "random-responsibility"

    def __post_init__(self):
        if self.tol <= 0 or self.max_iter < 1 or self.n_starts < 1 or self.G < 1:
            raise ValueError("invalid FitConfig")
        if self.init not in ("kmeans", "random-responsibility"):
            raise ValueError(f"unknown init scheme {self.init!r}")


@dataclass
class FitReport:
    params: CgmmParams
    loglik_trace: np.ndarray
    converged: bool
    bic: float
    n_iter: int
    warnings: list = field(default_factory=list)


# ---------------------------------------------------------------------------
# pattern bookkeeping
# ---------------------------------------------------------------------------

_PATTERN_CACHE: dict = {}


def _patterns(delta: np.ndarray):
    """Group row indices by missingness pattern; yields (obs_idx, mis_idx, rows).

    Memoized on the indicator bytes: the grouping is recomputed many times per
    EM run on an immutable matrix."""
    key = (delta.shape, delta.tobytes())
    hit = _PATTERN_CACHE.get(key)
    if hit is not None:
        return hit
    uniq, inv = np.unique(delta, axis=0, return_inverse=True)
    out = []
    for k in range(uniq.shape[0]):
        obs = np.flatnonzero(uniq[k])
        mis = np.flatnonzero(1 - uniq[k])
        out.append((obs, mis, np.flatnonzero(inv == k)))
    if len(_PATTERN_CACHE) >= 128:
        _PATTERN_CACHE.clear()
    _PATTERN_CACHE[key] = out
    return out


def _log_obs_density(data: Dataset, params: CgmmParams, spec: DesignSpec,
                     floor: float) -> np.ndarray:
    """(n, G) matrix of log f(y_obs | x, z=g); all-missing rows get 0."""
    xm = spec.mean_design(data.x)
    n = data.n
    out = np.zeros((n, params.G))
    for obs, _mis, rows in _patterns(data.delta):
        if obs.size == 0:
            continue
        yo = data.y[np.ix_(rows, obs)]
        r = obs.size
        for g in range(params.G):
            mean = xm[rows] @ params.B[g][:, obs]
            cov = floor_spd(params.Sigma[g][np.ix_(obs, obs)], floor)
            L = np.linalg.cholesky(cov)
            z = solve_triangular(L, (yo - mean).T, lower=True)
            logdet = 2.0 * np.log(np.diag(L)).sum()
            vals = -0.5 * (r * np.log(2 * np.pi) + logdet + (z * z).sum(axis=0))
            if not np.isfinite(vals).all():
                i = rows[int(np.flatnonzero(~np.isfinite(vals))[0])]
                raise FitError(f"degenerate component {g + 1} at row {i}")
            out[rows, g] = vals
    return out


# ---------------------------------------------------------------------------
# E-step and log-likelihood
# ---------------------------------------------------------------------------

def _log_joint(data: Dataset, params: CgmmParams, spec: DesignSpec,
               floor: float) -> np.ndarray:
    xg = spec.gate_design(data.x)
    loggate = np.log(np.clip(gate_prob_matrix(xg, params.alpha), 1e-300, None))
    return loggate + _log_obs_density(data, params, spec, floor)


def _posteriors(data: Dataset, params: CgmmParams, spec: DesignSpec,
                floor: float):
    """Responsibilities and the observed log-likelihood in one density pass."""
    logw = _log_joint(data, params, spec, floor)
    ll = float(logsumexp(logw, axis=1).sum())
    logw -= logw.max(axis=1, keepdims=True)
    w = np.exp(logw)
    w /= w.sum(axis=1, keepdims=True)
    return Responsibilities(w), ll


def e_step(data: Dataset, params: CgmmParams,
           spec: DesignSpec = DesignSpec(),
           cov_floor: float | None = None) -> Responsibilities:
    """Posterior component probabilities given current parameters."""
    floor = default_cov_floor(data) if cov_floor is None else cov_floor
    return _posteriors(data, params, spec, floor)[0]


def observed_loglik(data: Dataset, params: CgmmParams,
                    spec: DesignSpec = DesignSpec(),
                    cov_floor: float | None = None) -> float:
    """Sum over rows of log sum_g pi_g(x) f(y_obs | x, g)."""
    floor = default_cov_floor(data) if cov_floor is None else cov_floor
    logw = _log_joint(data, params, spec, floor)
    return float(logsumexp(logw, axis=1).sum())


# ---------------------------------------------------------------------------
# M-steps
# ---------------------------------------------------------------------------

def m_step_gate(xg: np.ndarray, pi: Responsibilities, alpha_init: np.ndarray,
                max_iter: int = 50, grad_tol_per_row: float = 1e-8):
    """Solve the responsibility-weighted multinomial-logit score equation.

    Newton-Raphson with step-halving on the weighted log-likelihood; the first
    component's row stays zero.  Returns ``(alpha, separation_warning)``.
    """
    P = pi.pi
    n, G = P.shape
    k = xg.shape[1]
    if G == 1:
        return np.zeros((1, k)), False
    alpha = alpha_init.copy()
    free = G - 1

    def loglik(a):
        probs = gate_prob_matrix(xg, a)
        return float((P * np.log(np.clip(probs, 1e-300, None))).sum())

    ll = loglik(alpha)
    best_alpha, best_ll = alpha, ll      # best iterate satisfying the cap
    warn = False
    for _ in range(max_iter):
        probs = gate_prob_matrix(xg, alpha)
        grad = np.empty(free * k)
        for g in range(1, G):
            grad[(g - 1) * k:g * k] = xg.T @ (P[:, g] - probs[:, g])
        if np.linalg.norm(grad) <= grad_tol_per_row * n:
            break
        H = np.empty((free * k, free * k))
        for g in range(1, G):
            for h in range(g, G):
                wgh = probs[:, g] * ((1.0 if g == h else 0.0) - probs[:, h])
                blk = xg.T @ (xg * wgh[:, None])
                H[(g - 1) * k:g * k, (h - 1) * k:h * k] = blk
                if h != g:
                    H[(h - 1) * k:h * k, (g - 1) * k:g * k] = blk.T
        try:
            step = np.linalg.solve(H + 1e-10 * np.eye(free * k), grad)
        except np.linalg.LinAlgError:
            step = grad / max(1.0, np.abs(np.diag(H)).max())
        t = 1.0
        for _ in range(20):
            cand = alpha.copy()
            cand[1:] += t * step.reshape(free, k)
            ll_new = loglik(cand)
            if ll_new >= ll - 1e-12:
                alpha, ll = cand, ll_new
                break
            t *= 0.5
        else:
            break
        if np.abs(alpha).max() > ALPHA_CAP:
            # project back into the cap, but never below the best capped
            # iterate: clipping is not monotone in the objective
            clipped = np.clip(alpha, -ALPHA_CAP, ALPHA_CAP)
            clipped[0] = 0.0
            ll_c = loglik(clipped)
            if ll_c > best_ll:
                best_alpha, best_ll = clipped, ll_c
            warn = True
            break
        best_alpha, best_ll = alpha, ll
    return best_alpha, warn


def m_step_experts(data: Dataset, pi: Responsibilities, spec: DesignSpec,
                   params: CgmmParams | None = None,
                   cov_floor: float | None = None):
    """Responsibility-weighted Gaussian regression update for every expert.

    ``params`` supplies the current values used to condition missing
    coordinates; it may be omitted for complete data.  Returns
    ``(new_B, new_Sigma, rank_warning)``.
    """
    floor = default_cov_floor(data) if cov_floor is None else cov_floor
    xm = spec.mean_design(data.x)
    n, p = data.n, data.p
    G = pi.pi.shape[1]
    pats = _patterns(data.delta)
    incomplete = any(m.size for _o, m, _r in pats)
    if incomplete and params is None:
        raise FitError("current parameters required for the missing-data expert update")
    new_B, new_Sigma = [], []
    warn = False
    for g in range(G):
        w = pi.pi[:, g].copy()
        yhat = data.y.copy()
        corr = np.zeros((p, p))
        for obs, mis, rows in pats:
            if obs.size == 0:
                w[rows] = 0.0         # empty observed block: zero score
                yhat[rows] = 0.0
                continue
            if mis.size == 0:
                continue
            mean = xm[rows] @ params.B[g]
            S = floor_spd(params.Sigma[g], floor)
            Soo = S[np.ix_(obs, obs)]
            Smo = S[np.ix_(mis, obs)]
            c, low = cho_factor(Soo, lower=True)
            gain = cho_solve((c, low), Smo.T).T
            resid_obs = data.y[np.ix_(rows, obs)] - mean[:, obs]
            yhat[np.ix_(rows, mis)] = mean[:, mis] + resid_obs @ gain.T
            cc = S[np.ix_(mis, mis)] - gain @ Smo.T
            wsum = w[rows].sum()
            corr[np.ix_(mis, mis)] += wsum * cc
        wtot = w.sum()
        if wtot <= 0:
            raise FitError(f"component {g + 1} received zero weight")
        A = xm.T @ (xm * w[:, None])
        rhs = xm.T @ (yhat * w[:, None])
        try:
            cA, lowA = cho_factor(A, lower=True)
        except np.linalg.LinAlgError:
            A = A + 1e-8 * np.eye(A.shape[0])
            cA, lowA = cho_factor(A, lower=True)
            warn = True
        Bg = cho_solve((cA, lowA), rhs)
        resid = yhat - xm @ Bg
        Sg = (resid.T @ (resid * w[:, None]) + corr) / wtot
        Sg = 0.5 * (Sg + Sg.T)
        # keep the exact Q-maximizer: flooring here would break monotonicity.
        # Near-singular components are legitimate (and do arise with skewed
        # data); only a covariance that no longer factorizes aborts the start.
        try:
            cho_factor(Sg, lower=True)
        except np.linalg.LinAlgError:
            raise FitError(f"component {g + 1} variance collapse")
        new_B.append(Bg)
        new_Sigma.append(Sg)
    return new_B, new_Sigma, warn


# ---------------------------------------------------------------------------
# initialization, fitting, selection
# ---------------------------------------------------------------------------

def _completed_y(data: Dataset) -> np.ndarray:
    y = data.y.copy()
    for j in range(data.p):
        obs = data.delta[:, j].astype(bool)
        fill = data.y[obs, j].mean() if obs.any() else 0.0
        y[~obs, j] = fill
    return y


def _init_responsibilities(data: Dataset, G: int, scheme: str,
                           rng: np.random.Generator) -> Responsibilities:
    n = data.n
    if G == 1:
        return Responsibilities(np.ones((n, 1)))
    if scheme == "random-responsibility":
        pi = rng.dirichlet(np.ones(G), size=n)
        return Responsibilities(pi)
    feats = np.hstack([data.x, _completed_y(data)])
    sd = feats.std(axis=0)
    sd[sd == 0] = 1.0
    feats = (feats - feats.mean(axis=0)) / sd
    feats = feats + 1e-3 * rng.standard_normal(feats.shape)   # per-start jitter
    _cent, labels = kmeans2(feats, G, minit="++",
                            seed=int(rng.integers(2**31 - 1)))
    pi = np.full((n, G), 1e-3)
    pi[np.arange(n), labels] = 1.0
    pi /= pi.sum(axis=1, keepdims=True)
    return Responsibilities(pi)


def _initial_params(data: Dataset, spec: DesignSpec, pi: Responsibilities,
                    floor: float) -> CgmmParams:
    """Complete-data M-step on column-mean-completed y, used only to seed EM."""
    comp = Dataset(data.x, _completed_y(data), np.ones_like(data.delta))
    G = pi.pi.shape[1]
    k_gate = spec.n_gate_coef(data.q)
    B, Sigma, _ = m_step_experts(comp, pi, spec, None, floor)
    alpha, _ = m_step_gate(spec.gate_design(data.x), pi,
                           np.zeros((G, k_gate)), max_iter=10)
    return CgmmParams(G, alpha, B, Sigma)


def canonical_order(params: CgmmParams, mean_intercept: bool = True) -> CgmmParams:
    """Relabel components by descending first mean coefficient (ties by intercept)."""
    G = params.G
    if G == 1:
        return params.copy()
    slope_row = 1 if (mean_intercept and params.B[0].shape[0] > 1) else 0
    keys = [(-params.B[g][slope_row, 0], -params.B[g][0, 0]) for g in range(G)]
    perm = sorted(range(G), key=lambda g: keys[g])
    alpha = params.alpha[perm]
    alpha = alpha - alpha[0]          # re-anchor: softmax shift invariance
    return CgmmParams(G, alpha,
                      [params.B[g].copy() for g in perm],
                      [params.Sigma[g].copy() for g in perm])


def _run_one_start(data: Dataset, spec: DesignSpec, cfg: FitConfig,
                   rng: np.random.Generator, floor: float):
    pi = _init_responsibilities(data, cfg.G, cfg.init, rng)
    params = _initial_params(data, spec, pi, floor)
    xg = spec.gate_design(data.x)
    warnings = []
    trace = []
    converged = False
    for it in range(cfg.max_iter + 1):
        pi, ll = _posteriors(data, params, spec, floor)
        trace.append(ll)
        if len(trace) > 1 and (abs(trace[-1] - trace[-2])
                               / (abs(trace[-1]) + 1.0) < cfg.tol):
            converged = True
            break
        if it == cfg.max_iter:
            break
        mass = pi.pi.sum(axis=0)
        if mass.min() < COLLAPSE_FRAC * data.n:
            raise FitError("component collapse")
        alpha, warn_g = m_step_gate(xg, pi, params.alpha, max_iter=15)
        B, Sigma, warn_e = m_step_experts(data, pi, spec, params, floor)
        if warn_g:
            warnings.append("gate separation: coefficients capped")
        if warn_e:
            warnings.append("rank-deficient expert design: ridge added")
        params = CgmmParams(cfg.G, alpha, B, Sigma)
    return params, np.array(trace), converged, sorted(set(warnings))


def fit_em_warm(data: Dataset, spec: DesignSpec, params: CgmmParams,
                max_iter: int = 50, tol: float = 1e-8) -> FitReport:
    """Single EM run started from given parameters (no restarts, no re-init).

    Used by jackknife replication, where a cold multi-start refit per deleted
    group would be prohibitive.
    """
    floor = default_cov_floor(data)
    xg = spec.gate_design(data.x)
    params = params.copy()
    trace = []
    converged = False
    for it in range(max_iter + 1):
        pi, ll = _posteriors(data, params, spec, floor)
        trace.append(ll)
        if len(trace) > 1 and (abs(trace[-1] - trace[-2])
                               / (abs(trace[-1]) + 1.0) < tol):
            converged = True
            break
        if it == max_iter:
            break
        try:
            alpha, _w = m_step_gate(xg, pi, params.alpha, max_iter=15)
            B, Sigma, _w2 = m_step_experts(data, pi, spec, params, floor)
        except FitError:
            # warm refits start from a valid fit; if an update step can no
            # longer be computed (a near-singular component pushed over the
            # numerical edge), stop at the last valid iterate instead of
            # failing the replicate
            break
        params = CgmmParams(params.G, alpha, B, Sigma)
    report = FitReport(params, np.array(trace), converged, 0.0, len(trace) - 1)
    report.bic = bic(report, data.n)
    return report


def fit_em(data: Dataset, spec: DesignSpec, cfg: FitConfig) -> FitReport:
    """Multi-start EM; returns the best run with canonically ordered components."""
    floor = default_cov_floor(data)
    streams = np.random.SeedSequence(cfg.seed).spawn(4 * cfg.n_starts)
    best = None
    for s in range(cfg.n_starts):
        done = False
        for attempt in range(4):        # re-draw a collapsed start a few times
            rng = np.random.default_rng(streams[4 * s + attempt])
            try:
                out = _run_one_start(data, spec, cfg, rng, floor)
                done = True
                break
            except FitError:
                continue
        if not done:
            continue
        # prefer converged runs: a run still climbing at max_iter is either
        # truncated or diverging toward a zero-variance component, and the
        # latter has an unboundedly large (meaningless) likelihood
        key = (out[2], out[1][-1])
        if best is None or key > (best[2], best[1][-1]):
            best = out
    if best is None:
        raise FitError("fit failed: all starts degenerate")
    params, trace, converged, warnings = best
    params = canonical_order(params, spec.mean_intercept)
    report = FitReport(params, trace, converged, 0.0, len(trace) - 1, warnings)
    report.bic = bic(report, data.n)
    return report


def num_free_params(G: int, k_gate: int, k_mean: int, p: int) -> int:
    """Free gate rows plus per-component regression and covariance entries."""
    return (G - 1) * k_gate + G * (k_mean * p + p * (p + 1) // 2)


def bic(report: FitReport, n: int) -> float:
    params = report.params
    d = num_free_params(params.G, params.alpha.shape[1],
                        params.B[0].shape[0], params.p)
    return float(-2.0 * report.loglik_trace[-1] + d * np.log(n))


def select_g(data: Dataset, spec: DesignSpec, cfg: FitConfig, g_range):
    """Fit every G in the range and return (argmin-BIC G, {G: FitReport})."""
    g_range = list(g_range)
    if not g_range:
        raise ValueError("g_range must be nonempty")
    reports, failures = {}, {}
    for G in g_range:
        sub = FitConfig(G=G, max_iter=cfg.max_iter, tol=cfg.tol,
                        n_starts=cfg.n_starts, seed=cfg.seed, init=cfg.init)
        try:
            reports[G] = fit_em(data, spec, sub)
        except FitError as exc:
            failures[G] = exc
    if not reports:
        raise FitError(f"fit failed for every G in {g_range}: {failures}")
    # BIC is meaningless for a run diverging toward a degenerate component,
    # so restrict the comparison to converged fits whenever any exist
    pool = [G for G in reports if reports[G].converged] or list(reports)
    best = min(sorted(pool), key=lambda G: (reports[G].bic, G))
    return best, reports
