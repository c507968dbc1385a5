"""Domain types and Gaussian/logit algebra shared by the fitting and imputation code.

The model is a mixture of Gaussian regression experts with a multinomial-logit
gate: the gate maps covariates to component probabilities, and each component
contributes a linear-Gaussian conditional for the study variables.  Everything
here is a pure function of its inputs; the EM machinery lives in :mod:`cgmix.em`.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_factor, cho_solve


class DataError(ValueError):
    """Raised when input data violates the documented contract."""


class FitError(RuntimeError):
    """Raised when a numerical procedure fails irrecoverably."""


# ---------------------------------------------------------------------------
# domain types
# ---------------------------------------------------------------------------

@dataclass
class Dataset:
    """Covariates ``x`` (fully observed), responses ``y`` and response mask ``delta``.

    ``delta[i, j] == 1`` means ``y[i, j]`` is observed; unobserved entries of
    ``y`` are ignored (they may hold NaN).
    """

    x: np.ndarray            # (n, q)
    y: np.ndarray            # (n, p)
    delta: np.ndarray        # (n, p), {0, 1}

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=float)
        self.y = np.asarray(self.y, dtype=float)
        self.delta = np.asarray(self.delta)
        if self.x.ndim != 2 or self.y.ndim != 2 or self.delta.shape != self.y.shape:
            raise DataError("x must be (n,q), y and delta must both be (n,p)")
        n, q = self.x.shape
        p = self.y.shape[1]
        if n < 1 or q < 1 or p < 1 or self.y.shape[0] != n:
            raise DataError("need n >= 1, q >= 1, p >= 1 with matching row counts")
        if not np.isfinite(self.x).all():
            raise DataError("x contains non-finite entries")
        mask = self.delta.astype(bool)
        if not np.isfinite(self.y[mask]).all():
            raise DataError("observed y entries must be finite")
        self.delta = mask.astype(np.int8)

    @property
    def n(self) -> int:
        return self.x.shape[0]

    @property
    def q(self) -> int:
        return self.x.shape[1]

    @property
    def p(self) -> int:
        return self.y.shape[1]

    def subset(self, rows) -> "Dataset":
        return Dataset(self.x[rows], self.y[rows], self.delta[rows])


@dataclass(frozen=True)
class DesignSpec:
    """Which covariate columns feed the gate and the expert means.

    ``None`` means "all columns".  Empty selections are legal only when the
    corresponding intercept is on (otherwise the design matrix is empty).
    """

    gate_cols: tuple | None = None
    mean_cols: tuple | None = None
    gate_intercept: bool = True
    mean_intercept: bool = True

    def _cols(self, which: str, q: int) -> tuple:
        sel = self.gate_cols if which == "gate" else self.mean_cols
        if sel is None:
            return tuple(range(q))
        sel = tuple(int(c) for c in sel)
        if any(c < 0 or c >= q for c in sel):
            raise DataError(f"{which} covariate index out of range for q={q}")
        return sel

    def gate_design(self, x: np.ndarray) -> np.ndarray:
        cols = self._cols("gate", x.shape[1])
        if not cols and not self.gate_intercept:
            raise DataError("empty gate design: no covariates and no intercept")
        return _augment(x[:, cols], self.gate_intercept)

    def mean_design(self, x: np.ndarray) -> np.ndarray:
        cols = self._cols("mean", x.shape[1])
        if not cols and not self.mean_intercept:
            raise DataError("empty mean design: no covariates and no intercept")
        return _augment(x[:, cols], self.mean_intercept)

    def n_gate_coef(self, q: int) -> int:
        return len(self._cols("gate", q)) + int(self.gate_intercept)

    def n_mean_coef(self, q: int) -> int:
        return len(self._cols("mean", q)) + int(self.mean_intercept)


def _augment(x: np.ndarray, intercept: bool) -> np.ndarray:
    if not intercept:
        return np.asarray(x, dtype=float)
    return np.hstack([np.ones((x.shape[0], 1)), x])


@dataclass
class CgmmParams:
    """Gate coefficients plus per-component regression coefficients and covariances.

    ``alpha`` has one row per component over the augmented gate design; the
    first row is pinned to zero for identifiability.  ``B[g]`` maps the
    augmented mean design to the p response means; ``Sigma[g]`` is the
    residual covariance of component g.
    """

    G: int
    alpha: np.ndarray                 # (G, k_gate)
    B: list = field(default_factory=list)      # G arrays, each (k_mean, p)
    Sigma: list = field(default_factory=list)  # G arrays, each (p, p)

    def __post_init__(self):
        self.alpha = np.asarray(self.alpha, dtype=float)
        self.B = [np.atleast_2d(np.asarray(b, dtype=float)) for b in self.B]
        self.Sigma = [np.atleast_2d(np.asarray(s, dtype=float)) for s in self.Sigma]
        if self.G < 1 or self.alpha.shape[0] != self.G:
            raise DataError("alpha must have one row per component")
        if len(self.B) != self.G or len(self.Sigma) != self.G:
            raise DataError("need one (B, Sigma) pair per component")
        if np.abs(self.alpha[0]).max(initial=0.0) > 0:
            raise DataError("alpha row for component 1 must be zero")

    @property
    def p(self) -> int:
        return self.B[0].shape[1]

    def copy(self) -> "CgmmParams":
        return CgmmParams(self.G, self.alpha.copy(),
                          [b.copy() for b in self.B],
                          [s.copy() for s in self.Sigma])


@dataclass
class Responsibilities:
    """Posterior component-membership probabilities, one row per unit."""

    pi: np.ndarray  # (n, G)

    def __post_init__(self):
        self.pi = np.asarray(self.pi, dtype=float)
        if self.pi.ndim != 2:
            raise DataError("pi must be 2-d")

    def validate(self, atol: float = 1e-12):
        if (self.pi < -atol).any() or (self.pi > 1 + atol).any():
            raise DataError("responsibilities outside [0, 1]")
        if np.abs(self.pi.sum(axis=1) - 1.0).max() > 1e-12:
            raise DataError("responsibility rows must sum to 1")


@dataclass
class GaussianBlock:
    """A Gaussian with its coordinates split into observed and missing parts."""

    mean: np.ndarray
    cov: np.ndarray
    obs_idx: np.ndarray
    mis_idx: np.ndarray

    def __post_init__(self):
        self.mean = np.asarray(self.mean, dtype=float)
        self.cov = np.atleast_2d(np.asarray(self.cov, dtype=float))
        self.obs_idx = np.asarray(self.obs_idx, dtype=int)
        self.mis_idx = np.asarray(self.mis_idx, dtype=int)
        p = self.mean.shape[0]
        both = np.sort(np.concatenate([self.obs_idx, self.mis_idx]))
        if not np.array_equal(both, np.arange(p)):
            raise DataError("obs_idx and mis_idx must partition the coordinates")


# ---------------------------------------------------------------------------
# operations
# ---------------------------------------------------------------------------

def gate_probs(x_row: np.ndarray, alpha: np.ndarray) -> np.ndarray:
    """Multinomial-logit component probabilities for one augmented covariate row."""
    return gate_prob_matrix(np.atleast_2d(np.asarray(x_row, dtype=float)), alpha)[0]


def gate_prob_matrix(xg: np.ndarray, alpha: np.ndarray) -> np.ndarray:
    """Row-wise softmax of ``xg @ alpha.T`` with max-subtraction for stability."""
    xg = np.asarray(xg, dtype=float)
    if not np.isfinite(xg).all():
        raise DataError("non-finite covariate")
    eta = xg @ alpha.T
    eta -= eta.max(axis=1, keepdims=True)
    np.exp(eta, out=eta)
    eta /= eta.sum(axis=1, keepdims=True)
    return eta


def gaussian_logpdf(y_sub: np.ndarray, mean_sub: np.ndarray, cov_sub: np.ndarray) -> float:
    """Multivariate normal log-density via Cholesky; the empty case returns 0."""
    y_sub = np.atleast_1d(np.asarray(y_sub, dtype=float))
    r = y_sub.shape[0]
    if r == 0:
        return 0.0
    mean_sub = np.atleast_1d(np.asarray(mean_sub, dtype=float))
    cov_sub = np.atleast_2d(np.asarray(cov_sub, dtype=float))
    try:
        c, low = cho_factor(cov_sub, lower=True)
    except np.linalg.LinAlgError as exc:
        raise FitError("degenerate covariance") from exc
    resid = y_sub - mean_sub
    z = cho_solve((c, low), resid)
    logdet = 2.0 * np.log(np.diag(c)).sum()
    return float(-0.5 * (r * np.log(2.0 * np.pi) + logdet + resid @ z))


def conditional_gaussian(block: GaussianBlock, y_obs_vals: np.ndarray):
    """Conditional mean and covariance of the missing part given the observed part.

    With no observed coordinates this is just the marginal (mean, cov) of the
    missing block.
    """
    o, m = block.obs_idx, block.mis_idx
    mu, S = block.mean, block.cov
    if o.size == 0:
        return mu[m].copy(), S[np.ix_(m, m)].copy()
    if m.size == 0:
        return np.empty(0), np.empty((0, 0))
    y_obs_vals = np.atleast_1d(np.asarray(y_obs_vals, dtype=float))
    Soo = S[np.ix_(o, o)]
    Smo = S[np.ix_(m, o)]
    try:
        c, low = cho_factor(Soo, lower=True)
    except np.linalg.LinAlgError as exc:
        raise FitError("degenerate observed block") from exc
    gain = cho_solve((c, low), Smo.T).T               # Smo @ Soo^{-1}
    cond_mean = mu[m] + gain @ (y_obs_vals - mu[o])
    cond_cov = S[np.ix_(m, m)] - gain @ Smo.T
    cond_cov = 0.5 * (cond_cov + cond_cov.T)
    return cond_mean, cond_cov


def component_mean(x_row: np.ndarray, B: np.ndarray, intercept: bool = True) -> np.ndarray:
    """Expert mean ``(1, x') B`` (or ``x' B`` without intercept)."""
    x_row = np.atleast_1d(np.asarray(x_row, dtype=float))
    B = np.atleast_2d(np.asarray(B, dtype=float))
    xa = np.concatenate([[1.0], x_row]) if intercept else x_row
    if xa.shape[0] != B.shape[0]:
        raise DataError(
            f"design length {xa.shape[0]} does not match coefficient rows {B.shape[0]}")
    return xa @ B


# ---------------------------------------------------------------------------
# covariance flooring
# ---------------------------------------------------------------------------

def default_cov_floor(data: Dataset) -> float:
    """Floor scale tied to the spread of the observed responses."""
    obs = data.y[data.delta.astype(bool)]
    if obs.size == 0:
        return 1e-8
    scale = float(np.var(obs)) if obs.size > 1 else 1.0
    # per-column variances when every column has observations
    col_vars = []
    for j in range(data.p):
        col = data.y[data.delta[:, j].astype(bool), j]
        if col.size > 1:
            col_vars.append(np.var(col))
    if col_vars:
        scale = max(col_vars)
    return 1e-8 * max(scale, 1e-300)


def floor_spd(cov: np.ndarray, floor: float) -> np.ndarray:
    """Symmetrize and inflate the diagonal until a Cholesky succeeds."""
    cov = 0.5 * (cov + cov.T)
    bump = floor
    eye = np.eye(cov.shape[0])
    for _ in range(40):
        try:
            cho_factor(cov, lower=True)
            return cov
        except np.linalg.LinAlgError:
            cov = cov + bump * eye
            bump *= 10.0
    raise FitError("degenerate covariance")
