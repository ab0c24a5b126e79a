"""Selection-probability estimation for responses missing not at random.

The selection model is ``pi(y, x; gamma) = expit(gamma_0 + sum gamma_k x_k +
gamma_y y)`` over a chosen subset of covariates (and optionally without the
``y`` term, which gives the intercept-only or MAR working models).  ``gamma``
is the root of the estimating function

    psi(gamma) = n^-1 sum_i (1 - r_i / pi_i) E*[S_0 | x_i],

where ``E*`` reweights the observed-case conditional law of ``y`` by
``pi^-1 (1 - pi) / pi``.  Three estimators of ``E*`` are provided: closed form
under a normal working density, fractional weights over the observed
responses, and a Nadaraya-Watson kernel version that needs no density model.
"""

from __future__ import annotations

import itertools
import re
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy import linalg
from scipy.special import expit, logsumexp

from .data import Dataset
from .errors import (
    DegenerateCovariate,
    DimensionMismatch,
    InvalidInput,
    PropensityUnderflow,
    RankDeficientDesign,
    UnsupportedModelPair,
    ZeroKernelMass,
    ZeroWeightMass,
)

SIGMA_FLOOR = 1e-8
DENSITY_FLOOR = 1e-300
PI_UNDERFLOW = 1e-12
_LOG_2PI = np.log(2.0 * np.pi)


# --------------------------------------------------------------------------
# selection model


@dataclass(frozen=True)
class PropensityParams:
    gamma: np.ndarray
    covariates: tuple = ()
    use_y: bool = True

    def __post_init__(self):
        g = np.asarray(self.gamma, dtype=float).ravel()
        object.__setattr__(self, "gamma", g)
        object.__setattr__(self, "covariates", tuple(int(c) for c in self.covariates))
        if g.size != self.dim:
            raise DimensionMismatch(f"gamma has {g.size} entries, model needs {self.dim}")
        if not np.all(np.isfinite(g)):
            raise InvalidInput("gamma must be finite")

    @property
    def dim(self) -> int:
        return 1 + len(self.covariates) + int(self.use_y)

    @property
    def gamma_y(self) -> float:
        return float(self.gamma[-1]) if self.use_y else 0.0

    def with_gamma(self, gamma) -> "PropensityParams":
        return PropensityParams(gamma, self.covariates, self.use_y)

    def x_part(self, X) -> np.ndarray:
        """Linear predictor without the response term."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        a = np.full(X.shape[0], self.gamma[0])
        if self.covariates:
            a = a + X[:, list(self.covariates)] @ self.gamma[1:1 + len(self.covariates)]
        return a

    def linear_predictor(self, X, y) -> np.ndarray:
        a = self.x_part(X)
        if self.use_y:
            a = a + self.gamma_y * np.asarray(y, dtype=float)
        return a

    def features(self, X, y) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        cols = [np.ones(X.shape[0])] + [X[:, c] for c in self.covariates]
        if self.use_y:
            cols.append(np.broadcast_to(np.asarray(y, dtype=float), (X.shape[0],)))
        return np.column_stack(cols)


def full_model(p: int, gamma=None) -> PropensityParams:
    """Logit linear in ``(1, x_1..x_p, y)``; zeros unless ``gamma`` is given."""
    g = np.zeros(p + 2) if gamma is None else gamma
    return PropensityParams(g, tuple(range(p)), True)


def propensity_eval(params: PropensityParams, x, y):
    """``pi(y, x)``; ``x`` may be one covariate vector or an ``(n, p)`` matrix."""
    x = np.asarray(x, dtype=float)
    out = expit(params.linear_predictor(np.atleast_2d(x), y))
    return float(out[0]) if x.ndim == 1 else out


def score_S_r(params: PropensityParams, x, y, r):
    """Bernoulli-likelihood score; for the logit link ``(r - pi) * (1, x, y)``."""
    x = np.asarray(x, dtype=float)
    X = np.atleast_2d(x)
    pi = expit(params.linear_predictor(X, y))
    out = (np.asarray(r, dtype=float) - pi)[:, None] * params.features(X, y)
    return out[0] if x.ndim == 1 else out


def logistic_mle(Z, r, max_iter: int = 100, tol: float = 1e-10) -> np.ndarray:
    """Newton-Raphson (IRLS) for an unpenalized logistic regression of ``r`` on ``Z``."""
    Z = np.asarray(Z, dtype=float)
    r = np.asarray(r, dtype=float)
    beta = np.zeros(Z.shape[1])
    for _ in range(max_iter):
        mu = expit(Z @ beta)
        grad = Z.T @ (r - mu)
        H = (Z * (mu * (1 - mu))[:, None]).T @ Z
        try:
            step = linalg.solve(H, grad, assume_a="pos")
        except linalg.LinAlgError:
            step = linalg.lstsq(H, grad)[0]
        beta = beta + step
        if np.max(np.abs(step)) < tol:
            break
    return beta


# --------------------------------------------------------------------------
# working densities for y | x, R = 1

_TERM_RE = re.compile(r"^x(\d+)(?:\^(\d+))?$")


def parse_terms(text: str, p: int) -> tuple:
    """Parse ``"1 + x1 + x2 + x1:x2 + x1^2"`` into index tuples.

    ``()`` is the intercept; ``(0, 1)`` is ``x1 * x2``.  ``linear`` expands to
    the intercept plus every main effect.
    """
    terms = []
    for tok in (t.strip() for t in text.split("+")):
        if not tok:
            continue
        if tok == "1":
            terms.append(())
            continue
        if tok == "linear":
            terms += [()] + [(k,) for k in range(p)]
            continue
        factors = []
        for part in re.split(r"[:*]", tok):
            m = _TERM_RE.match(part.strip())
            if not m:
                raise InvalidInput(f"cannot parse density term {tok!r}")
            k = int(m.group(1)) - 1
            if not 0 <= k < p:
                raise InvalidInput(f"term {tok!r} refers to a covariate outside x1..x{p}")
            factors += [k] * int(m.group(2) or 1)
        terms.append(tuple(sorted(factors)))
    # drop duplicates, keep order
    return tuple(dict.fromkeys(terms))


def format_terms(terms) -> str:
    names = []
    for t in terms:
        if not t:
            names.append("1")
            continue
        parts = []
        for k, grp in itertools.groupby(t):
            d = len(list(grp))
            parts.append(f"x{k + 1}" + (f"^{d}" if d > 1 else ""))
        names.append(":".join(parts))
    return " + ".join(names)


def term_matrix(terms, X) -> np.ndarray:
    X = np.atleast_2d(np.asarray(X, dtype=float))
    cols = []
    for t in terms:
        c = np.ones(X.shape[0])
        for k in t:
            c = c * X[:, k]
        cols.append(c)
    return np.column_stack(cols) if cols else np.empty((X.shape[0], 0))


@dataclass(frozen=True)
class NormalRegressionDensity:
    """``y | x, R = 1 ~ Normal(z(x)' beta, sigma^2)``."""

    terms: tuple
    beta: np.ndarray
    sigma: float

    def __post_init__(self):
        object.__setattr__(self, "beta", np.asarray(self.beta, dtype=float))
        if not self.sigma > 0:
            raise InvalidInput("sigma must be positive")

    def mean(self, X) -> np.ndarray:
        return term_matrix(self.terms, X) @ self.beta

    def sd(self, X) -> np.ndarray:
        return np.full(np.atleast_2d(X).shape[0], self.sigma)

    def logpdf(self, y, X):
        return normal_logpdf(y, self.mean(X), self.sd(X))


@dataclass(frozen=True)
class GroupedNormalDensity:
    """Separate normal regressions per level combination of ``group_cols``."""

    group_cols: tuple
    groups: dict = field(hash=False)

    def _keys(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        return [tuple(row) for row in X[:, list(self.group_cols)]]

    def _per_row(self, X, attr):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        out = np.empty(X.shape[0])
        keys = self._keys(X)
        for key in set(keys):
            if key not in self.groups:
                raise InvalidInput(f"no fitted density for group {key}")
            rows = np.array([k == key for k in keys])
            out[rows] = getattr(self.groups[key], attr)(X[rows])
        return out

    def mean(self, X):
        return self._per_row(X, "mean")

    def sd(self, X):
        return self._per_row(X, "sd")

    def logpdf(self, y, X):
        return normal_logpdf(y, self.mean(X), self.sd(X))


def normal_logpdf(y, mean, sd):
    z = (np.asarray(y, dtype=float) - mean) / sd
    return -0.5 * z * z - np.log(sd) - 0.5 * _LOG_2PI


def _ols_density(terms, X, y) -> tuple:
    Z = term_matrix(terms, X)
    n, k = Z.shape
    if n < k + 1:
        raise RankDeficientDesign(f"{n} observed rows cannot fit {k} mean terms plus a variance")
    if np.linalg.matrix_rank(Z) < k:
        raise RankDeficientDesign(f"design {format_terms(terms)} is rank deficient")
    beta = linalg.lstsq(Z, y)[0]
    resid = y - Z @ beta
    sigma = max(float(np.sqrt(np.mean(resid ** 2))), SIGMA_FLOOR)
    return NormalRegressionDensity(tuple(terms), beta, sigma)


def _groupwise(X, y, group_cols, fit_one):
    X = np.atleast_2d(np.asarray(X, dtype=float))
    keys = [tuple(row) for row in X[:, list(group_cols)]]
    groups = {}
    for key in sorted(set(keys)):
        rows = np.array([k == key for k in keys])
        groups[key] = fit_one(X[rows], y[rows])
    return GroupedNormalDensity(tuple(group_cols), groups)


def fit_density_parametric(X, y, terms, group_cols: Optional[Sequence[int]] = None):
    """Maximum-likelihood normal regression on observed cases.

    ``beta`` is ordinary least squares and ``sigma^2`` the mean squared
    residual (divisor ``n``), floored at ``1e-8`` for ``sigma``.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float)
    if group_cols:
        return _groupwise(X, y, group_cols, lambda Xg, yg: _ols_density(terms, Xg, yg))
    return _ols_density(terms, X, y)


def density_loglik(dens, X, y) -> float:
    return float(np.sum(dens.logpdf(y, X)))


def _aic(dens, X, y) -> float:
    return 2 * (dens.beta.size + 1) - 2 * density_loglik(dens, X, y)


def select_density_aic(X, y, var: int = 0, max_degree: int = 4, extra_terms=(),
                       group_cols: Optional[Sequence[int]] = None):
    """Forward stepwise choice of the polynomial degree in covariate ``var``.

    Starting from the intercept-only mean, the next power of ``x_var`` is
    added while it strictly lowers AIC; ties keep the smaller model.
    ``extra_terms`` are always included.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float)

    def fit_one(Xg, yg):
        base = ((),) + tuple(extra_terms)
        best = _ols_density(base, Xg, yg)
        best_aic = _aic(best, Xg, yg)
        for d in range(1, max_degree + 1):
            terms = best.terms + ((var,) * d,)
            try:
                cand = _ols_density(terms, Xg, yg)
            except RankDeficientDesign:
                break
            cand_aic = _aic(cand, Xg, yg)
            if not cand_aic < best_aic:
                break
            best, best_aic = cand, cand_aic
        return best

    if group_cols:
        return _groupwise(X, y, group_cols, fit_one)
    return fit_one(X, y)


def bandwidth_rot(values) -> float:
    """Rule-of-thumb bandwidth ``n^(-1/5) * sd`` over observed-case values."""
    v = np.asarray(values, dtype=float)
    if v.size < 2:
        raise InvalidInput("bandwidth needs at least two observed cases")
    sd = float(np.std(v, ddof=1))
    if not sd > 0:
        raise DegenerateCovariate("covariate has zero spread among observed cases")
    return v.size ** -0.2 * sd


@dataclass(frozen=True)
class KernelDensityEstimate:
    """Product-Gaussian kernel estimate of ``y | x, R = 1`` from observed rows."""

    x: np.ndarray
    y: np.ndarray
    hx: np.ndarray
    hy: float

    @classmethod
    def from_complete(cls, X, y) -> "KernelDensityEstimate":
        X = np.atleast_2d(np.asarray(X, dtype=float))
        y = np.asarray(y, dtype=float)
        hx = np.array([bandwidth_rot(X[:, k]) for k in range(X.shape[1])])
        return cls(X, y, hx, bandwidth_rot(y))

    def log_kernel_x(self, X) -> np.ndarray:
        """``log K_hx(x_i - x_k)`` up to an additive constant, shape ``(m, n_obs)``."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        out = np.zeros((X.shape[0], self.x.shape[0]))
        for k, h in enumerate(self.hx):
            d = (X[:, k][:, None] - self.x[:, k][None, :]) / h
            out -= 0.5 * d * d
        return out

    def conditional_pdf(self, y, X) -> np.ndarray:
        """Nadaraya-Watson conditional density at paired ``(y_i, x_i)``."""
        lk = self.log_kernel_x(X)
        w = np.exp(lk - lk.max(axis=1, keepdims=True))
        ky = np.exp(-0.5 * ((np.asarray(y, float)[:, None] - self.y[None, :]) / self.hy) ** 2)
        ky /= self.hy * np.sqrt(2 * np.pi)
        return np.sum(w * ky, axis=1) / np.sum(w, axis=1)


# --------------------------------------------------------------------------
# E*{S_0 | x}


def _log_ipw_odds(eta):
    # log(pi^-1 * (1 - pi) / pi) = log(exp(-eta) + exp(-2 eta))
    return np.logaddexp(-eta, -2.0 * eta)


class ClosedFormEstar:
    """Exact ``E*{S_0 | x}`` for a logit selection model and a normal density.

    With ``a = x-part of the linear predictor`` and ``Y ~ N(mu, s^2)``, the
    normal moment-generating function gives

        E* = -expit(a + g_y mu - 1.5 g_y^2 s^2) * (1, x, mu - g_y s^2).
    """

    def __init__(self, density):
        if not hasattr(density, "sd"):
            raise UnsupportedModelPair("closed form needs a normal working density")
        self.density = density

    def __call__(self, params: PropensityParams, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        mu, s2 = self.density.mean(X), self.density.sd(X) ** 2
        gy = params.gamma_y
        a = params.x_part(X)
        scale = -expit(a + gy * mu - 1.5 * gy * gy * s2)
        return scale[:, None] * params.features(X, mu - gy * s2)

    def moments(self, params: PropensityParams, X):
        """Numerator vector and denominator of the ratio, unsimplified."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        mu, s2 = self.density.mean(X), self.density.sd(X) ** 2
        gy = params.gamma_y
        a = params.x_part(X)
        m1 = np.exp(-a - gy * mu + 0.5 * gy * gy * s2)  # E[exp(-eta)]
        m2 = np.exp(-2 * a - 2 * gy * mu + 2 * gy * gy * s2)  # E[exp(-2 eta)]
        num = -m1[:, None] * params.features(X, mu - gy * s2)
        return num, m1 + m2


def _weighted_s0(params, X, Y, logw):
    """Average of ``S_0(y_k, x_i)`` with row-normalized log-weights ``(m, K)``."""
    rowmax = logw.max(axis=1, keepdims=True)
    if not np.all(np.isfinite(rowmax)):
        raise ZeroWeightMass("all weights vanish for some covariate point")
    w = np.exp(logw - rowmax)
    w /= w.sum(axis=1, keepdims=True)
    eta = params.x_part(X)[:, None] + params.gamma_y * Y
    wp = w * expit(eta)
    out = [-wp.sum(axis=1)]
    for c in params.covariates:
        out.append(out[0] * X[:, c])
    if params.use_y:
        out.append(-(wp * Y).sum(axis=1))
    return np.column_stack(out)


class FractionalEstar:
    """Fractional-weight ``E*`` over the observed responses.

    The weight of observed response ``y_k`` at ``x`` is proportional to
    ``pi^-1 O (y_k, x) f(y_k | x) / C(y_k)`` with ``C(y) = sum_t f(y | x_t)``
    over observed rows ``t``.
    """

    def __init__(self, density, X_obs, y_obs, chunk: int = 2048):
        self.density = density
        self.X_obs = np.atleast_2d(np.asarray(X_obs, dtype=float))
        self.y_obs = np.asarray(y_obs, dtype=float)
        if self.y_obs.size == 0:
            raise InvalidInput("fractional weights need at least one observed case")
        # log C(y_k), accumulated in chunks of t
        mu, sd = density.mean(self.X_obs), density.sd(self.X_obs)
        parts = []
        for s in range(0, self.y_obs.size, chunk):
            lp = normal_logpdf(self.y_obs[None, :], mu[s:s + chunk, None], sd[s:s + chunk, None])
            parts.append(logsumexp(np.maximum(lp, np.log(DENSITY_FLOOR)), axis=0))
        self.log_c = logsumexp(np.vstack(parts), axis=0)
        self._cache = (None, None)

    def _log_f(self, X):
        key, val = self._cache
        if key is not None and key.shape == X.shape and np.array_equal(key, X):
            return val
        mu, sd = self.density.mean(X), self.density.sd(X)
        lf = np.maximum(normal_logpdf(self.y_obs[None, :], mu[:, None], sd[:, None]),
                        np.log(DENSITY_FLOOR))
        self._cache = (X.copy(), lf)
        return lf

    def __call__(self, params: PropensityParams, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        Y = self.y_obs[None, :]
        eta = params.x_part(X)[:, None] + params.gamma_y * Y
        logw = _log_ipw_odds(eta) + self._log_f(X) - self.log_c[None, :]
        return _weighted_s0(params, X, Y, logw)


class KernelEstar:
    """Nadaraya-Watson ``E*`` with a product Gaussian kernel in ``x``."""

    def __init__(self, kde: KernelDensityEstimate):
        self.kde = kde
        self._cache = (None, None)

    @classmethod
    def from_complete(cls, X_obs, y_obs) -> "KernelEstar":
        return cls(KernelDensityEstimate.from_complete(X_obs, y_obs))

    def _log_k(self, X):
        key, val = self._cache
        if key is not None and key.shape == X.shape and np.array_equal(key, X):
            return val
        lk = self.kde.log_kernel_x(X)
        self._cache = (X.copy(), lk)
        return lk

    def __call__(self, params: PropensityParams, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        Y = self.kde.y[None, :]
        eta = params.x_part(X)[:, None] + params.gamma_y * Y
        lk = self._log_k(X)
        if not np.all(np.isfinite(lk.max(axis=1))):
            raise ZeroKernelMass("no observed case carries kernel weight")
        return _weighted_s0(params, X, Y, _log_ipw_odds(eta) + lk)


def estar_closed(params, x, density):
    return ClosedFormEstar(density)(params, np.atleast_2d(x))[0]


def estar_fractional(params, x, density, X_obs, y_obs):
    return FractionalEstar(density, X_obs, y_obs)(params, np.atleast_2d(x))[0]


def estar_np(params, x, X_obs, y_obs, hx):
    kde = KernelDensityEstimate(np.atleast_2d(X_obs), np.asarray(y_obs, float), np.asarray(hx, float), 1.0)
    return KernelEstar(kde)(params, np.atleast_2d(x))[0]


# --------------------------------------------------------------------------
# estimating equation and solver


def estimating_function(params: PropensityParams, ds: Dataset, estar) -> np.ndarray:
    """``n^-1 sum_i (1 - r_i / pi_i) E*_i``; the brace is 1 for missing rows."""
    obs = ds.observed
    brace = np.ones(ds.n)
    pi = expit(params.linear_predictor(ds.x[obs], ds.y[obs]))
    if np.any(pi < PI_UNDERFLOW):
        raise PropensityUnderflow("selection probability underflows for an observed case")
    brace[obs] = 1.0 - 1.0 / pi
    return brace @ estar(params, ds.x) / ds.n


@dataclass(frozen=True)
class SolverConfig:
    tol: float = 1e-8
    max_iter: int = 200
    restarts: int = 5
    jacobian_step: float = 1e-5
    jitter: float = 0.5
    seed: int = 0


@dataclass
class SolverReport:
    converged: bool
    iterations: int
    norm: float
    gamma_hat: Optional[PropensityParams]
    restarts_used: int = 0
    message: str = ""


def _numeric_jacobian(fun, g, F0, rel_step):
    J = np.empty((F0.size, g.size))
    for j in range(g.size):
        h = rel_step * max(1.0, abs(g[j]))
        gp, gm = g.copy(), g.copy()
        gp[j] += h
        gm[j] -= h
        J[:, j] = (fun(gp) - fun(gm)) / (2 * h)
    return J


def _levenberg_marquardt(fun, g0, cfg: SolverConfig):
    g = np.asarray(g0, dtype=float).copy()
    F = fun(g)
    if not np.all(np.isfinite(F)):
        return g, F, 0, False
    lam = 1e-3
    for it in range(1, cfg.max_iter + 1):
        if np.max(np.abs(F)) <= cfg.tol:
            return g, F, it - 1, True
        J = _numeric_jacobian(fun, g, F, cfg.jacobian_step)
        if not np.all(np.isfinite(J)):
            return g, F, it, False
        A = J.T @ J
        b = J.T @ F
        ssq = F @ F
        while True:
            damp = lam * np.maximum(np.diag(A), 1e-12)
            try:
                step = linalg.solve(A + np.diag(damp), -b, assume_a="pos")
            except linalg.LinAlgError:
                lam *= 10
                if lam > 1e12:
                    return g, F, it, False
                continue
            g_new = g + step
            try:
                F_new = fun(g_new)
            except (ArithmeticError, FloatingPointError):
                F_new = None
            if F_new is not None and np.all(np.isfinite(F_new)) and F_new @ F_new < ssq:
                g, F = g_new, F_new
                lam = max(lam / 10, 1e-12)
                break
            lam *= 10
            if lam > 1e12:
                return g, F, it, np.max(np.abs(F)) <= cfg.tol
    return g, F, cfg.max_iter, np.max(np.abs(F)) <= cfg.tol


def initial_gamma(ds: Dataset, covariates=None, use_y: bool = True) -> PropensityParams:
    """Logistic MLE of ``r`` on the chosen covariates, with ``gamma_y = 0``."""
    covariates = tuple(range(ds.p)) if covariates is None else tuple(covariates)
    Z = np.column_stack([np.ones(ds.n)] + [ds.x[:, c] for c in covariates])
    beta = logistic_mle(Z, ds.r)
    g = np.concatenate([beta, [0.0]]) if use_y else beta
    return PropensityParams(g, covariates, use_y)


def solve_gamma(ds: Dataset, estar, covariates=None, use_y: bool = True,
                config: SolverConfig = SolverConfig()) -> SolverReport:
    """Root of the estimating function by Levenberg-Marquardt with restarts.

    Never raises for a failed solve; the outcome is in the report.
    """
    if ds.r.min() == ds.r.max():
        return SolverReport(False, 0, float("nan"), None, 0,
                            "missingness indicator is constant; selection model not identifiable")
    start = initial_gamma(ds, covariates, use_y)

    def fun(g):
        return estimating_function(start.with_gamma(g), ds, estar)

    rng = np.random.default_rng(config.seed)
    total = 0
    g, F = start.gamma, None
    for attempt in range(config.restarts + 1):
        g0 = start.gamma if attempt == 0 else start.gamma + config.jitter * rng.standard_normal(start.dim)
        try:
            g, F, iters, ok = _levenberg_marquardt(fun, g0, config)
        except (ArithmeticError, FloatingPointError):
            iters, ok = 0, False
        total += iters
        if ok:
            return SolverReport(True, total, float(np.max(np.abs(F))), start.with_gamma(g), attempt)
    norm = float(np.max(np.abs(F))) if F is not None and np.all(np.isfinite(F)) else float("nan")
    return SolverReport(False, total, norm, None, config.restarts,
                        f"no root within tolerance {config.tol} after {config.restarts} restarts")


def kde_conditional_matrix(kde: KernelDensityEstimate, yvals, X) -> np.ndarray:
    """``f(yvals_k | x_i, R = 1)`` for every pair, shape ``(len(X), len(yvals))``."""
    lk = kde.log_kernel_x(X)
    w = np.exp(lk - lk.max(axis=1, keepdims=True))
    w /= w.sum(axis=1, keepdims=True)
    d = (np.asarray(yvals, float)[:, None] - kde.y[None, :]) / kde.hy
    ky = np.exp(-0.5 * d * d) / (kde.hy * np.sqrt(2 * np.pi))
    return w @ ky.T
