"""Synthetic MNAR data (two settings) and their ground-truth functions.

Both settings draw ``R ~ Bernoulli(pt(x))`` with ``pt(x) = 1 / (1 + exp(g(x)))``,
``g = gamma_y^2 sigma^2 / 2 - nu(x) - gamma_y mu(x)``, and then
``Y | x, R ~ Normal(mu(x) - (1 - R) gamma_y sigma^2, sigma^2)``.  By Bayes'
rule this is the logit selection model ``P(R = 1 | y, x) =
expit(nu(x) + gamma_y y)``.

Normal variates are ``ndtri`` applied to PCG64 uniforms, so a given seed
yields the same sample on any platform numpy supports.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit, ndtri
from scipy.stats import norm

from .data import Dataset
from .errors import InvalidInput

SIGMA = 0.5
SIGMA_X2 = 0.5
ZETA = -0.25
BETA_SLOPE = 0.4
GAMMA_SLOPE = -0.5
GAMMA_0 = 0.405
BETA_13 = 0.8
P_OBSERVED = 0.6

SCENARIO_GAMMA_Y = {(1, "mar"): 0.0, (1, "mnar"): -1.0, (2, "mar"): 0.0, (2, "mnar"): 1.0}


def intercept_beta0(setting: int, gamma_y: float) -> float:
    """Mean intercept that makes ``E(Y) = 0`` when ``P(R = 1) = 0.6``."""
    base = gamma_y * SIGMA ** 2 * (1 - P_OBSERVED)
    if setting == 1:
        return base - ZETA * BETA_13 * SIGMA_X2
    return base


def _setting2_cov():
    u = np.arange(9)
    return 0.5 ** np.abs(u[:, None] - u[None, :]) / np.sqrt(2.0)


@dataclass(frozen=True)
class SimConfig:
    setting: int = 1
    gamma_y: float = -1.0
    n: int = 1000
    seed: int = 0

    def __post_init__(self):
        if self.setting not in (1, 2):
            raise InvalidInput("setting must be 1 or 2")
        if self.n < 1:
            raise InvalidInput("n must be positive")

    @property
    def p(self) -> int:
        return 2 if self.setting == 1 else 9

    @property
    def beta0(self) -> float:
        return intercept_beta0(self.setting, self.gamma_y)

    @classmethod
    def scenario(cls, setting: int, scenario: str, n: int = 1000, seed: int = 0) -> "SimConfig":
        return cls(setting, SCENARIO_GAMMA_Y[(setting, scenario.lower())], n, seed)


@dataclass(frozen=True)
class TruthOracle:
    setting: int
    gamma_y: float

    @classmethod
    def of(cls, cfg: SimConfig) -> "TruthOracle":
        return cls(cfg.setting, cfg.gamma_y)

    @property
    def beta0(self) -> float:
        return intercept_beta0(self.setting, self.gamma_y)

    def mu(self, X) -> np.ndarray:
        """Mean of ``Y | x, R = 1``."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if self.setting == 1:
            return (self.beta0 + BETA_SLOPE * (X[:, 0] + X[:, 1])
                    + BETA_13 * X[:, 0] * X[:, 1])
        return self.beta0 + BETA_SLOPE * X[:, :9].sum(axis=1)

    def nu(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if self.setting == 1:
            return GAMMA_0 + GAMMA_SLOPE * (X[:, 0] + X[:, 1])
        return GAMMA_0 + GAMMA_SLOPE * X[:, :8].sum(axis=1)

    def g(self, X) -> np.ndarray:
        gy = self.gamma_y
        return 0.5 * gy * gy * SIGMA ** 2 - self.nu(X) - gy * self.mu(X)

    def pi_marginal(self, X) -> np.ndarray:
        """``P(R = 1 | x)``."""
        return expit(-self.g(X))

    def missing_mean(self, X) -> np.ndarray:
        """Mean of ``Y | x, R = 0``."""
        return self.mu(X) - self.gamma_y * SIGMA ** 2

    def expected_y(self) -> float:
        # the intercepts are chosen so that E(Y) = 0
        return 0.0

    def propensity_params(self):
        from .propensity import PropensityParams

        p = 2 if self.setting == 1 else 9
        gamma = np.zeros(p + 2)
        gamma[0] = GAMMA_0
        gamma[1:(3 if self.setting == 1 else 9)] = GAMMA_SLOPE
        gamma[-1] = self.gamma_y
        return PropensityParams(gamma, tuple(range(p)), True)

    def density(self):
        """The generator's ``y | x, R = 1`` law as a working density."""
        from .propensity import NormalRegressionDensity

        if self.setting == 1:
            terms = ((), (0,), (1,), (0, 1))
            beta = [self.beta0, BETA_SLOPE, BETA_SLOPE, BETA_13]
        else:
            terms = ((),) + tuple((k,) for k in range(9))
            beta = [self.beta0] + [BETA_SLOPE] * 9
        return NormalRegressionDensity(terms, np.array(beta), SIGMA)


def true_propensity(oracle: TruthOracle, x, y):
    """``P(R = 1 | y, x) = expit(nu(x) + gamma_y y)``."""
    x = np.asarray(x, dtype=float)
    out = expit(oracle.nu(np.atleast_2d(x)) + oracle.gamma_y * np.asarray(y, dtype=float))
    return float(out[0]) if x.ndim == 1 else out


def true_mean(oracle: TruthOracle, x):
    x = np.asarray(x, dtype=float)
    X = np.atleast_2d(x)
    out = oracle.mu(X) - (1 - oracle.pi_marginal(X)) * oracle.gamma_y * SIGMA ** 2
    return float(out[0]) if x.ndim == 1 else out


def true_median(oracle: TruthOracle, x, tol: float = 1e-10):
    """Median of the two-component normal mixture, by bisection."""
    x = np.asarray(x, dtype=float)
    X = np.atleast_2d(x)
    mu, pt = oracle.mu(X), oracle.pi_marginal(X)
    shift = oracle.gamma_y * SIGMA ** 2
    lo = np.minimum(mu, mu - shift) - 10 * SIGMA
    hi = np.maximum(mu, mu - shift) + 10 * SIGMA
    while np.max(hi - lo) >= tol:
        mid = 0.5 * (lo + hi)
        cdf = pt * norm.cdf((mid - mu) / SIGMA) + (1 - pt) * norm.cdf((mid - mu + shift) / SIGMA)
        below = cdf < 0.5
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)
    out = 0.5 * (lo + hi)
    return float(out[0]) if x.ndim == 1 else out


def _normals(rng, size):
    return ndtri(rng.random(size))


def gen_covariates(cfg: SimConfig, rng) -> np.ndarray:
    if cfg.setting == 1:
        sx = np.sqrt(SIGMA_X2)
        x1 = sx * _normals(rng, cfg.n)
        x2 = ZETA * x1 + sx * _normals(rng, cfg.n)
        return np.column_stack([x1, x2])
    L = np.linalg.cholesky(_setting2_cov())
    return _normals(rng, (cfg.n, 9)) @ L.T


def gen_responses(oracle: TruthOracle, X, rng):
    """Draw ``(r, y)`` given covariate rows: ``r`` first, then ``y | x, r``."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    n = X.shape[0]
    r = (rng.random(n) < oracle.pi_marginal(X)).astype(np.int8)
    mean = oracle.mu(X) - (1 - r) * oracle.gamma_y * SIGMA ** 2
    return r, mean + SIGMA * _normals(rng, n)


def gen_dataset(cfg: SimConfig) -> Dataset:
    """Simulated sample; masked ``y`` in ``.y``, the unmasked vector in ``.full_y``."""
    rng = np.random.Generator(np.random.PCG64(cfg.seed))
    X = gen_covariates(cfg, rng)
    r, y_full = gen_responses(TruthOracle.of(cfg), X, rng)
    y_obs = np.where(r == 1, y_full, np.nan)
    return Dataset(X, y_obs, r, None, y_full)


def gen_klips_like(n: int = 2501, seed: int = 0) -> Dataset:
    """Synthetic stand-in shaped like the KLIPS income panel.

    ``x1`` is last year's income, ``x2`` an age band in {1, 2, 3}, ``x3`` sex
    in {1, 2}; ``y`` is this year's income with roughly 30% of values missing
    under a logit selection model that depends on ``y``.
    """
    rng = np.random.Generator(np.random.PCG64(seed))
    x2 = rng.integers(1, 4, n).astype(float)
    x3 = rng.integers(1, 3, n).astype(float)
    x1 = np.exp(0.2 + 0.15 * x2 - 0.3 * (x3 - 1) + 0.5 * _normals(rng, n))
    slope = 0.85 + 0.03 * x2
    curve = -0.02 * (x3 - 1)
    y = 0.1 + slope * x1 + curve * x1 ** 2 + 0.25 * _normals(rng, n)
    eta = 1.0 - 0.3 * x1 + 0.1 * x2 - 0.2 * x3 + 0.25 * y
    r = (rng.random(n) < expit(eta)).astype(np.int8)
    X = np.column_stack([x1, x2, x3])
    return Dataset(X, np.where(r == 1, y, np.nan), r, None, y)


def load_klips_like() -> Dataset:
    """The bundled ``gen_klips_like(2501, seed=2025)`` sample (observed data only)."""
    from importlib.resources import as_file, files

    with as_file(files("mnarboost") / "data" / "klips_like.csv") as path:
        return Dataset.from_csv(path)
