import numpy as np
import pytest
from scipy import integrate
from scipy.special import expit
from scipy.stats import norm

from mnarboost.data import validate
from mnarboost.errors import InvalidInput
from mnarboost.simulator import (
    SIGMA,
    SimConfig,
    TruthOracle,
    gen_dataset,
    gen_klips_like,
    intercept_beta0,
    load_klips_like,
    true_mean,
    true_median,
    true_propensity,
)

S1_MNAR = TruthOracle(1, -1.0)


@pytest.mark.parametrize("setting, gamma_y, beta0", [(1, 0.0, 0.1), (1, -1.0, 0.0), (2, 0.0, 0.0), (2, 1.0, 0.1)])
def test_intercepts(setting, gamma_y, beta0):
    assert intercept_beta0(setting, gamma_y) == pytest.approx(beta0, abs=1e-15)


def test_mean_at_origin():
    # g = 0.5 * 0.25 - 0.405 = -0.28, pi = expit(0.28), mean = (1 - pi) * 0.25
    pi = expit(0.28)
    assert pi == pytest.approx(0.56955, abs=1e-5)
    assert true_mean(S1_MNAR, [0.0, 0.0]) == pytest.approx((1 - pi) * 0.25, abs=1e-12)
    assert true_mean(S1_MNAR, [0.0, 0.0]) == pytest.approx(0.107613, abs=1e-6)


def test_propensity_at_origin():
    assert true_propensity(S1_MNAR, [0.0, 0.0], 0.0) == pytest.approx(expit(0.405), abs=1e-12)
    assert expit(0.405) == pytest.approx(0.5999, abs=1e-4)


def test_mar_collapse(rng):
    oracle = TruthOracle(1, 0.0)
    X = rng.normal(size=(20, 2))
    assert np.allclose(true_mean(oracle, X), oracle.mu(X), atol=0)
    assert np.allclose(true_median(oracle, X), oracle.mu(X), atol=1e-9)
    for y in (-1.0, 2.0):
        assert np.allclose(true_propensity(oracle, X, y), expit(oracle.nu(X)), atol=0)


@pytest.mark.parametrize("setting, gamma_y", [(1, -1.0), (2, 1.0), (1, 0.5)])
def test_odds_from_bayes(setting, gamma_y, rng):
    oracle = TruthOracle(setting, gamma_y)
    p = 2 if setting == 1 else 9
    X = rng.normal(size=(5, p))
    for y in np.linspace(-2, 2, 9):
        mu, pt = oracle.mu(X), oracle.pi_marginal(X)
        f1 = norm.pdf(y, mu, SIGMA)
        f0 = norm.pdf(y, mu - gamma_y * SIGMA ** 2, SIGMA)
        odds = (1 - pt) * f0 / (pt * f1)
        assert np.allclose(odds, np.exp(-oracle.nu(X) - gamma_y * y), rtol=1e-10)


@pytest.mark.parametrize("gamma_y", [-1e-3, -1e-5, -1e-7])
def test_median_continuity(gamma_y):
    x = np.array([0.3, -0.2])
    oracle = TruthOracle(1, gamma_y)
    # the tilt shifts the median by at most |gamma_y| sigma^2
    assert abs(true_median(oracle, x) - oracle.mu(x[None])[0]) <= abs(gamma_y) * SIGMA ** 2 + 1e-9


def test_median_solves_mixture_cdf(rng):
    X = rng.normal(size=(10, 2))
    q = true_median(S1_MNAR, X)
    mu, pt = S1_MNAR.mu(X), S1_MNAR.pi_marginal(X)
    cdf = pt * norm.cdf(q, mu, SIGMA) + (1 - pt) * norm.cdf(q, mu + 0.25, SIGMA)
    assert np.allclose(cdf, 0.5, atol=1e-10)


def test_marginal_propensity_by_quadrature():
    oracle = TruthOracle(1, -1.0)
    x = np.array([0.4, -0.7])
    mu = oracle.mu(x[None])[0]
    pt = oracle.pi_marginal(x[None])[0]

    def joint(y):  # mixture density times P(R=1 | y, x)
        mix = pt * norm.pdf(y, mu, SIGMA) + (1 - pt) * norm.pdf(y, mu + 0.25, SIGMA)
        return mix * true_propensity(oracle, x, y)

    val, _ = integrate.quad(joint, -np.inf, np.inf, epsabs=1e-13, epsrel=1e-13)
    assert val == pytest.approx(pt, abs=1e-10)


def test_generator_moments_at_fixed_design():
    cfg = SimConfig(1, -1.0, 200_000, 9)
    ds = gen_dataset(cfg)
    assert abs(ds.full_y.mean()) < 3 * ds.full_y.std() / np.sqrt(ds.n)
    oracle = TruthOracle.of(cfg)
    resid = ds.full_y - oracle.mu(ds.x) + (1 - ds.r) * cfg.gamma_y * SIGMA ** 2
    assert abs(resid.mean()) < 3 * SIGMA / np.sqrt(ds.n)
    assert resid.var() == pytest.approx(SIGMA ** 2, rel=0.01)


def test_generator_deterministic():
    a = gen_dataset(SimConfig(2, 1.0, 100, 4))
    b = gen_dataset(SimConfig(2, 1.0, 100, 4))
    assert np.array_equal(a.full_y, b.full_y) and np.array_equal(a.r, b.r)
    assert a.p == 9


def test_setting2_covariance():
    ds = gen_dataset(SimConfig(2, 0.0, 100_000, 1))
    u = np.arange(9)
    target = 0.5 ** np.abs(u[:, None] - u[None, :]) / np.sqrt(2)
    assert np.allclose(np.cov(ds.x.T), target, atol=0.02)


def test_bad_config():
    with pytest.raises(InvalidInput):
        SimConfig(3, 0.0)
    with pytest.raises(InvalidInput):
        SimConfig(1, 0.0, 0)


def test_klips_lookalike():
    ds = gen_klips_like(2501, seed=2025)
    validate(ds)
    assert ds.p == 3
    assert 0.25 < 1 - ds.r.mean() < 0.35
    assert set(np.unique(ds.x[:, 1])) == {1.0, 2.0, 3.0}
    bundled = load_klips_like()
    assert np.allclose(bundled.x, ds.x) and np.array_equal(bundled.r, ds.r)
