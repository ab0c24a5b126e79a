"""Inverse-propensity-weighted and Buckley-James adjusted losses.

A context is built once per fit from a training sample and the fitted
working models.  It fixes which rows enter the empirical risk, the weight of
each observed-row loss, and (for Buckley-James) the pseudo-responses drawn
from the estimated missing-case law.  Those draws are generated once, so the
adjusted empirical risk is a fixed function of ``f`` for the whole run.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.special import expit, ndtri

from .data import Dataset, LossSpec, MethodSpec
from .errors import InvalidInput, MissingDraws, ZeroWeightMass
from .losses import ETA_FLOOR, huber_eta_update, loss_grad, loss_value
from .propensity import (
    DENSITY_FLOOR,
    KernelDensityEstimate,
    PropensityParams,
    kde_conditional_matrix,
)

DEFAULT_PI_FLOOR = 1e-3
DEFAULT_NY = 20


@dataclass(frozen=True)
class AdjustedLossContext:
    method: MethodSpec
    keep: np.ndarray  # rows of the training sample entering the risk
    y: np.ndarray  # responses of kept rows, NaN where missing
    r: np.ndarray
    weight: np.ndarray  # multiplier of L(y, f) on kept rows; 0 where missing
    draws: Optional[np.ndarray] = None  # (n_kept, N_y), NaN rows where observed
    gamma_hat: Optional[PropensityParams] = None
    density: object = None
    pi_floor: float = DEFAULT_PI_FLOOR

    @property
    def n(self) -> int:
        return self.y.size

    @property
    def observed(self) -> np.ndarray:
        return self.r == 1


def missing_density_draws(gamma: PropensityParams, density, X, ny: int, rng,
                          X_obs=None, y_obs=None) -> np.ndarray:
    """``ny`` draws per row of ``X`` from ``f(y | x, R = 0)``.

    That law is ``f(y | x, R = 1)`` tilted by the odds ``exp(-eta(y, x))``.
    A normal working density with a logit selection model linear in ``y``
    tilts to ``Normal(mu(x) - gamma_y sigma^2, sigma^2)``, sampled exactly.
    Any other density is handled by resampling the observed responses with
    weights ``O(y_k, x) f(y_k | x) / C(y_k)``.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    m = X.shape[0]
    if m == 0:
        return np.empty((0, ny))
    if hasattr(density, "sd"):
        sd = density.sd(X)
        centre = density.mean(X) - gamma.gamma_y * sd ** 2
        return centre[:, None] + sd[:, None] * ndtri(rng.random((m, ny)))
    if not isinstance(density, KernelDensityEstimate):
        raise InvalidInput("unsupported working density for missing-case draws")
    X_obs = density.x if X_obs is None else np.atleast_2d(X_obs)
    y_obs = density.y if y_obs is None else np.asarray(y_obs, float)
    log_c = np.log(np.maximum(kde_conditional_matrix(density, y_obs, X_obs).sum(axis=0), DENSITY_FLOOR))
    f = np.maximum(kde_conditional_matrix(density, y_obs, X), DENSITY_FLOOR)
    eta = gamma.x_part(X)[:, None] + gamma.gamma_y * y_obs[None, :]
    logw = -eta + np.log(f) - log_c[None, :]
    rowmax = logw.max(axis=1, keepdims=True)
    if not np.all(np.isfinite(rowmax)):
        raise ZeroWeightMass("resampling weights vanish")
    w = np.exp(logw - rowmax)
    cdf = np.cumsum(w, axis=1)
    cdf /= cdf[:, -1:]
    u = rng.random((m, ny))
    idx = np.array([np.searchsorted(cdf[i], u[i], side="right") for i in range(m)])
    return y_obs[np.minimum(idx, y_obs.size - 1)]


def build_context(ds: Dataset, method: MethodSpec, gamma_hat: Optional[PropensityParams] = None,
                  density=None, pi_floor: float = DEFAULT_PI_FLOOR, ny: int = DEFAULT_NY,
                  bj_seed: int = 0) -> AdjustedLossContext:
    if not 0 < pi_floor < 1:
        raise InvalidInput("pi_floor must lie in (0, 1)")
    kind = method.kind
    if kind == "r":
        full = ds.unmasked()
        return AdjustedLossContext(method, np.ones(ds.n, bool), full.y, full.r,
                                   np.ones(ds.n), pi_floor=pi_floor)
    if kind == "n":
        keep = ds.observed.copy()
        return AdjustedLossContext(method, keep, ds.y[keep], ds.r[keep],
                                   np.ones(int(keep.sum())), pi_floor=pi_floor)
    if gamma_hat is None:
        raise InvalidInput(f"method {kind} needs an estimated selection model")
    obs = ds.observed
    keep = np.ones(ds.n, bool)
    if kind in ("ipw", "ipwn"):
        weight = np.zeros(ds.n)
        pi = expit(gamma_hat.linear_predictor(ds.x[obs], ds.y[obs]))
        weight[obs] = 1.0 / np.maximum(pi, pi_floor)
        return AdjustedLossContext(method, keep, ds.y, ds.r, weight, None, gamma_hat, density, pi_floor)
    # bj
    if density is None:
        raise InvalidInput("the bj method needs a working density")
    rng = np.random.Generator(np.random.PCG64(bj_seed))
    draws = np.full((ds.n, ny), np.nan)
    draws[~obs] = missing_density_draws(gamma_hat, density, ds.x[~obs], ny, rng,
                                        ds.x[obs], ds.y[obs])
    return AdjustedLossContext(method, keep, ds.y, ds.r, obs.astype(float), draws,
                               gamma_hat, density, pi_floor)


def _observed_term(ctx, spec, f, eta, fn):
    out = np.zeros(ctx.n)
    obs = ctx.observed
    out[obs] = ctx.weight[obs] * fn(spec, ctx.y[obs], f[obs], eta)
    return out


def ipw_loss(ctx: AdjustedLossContext, spec: LossSpec, f, eta=None) -> np.ndarray:
    """Per-row ``r L(y, f) / max(pi_hat, floor)``."""
    return _observed_term(ctx, spec, np.asarray(f, float), eta, loss_value)


def bj_loss(ctx: AdjustedLossContext, spec: LossSpec, f, eta=None) -> np.ndarray:
    """Per-row ``r L(y, f) + (1 - r) mean_k L(y0_k, f)`` over the frozen draws."""
    f = np.asarray(f, float)
    if ctx.draws is None:
        raise MissingDraws("context carries no missing-case draws")
    out = _observed_term(ctx, spec, f, eta, loss_value)
    mis = ~ctx.observed
    out[mis] = loss_value(spec, ctx.draws[mis], f[mis][:, None], eta).mean(axis=1)
    return out


def adjusted_loss(ctx: AdjustedLossContext, spec: LossSpec, f, eta=None) -> np.ndarray:
    if ctx.method.kind == "bj":
        return bj_loss(ctx, spec, f, eta)
    return ipw_loss(ctx, spec, f, eta)


def adjusted_grad(ctx: AdjustedLossContext, spec: LossSpec, f, eta=None) -> np.ndarray:
    """Derivative of the per-row adjusted loss in ``f``."""
    f = np.asarray(f, float)
    out = _observed_term(ctx, spec, f, eta, loss_grad)
    if ctx.method.kind == "bj":
        if ctx.draws is None:
            raise MissingDraws("context carries no missing-case draws")
        mis = ~ctx.observed
        out[mis] = loss_grad(spec, ctx.draws[mis], f[mis][:, None], eta).mean(axis=1)
    return out


def huber_residuals(ctx: AdjustedLossContext, f) -> np.ndarray:
    """Absolute residuals defining the Huber transition point.

    Observed rows only, except under Buckley-James where every draw also
    enters with weight ``1 / N_y`` (each observed residual is repeated
    ``N_y`` times so that an unweighted percentile applies).
    """
    f = np.asarray(f, float)
    obs = ctx.observed
    res = np.abs(ctx.y[obs] - f[obs])
    if ctx.method.kind != "bj" or obs.all():
        return res
    ny = ctx.draws.shape[1]
    mis = ~obs
    extra = np.abs(ctx.draws[mis] - f[mis][:, None]).ravel()
    return np.concatenate([np.repeat(res, ny), extra])


def huber_eta(ctx: AdjustedLossContext, spec: LossSpec, f) -> float:
    return max(huber_eta_update(huber_residuals(ctx, f), spec.huber_quantile), ETA_FLOOR)
