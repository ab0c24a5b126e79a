"""Functional gradient descent over the additive spline class.

Each iteration projects the negative per-row gradient of the adjusted loss
onto the spline span by (ridge-stabilized) least squares, picks the step by
golden-section search of the adjusted empirical risk along that direction
and adds the scaled increment.  Because the class is linear in its
coefficients the running sum is kept as a single ``AdditiveSplineModel``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, List, Optional

import numpy as np

from .adjusted_loss import AdjustedLossContext, adjusted_grad, adjusted_loss, huber_eta
from .data import Dataset, LossSpec
from .errors import DegenerateDirection, InvalidInput, NoCompleteCases
from .splines import DEFAULT_RIDGE, AdditiveSplineModel, KnotSpec, SplineProjector

_INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0

THRESHOLD = "threshold"
MAX_ITER = "max_iter"
STALLED = "stalled_line_search"


@dataclass(frozen=True)
class FitConfig:
    eta_stop: float = 1e-6
    max_iter: int = 1000
    alpha_max: float = 50.0
    line_tol: float = 1e-10
    init: str = "ccmean"
    ridge: float = DEFAULT_RIDGE

    def __post_init__(self):
        if not self.eta_stop > 0:
            raise InvalidInput("eta_stop must be positive")
        if self.max_iter < 1:
            raise InvalidInput("max_iter must be at least 1")
        if self.init not in ("zero", "ccmean"):
            raise InvalidInput("init must be 'zero' or 'ccmean'")


@dataclass
class FitReport:
    """``risk_trace[0]`` is the initial risk, ``risk_trace[m]`` the risk after
    accepted update ``m``.  For Huber the trace entry of an update is taken
    under the transition point used in that update."""

    iterations: int = 0
    risk_trace: List[float] = field(default_factory=list)
    stop_reason: str = ""
    alphas: List[float] = field(default_factory=list)
    risk_before: List[float] = field(default_factory=list)
    etas: List[float] = field(default_factory=list)
    increments: Optional[list] = None

    def to_dict(self) -> dict:
        return {
            "iterations": self.iterations,
            "stop_reason": self.stop_reason,
            "risk_trace": self.risk_trace,
            "risk_before": self.risk_before,
            "alphas": self.alphas,
            "huber_eta": self.etas,
        }


def line_search(risk: Callable[[float], float], alpha_max: float = 50.0, tol: float = 1e-10,
                direction=None) -> float:
    """Golden-section minimizer of ``risk`` on ``[-alpha_max, alpha_max]``.

    Returns the midpoint of the final bracket, whose width is below ``tol``.
    When the sampled ``direction`` is given it must not vanish identically.
    """
    if direction is not None and not np.any(np.asarray(direction)):
        raise DegenerateDirection("search direction vanishes on the sample")
    a, b = -alpha_max, alpha_max
    c = b - _INV_PHI * (b - a)
    d = a + _INV_PHI * (b - a)
    fc, fd = risk(c), risk(d)
    while b - a > tol:
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - _INV_PHI * (b - a)
            fc = risk(c)
        else:
            a, c, fc = c, d, fd
            d = a + _INV_PHI * (b - a)
            fd = risk(d)
    return 0.5 * (a + b)


def risk_empirical(ctx: AdjustedLossContext, loss: LossSpec, f, eta=None) -> float:
    """Mean adjusted loss over the context's rows at fitted values ``f``."""
    if ctx.n == 0:
        raise NoCompleteCases("no rows enter the empirical risk")
    return float(np.mean(adjusted_loss(ctx, loss, f, eta)))


def model_risk(ds: Dataset, ctx: AdjustedLossContext, loss: LossSpec, model: AdditiveSplineModel,
               eta=None) -> float:
    if ctx.n == 0:
        raise NoCompleteCases("no rows enter the empirical risk")
    return risk_empirical(ctx, loss, model.predict(ds.x[ctx.keep]), eta)


def _initial_value(ctx, config):
    if config.init == "zero":
        return 0.0
    obs = ctx.observed
    if not obs.any():
        raise NoCompleteCases("no observed responses for the initial mean")
    return float(np.mean(ctx.y[obs]))


def boost_fit(ds: Dataset, ctx: AdjustedLossContext, loss: LossSpec, knot_spec: KnotSpec,
              config: FitConfig = FitConfig(), record_increments: bool = False):
    """Run the boosting iterations; returns ``(model, report)``.

    The run stops when an update changes the empirical risk by at most
    ``eta_stop`` (that update is discarded, as the final estimate is the one
    before it), when the line search ends on the interval boundary without
    progress, or after ``max_iter`` updates.
    """
    X = ds.x[ctx.keep]
    if X.shape[0] == 0:
        raise NoCompleteCases("no rows enter the empirical risk")
    projector = SplineProjector(X, knot_spec, config.ridge)
    theta = np.zeros(projector.design.shape[1])
    theta[0] = _initial_value(ctx, config)
    f = projector.design @ theta
    report = FitReport(increments=[] if record_increments else None)
    huber = loss.kind == "huber"
    eta = huber_eta(ctx, loss, f) if huber else None
    report.risk_trace.append(risk_empirical(ctx, loss, f, eta))

    for m in range(1, config.max_iter + 1):
        if huber:
            eta = huber_eta(ctx, loss, f)
            report.etas.append(eta)
        r_old = risk_empirical(ctx, loss, f, eta)
        g = adjusted_grad(ctx, loss, f, eta)
        coef = projector.coefficients(-g)
        h = projector.design @ coef
        try:
            alpha = line_search(lambda a: risk_empirical(ctx, loss, f + a * h, eta),
                                config.alpha_max, config.line_tol, direction=h)
            r_new = risk_empirical(ctx, loss, f + alpha * h, eta)
        except DegenerateDirection:
            alpha, r_new = 0.0, r_old
        report.iterations = m
        at_edge = abs(alpha) >= config.alpha_max - config.line_tol
        if r_new > r_old + config.eta_stop:
            # a convex restriction cannot do this; refuse the step
            report.stop_reason = STALLED
            break
        if abs(r_old - r_new) <= config.eta_stop:
            report.stop_reason = STALLED if at_edge else THRESHOLD
            break
        report.risk_before.append(r_old)
        report.alphas.append(alpha)
        report.risk_trace.append(r_new)
        theta = theta + alpha * coef
        f = f + alpha * h
        if record_increments:
            report.increments.append((alpha, AdditiveSplineModel.from_vector(knot_spec, coef)))
    else:
        report.stop_reason = MAX_ITER

    model = AdditiveSplineModel.from_vector(knot_spec, theta)
    if record_increments:
        report.increments.insert(0, AdditiveSplineModel.constant(knot_spec, _initial_value(ctx, config)))
    return model, report
