"""Pointwise losses ``L(y, f)`` and their derivatives in ``f``.

All functions broadcast over numpy arrays.  Huber losses need the current
transition point ``eta``; the other kinds ignore it.
"""

from __future__ import annotations

import numpy as np

from .data import LossSpec
from .errors import InvalidInput, NoCompleteCases

ETA_FLOOR = 1e-8


def loss_value(spec: LossSpec, y, f, eta=None):
    u = np.abs(np.asarray(y, dtype=float) - f)
    if spec.kind == "l2":
        return 0.5 * u * u
    if spec.kind == "l1":
        return u
    if eta is None:
        raise InvalidInput("huber loss needs a transition point")
    return np.where(u <= eta, 0.5 * u * u, eta * (u - 0.5 * eta))


def loss_grad(spec: LossSpec, y, f, eta=None):
    d = f - np.asarray(y, dtype=float)
    if spec.kind == "l2":
        return d
    if spec.kind == "l1":
        # subgradient 0 at the kink
        return np.sign(d)
    if eta is None:
        raise InvalidInput("huber loss needs a transition point")
    return np.clip(d, -eta, eta)


def huber_eta_update(residuals, quantile: float = 50.0, r=None) -> float:
    """Transition point from absolute residuals of observed rows.

    Uses the type-7 (linear interpolation) percentile; a zero percentile is
    floored at ``1e-8``.
    """
    res = np.abs(np.asarray(residuals, dtype=float))
    if r is not None:
        res = res[np.asarray(r) == 1]
    if res.size == 0:
        raise NoCompleteCases("no observed residuals to set the Huber transition point")
    return max(float(np.percentile(res, quantile)), ETA_FLOOR)
