"""Prediction accuracy against known target functions."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import LengthMismatch


def _pair(preds, truths):
    p = np.asarray(preds, dtype=float).ravel()
    t = np.asarray(truths, dtype=float).ravel()
    if p.size != t.size:
        raise LengthMismatch(f"{p.size} predictions against {t.size} truths")
    if p.size == 0:
        raise LengthMismatch("need at least one prediction")
    return p, t


def s_mae(preds, truths) -> float:
    """Largest absolute deviation over the sample."""
    p, t = _pair(preds, truths)
    return float(np.max(np.abs(p - t)))


def s_rmse(preds, truths) -> float:
    p, t = _pair(preds, truths)
    return float(np.sqrt(np.mean((p - t) ** 2)))


def avg_pred(preds) -> float:
    p = np.asarray(preds, dtype=float).ravel()
    if p.size == 0:
        raise LengthMismatch("need at least one prediction")
    return float(np.mean(p))


@dataclass(frozen=True)
class EvalResult:
    s_mae: float
    s_rmse: float
    avg_pred: float
    method: str = ""
    loss: str = ""
    setting: int = 0
    scenario: str = ""
    note: str = ""


def truth_kind(loss: str, gamma_y: float) -> str:
    """Which population target a loss estimates: ``mean``, ``median`` or ``none``.

    Huber under MNAR has no closed-form target.
    """
    if loss == "l2":
        return "mean"
    if loss == "l1":
        return "median"
    return "mean" if gamma_y == 0 else "none"


def evaluate(preds, truths, **labels) -> EvalResult:
    """Metrics on one test sample; ``truths=None`` reports ``avg_pred`` only."""
    if truths is None:
        return EvalResult(float("nan"), float("nan"), avg_pred(preds), note="no analytic truth", **labels)
    return EvalResult(s_mae(preds, truths), s_rmse(preds, truths), avg_pred(preds), **labels)
