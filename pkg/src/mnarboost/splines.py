"""Additive B-spline function class used as the weak learner.

Each covariate gets a clamped knot sequence of order ``M`` with ``T - M + 1``
interior knots at empirical quantiles.  That sequence carries ``T + 1``
B-spline functions; they sum to one, so together with the intercept one of
them is redundant.  The additive model therefore keeps the last ``T`` of
them per covariate, which spans exactly the same function space and leaves
the normal equations full rank.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import linalg

from .errors import DegenerateCovariate, DimensionMismatch, InvalidInput, SingularSystem

FORMAT_VERSION = 1
DEFAULT_RIDGE = 1e-8


@dataclass(frozen=True)
class KnotSpec:
    order: int
    num_basis: int
    knots: tuple  # one full (clamped) knot vector per covariate

    def __post_init__(self):
        if self.order < 2:
            raise InvalidInput("spline order must be >= 2")
        if self.num_basis < self.order:
            raise InvalidInput("num_basis must be >= order")
        knots = tuple(np.asarray(k, dtype=float) for k in self.knots)
        n_int = self.num_basis - self.order + 1
        for t in knots:
            if t.size != 2 * self.order + n_int:
                raise InvalidInput("knot vector length does not match order/num_basis")
            if np.any(np.diff(t) < 0):
                raise InvalidInput("knot vector must be non-decreasing")
        object.__setattr__(self, "knots", knots)

    @property
    def p(self) -> int:
        return len(self.knots)

    @property
    def n_interior(self) -> int:
        return self.num_basis - self.order + 1

    def interior(self, k: int) -> np.ndarray:
        return self.knots[k][self.order:-self.order]

    def bounds(self, k: int):
        t = self.knots[k]
        return t[0], t[-1]


def _strictly_increasing(interior, lo, hi):
    out = interior.copy()
    step = 1e-9 * (hi - lo)
    prev = lo
    for j in range(out.size):
        if out[j] <= prev:
            out[j] = prev + step
        prev = out[j]
    return out


def make_knots(values, order: int = 2, num_basis: int = 3) -> KnotSpec:
    """Quantile knots for each column of ``values`` (shape ``(n, p)``)."""
    values = np.asarray(values, dtype=float)
    if values.ndim == 1:
        values = values[:, None]
    n_int = num_basis - order + 1
    levels = np.arange(1, n_int + 1) / (n_int + 1)
    knots = []
    for k in range(values.shape[1]):
        col = values[:, k]
        lo, hi = float(col.min()), float(col.max())
        if not hi > lo:
            raise DegenerateCovariate(f"covariate {k + 1} is constant")
        inner = _strictly_increasing(np.quantile(col, levels), lo, hi)
        knots.append(np.concatenate([np.full(order, lo), inner, np.full(order, hi)]))
    return KnotSpec(order, num_basis, tuple(knots))


def _cox_de_boor(t: np.ndarray, order: int, x: np.ndarray) -> np.ndarray:
    x = np.clip(x, t[0], t[-1])
    n_funcs = t.size - order
    # order-1 indicators on half-open spans; the right end belongs to the last
    # non-empty span so the basis still sums to one there
    B = ((t[:-1] <= x[:, None]) & (x[:, None] < t[1:])).astype(float)
    last = np.flatnonzero(t[:-1] < t[1:])[-1]
    B[x >= t[-1], last] = 1.0
    for m in range(2, order + 1):
        nb = t.size - m
        left_den = t[m - 1:m - 1 + nb] - t[:nb]
        right_den = t[m:m + nb] - t[1:1 + nb]
        with np.errstate(divide="ignore", invalid="ignore"):
            left = np.where(left_den > 0, (x[:, None] - t[:nb]) / left_den, 0.0)
            right = np.where(right_den > 0, (t[m:m + nb] - x[:, None]) / right_den, 0.0)
        B = left * B[:, :nb] + right * B[:, 1:nb + 1]
    return B[:, :n_funcs]


def basis_eval(spec: KnotSpec, k: int, xk):
    """All ``T + 1`` B-spline values of covariate ``k`` at ``xk``.

    Points outside the boundary knots are clamped to the boundary.  A scalar
    input returns a 1-d vector, an array input a ``(len(xk), T + 1)`` matrix.
    """
    scalar = np.ndim(xk) == 0
    out = _cox_de_boor(spec.knots[k], spec.order, np.atleast_1d(np.asarray(xk, dtype=float)))
    return out[0] if scalar else out


def design_matrix(spec: KnotSpec, X) -> np.ndarray:
    """Columns: intercept, then ``T`` retained basis columns per covariate."""
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[None, :]
    if X.shape[1] != spec.p:
        raise DimensionMismatch(f"expected {spec.p} covariates, got {X.shape[1]}")
    cols = [np.ones((X.shape[0], 1))]
    for k in range(spec.p):
        cols.append(basis_eval(spec, k, X[:, k])[:, 1:])
    return np.hstack(cols)


@dataclass(frozen=True)
class AdditiveSplineModel:
    knot_spec: KnotSpec
    intercept: float
    coef: np.ndarray  # shape (p, T)

    def __post_init__(self):
        coef = np.asarray(self.coef, dtype=float).reshape(self.knot_spec.p, self.knot_spec.num_basis)
        object.__setattr__(self, "coef", coef)
        object.__setattr__(self, "intercept", float(self.intercept))

    @classmethod
    def constant(cls, spec: KnotSpec, value: float = 0.0) -> "AdditiveSplineModel":
        return cls(spec, value, np.zeros((spec.p, spec.num_basis)))

    @classmethod
    def from_vector(cls, spec: KnotSpec, theta) -> "AdditiveSplineModel":
        theta = np.asarray(theta, dtype=float)
        return cls(spec, theta[0], theta[1:])

    def as_vector(self) -> np.ndarray:
        return np.concatenate([[self.intercept], self.coef.ravel()])

    def predict(self, X) -> np.ndarray:
        return design_matrix(self.knot_spec, X) @ self.as_vector()

    def combine(self, a: float, other: "AdditiveSplineModel", b: float = 1.0) -> "AdditiveSplineModel":
        """Coefficientwise ``a * self + b * other``; knots must be shared."""
        if other.knot_spec is not self.knot_spec and not _same_knots(self.knot_spec, other.knot_spec):
            raise InvalidInput("models do not share a knot specification")
        return AdditiveSplineModel.from_vector(self.knot_spec, a * self.as_vector() + b * other.as_vector())

    def to_text(self) -> str:
        ks = self.knot_spec
        lines = [f"mnarboost-spline-model {FORMAT_VERSION}",
                 f"order {ks.order}", f"num_basis {ks.num_basis}", f"p {ks.p}"]
        lines += [f"knots {k} " + " ".join(repr(float(v)) for v in ks.knots[k]) for k in range(ks.p)]
        lines.append(f"intercept {self.intercept!r}")
        lines += [f"coef {k} " + " ".join(repr(float(v)) for v in self.coef[k]) for k in range(ks.p)]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "AdditiveSplineModel":
        lines = [ln.split() for ln in text.strip().splitlines() if ln.strip()]
        if not lines or lines[0][0] != "mnarboost-spline-model":
            raise InvalidInput("not a spline model file")
        if int(lines[0][1]) != FORMAT_VERSION:
            raise InvalidInput(f"unsupported model format version {lines[0][1]}")
        fields = {}
        knots, coef = {}, {}
        for parts in lines[1:]:
            if parts[0] == "knots":
                knots[int(parts[1])] = [float(v) for v in parts[2:]]
            elif parts[0] == "coef":
                coef[int(parts[1])] = [float(v) for v in parts[2:]]
            else:
                fields[parts[0]] = parts[1]
        p = int(fields["p"])
        spec = KnotSpec(int(fields["order"]), int(fields["num_basis"]), tuple(knots[k] for k in range(p)))
        return cls(spec, float(fields["intercept"]), np.array([coef[k] for k in range(p)]))


def _same_knots(a: KnotSpec, b: KnotSpec) -> bool:
    return (a.order == b.order and a.num_basis == b.num_basis and a.p == b.p
            and all(np.array_equal(s, t) for s, t in zip(a.knots, b.knots)))


class SplineProjector:
    """Penalized least-squares projection onto the additive spline span.

    The design and its Cholesky factor are computed once, so repeated
    projections of different targets on the same rows (one per boosting
    iteration) cost a triangular solve each.
    """

    def __init__(self, X, spec: KnotSpec, ridge: float = DEFAULT_RIDGE):
        if ridge < 0:
            raise InvalidInput("ridge must be non-negative")
        self.spec = spec
        self.design = design_matrix(spec, X)
        gram = self.design.T @ self.design
        penalty = np.full(gram.shape[0], ridge)
        penalty[0] = 0.0
        gram[np.diag_indices_from(gram)] += penalty
        if ridge == 0 and np.linalg.matrix_rank(self.design) < self.design.shape[1]:
            raise SingularSystem("design is rank deficient and no ridge was given")
        try:
            self._factor = linalg.cho_factor(gram, lower=True)
        except linalg.LinAlgError as exc:
            raise SingularSystem(str(exc)) from exc

    def coefficients(self, targets) -> np.ndarray:
        targets = np.asarray(targets, dtype=float)
        if targets.shape != (self.design.shape[0],):
            raise DimensionMismatch("targets must have one entry per row")
        return linalg.cho_solve(self._factor, self.design.T @ targets)

    def fit(self, targets) -> AdditiveSplineModel:
        return AdditiveSplineModel.from_vector(self.spec, self.coefficients(targets))


def fit_least_squares(X, targets, spec: KnotSpec, ridge: float = DEFAULT_RIDGE) -> AdditiveSplineModel:
    """Minimize ``sum (target - h(x))^2 + ridge * |xi|^2``; the intercept is unpenalized."""
    return SplineProjector(X, spec, ridge).fit(targets)


def predict(model: AdditiveSplineModel, x: Sequence[float]) -> float:
    """Single-point prediction."""
    x = np.asarray(x, dtype=float)
    if x.ndim != 1 or x.size != model.knot_spec.p:
        raise DimensionMismatch(f"expected a vector of {model.knot_spec.p} covariates")
    return float(model.predict(x[None, :])[0])
