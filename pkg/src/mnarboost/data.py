"""Observed-data samples, method/loss records, validation and splitting."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .errors import (
    DimensionMismatch,
    InvalidInput,
    MissingYWithR1,
    NoCompleteCases,
    NonFiniteValue,
    TooFewRows,
)

LOSS_KINDS = ("l1", "l2", "huber")
METHOD_KINDS = ("r", "n", "ipw", "ipwn", "bj")


@dataclass(frozen=True)
class Dataset:
    """A sample of ``(x, y, r)`` rows.

    ``y`` is NaN exactly where ``r == 0``; a NaN propagates through any
    arithmetic that forgets to mask it, so a missing response can never be
    silently used as a number.  ``full_y`` is the unmasked response vector,
    present only for simulated data and only read by the reference method
    and by truth-based evaluation.
    """

    x: np.ndarray
    y: np.ndarray
    r: np.ndarray
    index: Optional[np.ndarray] = None
    full_y: Optional[np.ndarray] = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float)
        if x.ndim == 1:
            x = x[:, None]
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", np.asarray(self.y, dtype=float).ravel())
        object.__setattr__(self, "r", np.asarray(self.r).astype(np.int8).ravel())
        if self.index is None:
            object.__setattr__(self, "index", np.arange(x.shape[0]))
        else:
            object.__setattr__(self, "index", np.asarray(self.index, dtype=np.int64))
        if self.full_y is not None:
            object.__setattr__(self, "full_y", np.asarray(self.full_y, dtype=float))

    @property
    def n(self) -> int:
        return self.x.shape[0]

    @property
    def p(self) -> int:
        return self.x.shape[1]

    @property
    def observed(self) -> np.ndarray:
        return self.r == 1

    def subset(self, rows) -> "Dataset":
        rows = np.asarray(rows)
        return Dataset(
            self.x[rows],
            self.y[rows],
            self.r[rows],
            self.index[rows],
            None if self.full_y is None else self.full_y[rows],
        )

    def complete_cases(self) -> "Dataset":
        return self.subset(np.flatnonzero(self.observed))

    def unmasked(self) -> "Dataset":
        """Full-data view for the reference method; all rows observed."""
        if self.full_y is None:
            if self.observed.all():
                return self
            raise InvalidInput("reference method needs the unmasked responses")
        return replace(self, y=self.full_y.copy(), r=np.ones(self.n, dtype=np.int8))

    def without_truth(self) -> "Dataset":
        return replace(self, full_y=None)

    @classmethod
    def from_csv(cls, path, unmasked: bool = False) -> "Dataset":
        """Read ``id, x1..xp, y, r``.

        With ``unmasked`` the file carries every response (a simulation
        sidecar); ``y`` is then masked by ``r`` and the full vector kept in
        ``full_y``.
        """
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            try:
                header = [h.strip() for h in next(reader)]
            except StopIteration:
                raise InvalidInput(f"{path}: empty file, header row required")
            xcols = [i for i, h in enumerate(header) if h.startswith("x") and h[1:].isdigit()]
            xcols.sort(key=lambda i: int(header[i][1:]))
            if not xcols or "y" not in header or "r" not in header:
                raise InvalidInput(f"{path}: header must contain x1..xp, y and r")
            iy, ir = header.index("y"), header.index("r")
            iid = header.index("id") if "id" in header else None
            xs, ys, rs, ids = [], [], [], []
            for lineno, row in enumerate(reader, start=2):
                if not row:
                    continue
                try:
                    xs.append([float(row[i]) for i in xcols])
                    rv = row[ir].strip()
                    if rv not in ("0", "1"):
                        raise InvalidInput(f"{path}:{lineno}: r must be 0 or 1")
                    rs.append(int(rv))
                    ys.append(float(row[iy]) if row[iy].strip() else np.nan)
                    if iid is not None:
                        ids.append(int(row[iid]))
                except (ValueError, IndexError) as exc:
                    if isinstance(exc, InvalidInput):
                        raise
                    raise InvalidInput(f"{path}:{lineno}: malformed row ({exc})")
        x = np.array(xs, dtype=float).reshape(len(xs), len(xcols))
        y, r = np.array(ys, dtype=float), np.array(rs, dtype=np.int8)
        idx = np.array(ids) if iid is not None else None
        if unmasked:
            bad = np.flatnonzero(np.isnan(y))
            if bad.size:
                raise MissingYWithR1(f"{path}: unmasked file lacks responses", bad[:10].tolist())
            ds = cls(x, np.where(r == 1, y, np.nan), r, idx, y)
        else:
            ds = cls(x, y, r, idx)
        validate(ds)
        return ds

    def to_csv(self, path, responses: Optional[np.ndarray] = None) -> None:
        y = self.y if responses is None else responses
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["id"] + [f"x{k + 1}" for k in range(self.p)] + ["y", "r"])
            for i in range(self.n):
                yv = "" if np.isnan(y[i]) else repr(float(y[i]))
                w.writerow([int(self.index[i])] + [repr(float(v)) for v in self.x[i]]
                           + [yv, int(self.r[i])])


@dataclass(frozen=True)
class LossSpec:
    kind: str = "l2"
    huber_quantile: float = 50.0

    def __post_init__(self):
        if self.kind not in LOSS_KINDS:
            raise InvalidInput(f"unknown loss {self.kind!r}")
        if not 0.0 < self.huber_quantile <= 100.0:
            raise InvalidInput("huber_quantile must lie in (0, 100]")


@dataclass(frozen=True)
class MethodSpec:
    """Which adjustment to fit with.

    ``density_misspecified`` swaps the working density for
    ``Normal(b * x1, s^2)``; ``propensity_misspecified`` swaps the selection
    model for an intercept-only logit.  Both flags exist for the
    misspecification benchmark only.
    """

    kind: str = "ipw"
    density_mode: str = "parametric"
    density_misspecified: bool = False
    propensity_misspecified: bool = False

    def __post_init__(self):
        if self.kind not in METHOD_KINDS:
            raise InvalidInput(f"unknown method {self.kind!r}")
        if self.density_mode not in ("parametric", "nonparametric"):
            raise InvalidInput(f"unknown density mode {self.density_mode!r}")
        if self.density_mode == "nonparametric" and self.kind != "ipwn":
            raise InvalidInput("nonparametric density is only used by the ipwn method")

    @classmethod
    def from_label(cls, label: str) -> "MethodSpec":
        """Build from a benchmark label such as ``IPW3`` or ``BJ``."""
        lab = label.strip().upper()
        table = {
            "R": cls("r"),
            "N": cls("n"),
            "BJ": cls("bj"),
            "IPW": cls("ipw"),
            "IPW1": cls("ipw"),
            "IPW2": cls("ipw", density_misspecified=True),
            "IPW3": cls("ipw", propensity_misspecified=True),
            "IPW4": cls("ipw", density_misspecified=True, propensity_misspecified=True),
            "IPWN": cls("ipwn", "nonparametric"),
            "IPWN1": cls("ipwn", "nonparametric"),
            "IPWN2": cls("ipwn", "nonparametric", propensity_misspecified=True),
        }
        if lab not in table:
            raise InvalidInput(f"unknown method label {label!r}")
        return table[lab]


def validate(ds: Dataset) -> None:
    """Raise on the first violated invariant; listed rows are capped at ten."""
    n = ds.n
    if ds.y.shape != (n,) or ds.r.shape != (n,):
        raise DimensionMismatch("x, y and r must have the same number of rows")
    bad = np.flatnonzero(~np.isfinite(ds.x).all(axis=1))
    if bad.size:
        raise NonFiniteValue("non-finite covariate values", bad[:10])
    bad = np.flatnonzero((ds.r != 0) & (ds.r != 1))
    if bad.size:
        raise InvalidInput("r must be 0 or 1", bad[:10])
    obs = ds.observed
    bad = np.flatnonzero(obs & np.isnan(ds.y))
    if bad.size:
        raise MissingYWithR1("observed rows with an absent response", bad[:10])
    bad = np.flatnonzero(obs & ~np.isfinite(ds.y))
    if bad.size:
        raise NonFiniteValue("non-finite responses", bad[:10])
    bad = np.flatnonzero(~obs & ~np.isnan(ds.y))
    if bad.size:
        raise InvalidInput("rows with r=0 must not carry a response", bad[:10])
    if not obs.any():
        raise NoCompleteCases("no row has an observed response")


def split_train_test(ds: Dataset, ratio=(4, 1), seed: int = 0):
    """Random disjoint split; the train share is ``round(n * a / (a + b))``."""
    if ds.n < 5:
        raise TooFewRows(f"need at least 5 rows to split, got {ds.n}")
    a, b = ratio
    n_train = int(round(ds.n * a / (a + b)))
    perm = np.random.default_rng(seed).permutation(ds.n)
    return ds.subset(np.sort(perm[:n_train])), ds.subset(np.sort(perm[n_train:]))
