"""Conditional-expectation learners.

Each estimator fits E[target | inputs] from a Dataset. Squared loss is
minimized by the conditional mean, which for a binary target is also the
cross-entropy optimum, so one family serves both cases.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .data import Dataset
from .errors import ArgumentError, FitError

KINDS = ("linear", "cpt", "binned")


@dataclass(frozen=True)
class EstimatorSpec:
    kind: str = "binned"
    ridge: float = 0.0
    bins: int | None = None  # None: chosen from the number of inputs

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ArgumentError(f"unknown estimator kind {self.kind!r}; expected one of {KINDS}")
        if self.ridge < 0:
            raise ArgumentError("ridge must be >= 0")
        if self.bins is not None and self.bins < 2:
            raise ArgumentError("bins per dimension must be >= 2")

    def bins_for(self, n_inputs: int) -> int:
        if self.bins is not None:
            return self.bins
        return default_bins(n_inputs)

    @classmethod
    def parse(cls, text: str) -> "EstimatorSpec":
        """'binned', 'binned:40', 'linear', 'linear:1e-6' or 'cpt'."""
        kind, _, arg = text.partition(":")
        kind = kind.strip()
        if kind == "binned":
            return cls("binned", bins=int(arg) if arg else None)
        if kind == "linear":
            return cls("linear", ridge=float(arg) if arg else 0.0)
        if kind == "cpt":
            return cls("cpt")
        raise ArgumentError(f"unknown estimator {text!r}")

    def __str__(self):
        if self.kind == "binned":
            return "binned" if self.bins is None else f"binned:{self.bins}"
        if self.kind == "linear":
            return f"linear:{self.ridge!r}"
        return "cpt"


def default_bins(n_inputs: int) -> int:
    if n_inputs <= 2:
        return 32
    if n_inputs == 3:
        return 12
    if n_inputs == 4:
        return 8
    # keep the dense grid under ~2e6 cells
    return max(3, int((2e6) ** (1.0 / n_inputs)))


def unique_rows(X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Distinct rows of X and the index of each row's configuration.

    Rows are packed into one integer per row (mixed radix over per-column
    codes), which is much faster than a row-wise unique.
    """
    X = np.asarray(X, dtype=float)
    n, k = X.shape
    if k == 0:
        return np.empty((1 if n else 0, 0)), np.zeros(n, dtype=np.int64)
    code = np.zeros(n, dtype=np.int64)
    radix = 1
    for j in range(k):
        _, inv = np.unique(X[:, j], return_inverse=True)
        size = int(inv.max()) + 1 if n else 1
        if radix * size >= 2**62:
            configs, inverse = np.unique(X, axis=0, return_inverse=True)
            return configs, inverse.reshape(-1)
        code = code * size + inv.reshape(-1)
        radix *= size
    _, first, inverse = np.unique(code, return_index=True, return_inverse=True)
    return X[first], inverse.reshape(-1)


def _weighted_mean(y: np.ndarray, w: np.ndarray | None) -> float:
    if w is None:
        return float(y.mean())
    return float(np.dot(w, y) / w.sum())


@dataclass(frozen=True, eq=False)
class FittedModel:
    spec: EstimatorSpec
    inputs: tuple[str, ...]
    target: str
    fallback: float
    n_train: int

    def predict_matrix(self, X: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def predict_dataset(self, d: Dataset) -> np.ndarray:
        return self.predict_matrix(d.matrix(self.inputs))

    def predict(self, row: Mapping[str, float]) -> float:
        missing = [n for n in self.inputs if n not in row]
        if missing:
            raise ArgumentError(f"missing input(s): {', '.join(missing)}")
        x = np.array([[float(row[n]) for n in self.inputs]]).reshape(1, len(self.inputs))
        return float(self.predict_matrix(x)[0])

    @property
    def n_params(self) -> int:
        raise NotImplementedError

    def summary(self) -> str:
        return (f"estimator: {self.spec}\n"
                f"target: {self.target}\n"
                f"inputs: {', '.join(self.inputs) if self.inputs else '(none)'}\n"
                f"parameters: {self.n_params}\n"
                f"training rows: {self.n_train}\n")


@dataclass(frozen=True, eq=False)
class ConstantModel(FittedModel):
    def predict_matrix(self, X):
        return np.full(len(X), self.fallback)

    @property
    def n_params(self):
        return 1


@dataclass(frozen=True, eq=False)
class LinearModel(FittedModel):
    intercept: float = 0.0
    coefficients: tuple[float, ...] = ()

    @property
    def coef(self) -> dict[str, float]:
        return dict(zip(self.inputs, self.coefficients))

    def predict_matrix(self, X):
        return self.intercept + np.asarray(X, dtype=float) @ np.asarray(self.coefficients)

    @property
    def n_params(self):
        return 1 + len(self.coefficients)


@dataclass(frozen=True, eq=False)
class CptModel(FittedModel):
    """Per-configuration target means; unseen configurations get the fallback.

    For small integer-valued targets the per-configuration class frequencies
    are kept as well, so the model can drive a categorical mechanism.
    """

    table: Mapping[tuple, float] = field(default_factory=dict)
    counts: Mapping[tuple, float] = field(default_factory=dict)
    levels: tuple[float, ...] | None = None
    probs: Mapping[tuple, np.ndarray] | None = None
    marginal: np.ndarray | None = None

    @staticmethod
    def _lookup(X, table, fallback, width):
        # look each distinct configuration up once
        X = np.asarray(X, dtype=float).reshape(len(X), -1)
        if len(X) == 0:
            return np.empty((0, width))
        if X.shape[1] == 0:
            row = np.asarray(table.get((), fallback), dtype=float).reshape(1, width)
            return np.repeat(row, len(X), axis=0)
        configs, inverse = unique_rows(X)
        rows = np.array([table.get(k, fallback) for k in map(tuple, configs.tolist())],
                        dtype=float).reshape(len(configs), width)
        return rows[inverse.reshape(-1)]

    def predict_matrix(self, X):
        return self._lookup(X, self.table, self.fallback, 1)[:, 0]

    def predict_proba_matrix(self, X) -> np.ndarray:
        if self.levels is None:
            raise ArgumentError("target is not categorical")
        return self._lookup(X, self.probs, self.marginal, len(self.levels))

    @property
    def n_params(self):
        return len(self.table)


@dataclass(frozen=True, eq=False)
class BinnedModel(FittedModel):
    """Cell means over an equal-width grid spanning the observed range.

    Queries outside the range are clamped to the boundary cells; empty cells
    return the fallback (the global target mean).
    """

    bins: int = 32
    lo: tuple[float, ...] = ()
    hi: tuple[float, ...] = ()
    means: np.ndarray = field(default_factory=lambda: np.empty(0))
    counts: np.ndarray = field(default_factory=lambda: np.empty(0))

    def cell_index(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        idx = []
        for j in range(X.shape[1]):
            width = self.hi[j] - self.lo[j]
            if width > 0:
                k = np.floor((X[:, j] - self.lo[j]) / width * self.bins)
            else:
                k = np.zeros(len(X))
            idx.append(np.clip(k, 0, self.bins - 1).astype(np.int64))
        return np.ravel_multi_index(idx, (self.bins,) * X.shape[1])

    def predict_matrix(self, X):
        return self.means[self.cell_index(X)]

    def count_at(self, X) -> np.ndarray:
        """Training rows in the cell of each query point."""
        return self.counts[self.cell_index(X)]

    def centers(self, dim: int) -> np.ndarray:
        edges = np.linspace(self.lo[dim], self.hi[dim], self.bins + 1)
        return 0.5 * (edges[:-1] + edges[1:])

    @property
    def n_params(self):
        return int((self.counts > 0).sum())


def fit(spec: EstimatorSpec, d: Dataset, inputs: Sequence[str], target: str,
        rows: np.ndarray | None = None) -> FittedModel:
    """Fit E[target | inputs] on ``d`` (optionally restricted to a row mask)."""
    inputs = tuple(inputs)
    if target in inputs:
        raise ArgumentError("target cannot be an input")
    d.require(inputs + (target,))
    y = np.asarray(d[target])
    X = d.matrix(inputs)
    w = d.weights
    if rows is not None:
        y, X = y[rows], X[rows]
        w = None if w is None else w[rows]
    n = len(y)
    if n == 0 or (w is not None and w.sum() <= 0):
        raise FitError(f"no usable rows to fit {target} | {', '.join(inputs) or '()'}")
    fallback = _weighted_mean(y, w)
    common = dict(spec=spec, inputs=inputs, target=target, fallback=fallback, n_train=n)
    if not inputs:
        return ConstantModel(**common)
    if spec.kind == "linear":
        return _fit_linear(spec, X, y, w, common)
    if spec.kind == "cpt":
        return _fit_cpt(X, y, w, common)
    return _fit_binned(spec, X, y, w, common)


def _fit_linear(spec, X, y, w, common) -> LinearModel:
    n, k = X.shape
    A = np.column_stack([np.ones(n), X])
    Aw = A if w is None else A * w[:, None]
    xtx = Aw.T @ A
    xty = Aw.T @ y
    penalty = np.eye(k + 1) * spec.ridge
    penalty[0, 0] = 0.0
    lhs = xtx + penalty
    if spec.ridge == 0 and np.linalg.cond(lhs) > 1e12:
        raise FitError("normal equations are singular; use a ridge > 0 (e.g. 'linear:1e-8')")
    try:
        beta = np.linalg.solve(lhs, xty)
    except np.linalg.LinAlgError:
        raise FitError("normal equations are singular; use a ridge > 0") from None
    return LinearModel(**common, intercept=float(beta[0]),
                       coefficients=tuple(float(b) for b in beta[1:]))


def _categorical_levels(y: np.ndarray) -> np.ndarray | None:
    levels = np.unique(y)
    if len(levels) <= 16 and np.all(levels == np.round(levels)):
        return levels
    return None


def _fit_cpt(X, y, w, common) -> CptModel:
    configs, inverse = unique_rows(X)
    ww = np.ones(len(y)) if w is None else w
    tot = np.bincount(inverse, weights=ww, minlength=len(configs))
    sums = np.bincount(inverse, weights=ww * y, minlength=len(configs))
    keys = [tuple(r) for r in configs.tolist()]
    seen = tot > 0
    table = {k: float(s / t) for k, s, t, ok in zip(keys, sums, tot, seen) if ok}
    counts = {k: float(t) for k, t, ok in zip(keys, tot, seen) if ok}
    levels = _categorical_levels(y)
    probs = marginal = None
    if levels is not None:
        level_idx = np.searchsorted(levels, y)
        joint = np.zeros((len(configs), len(levels)))
        np.add.at(joint, (inverse, level_idx), ww)
        marginal = joint.sum(axis=0) / joint.sum()
        probs = {k: joint[i] / tot[i] for i, k in enumerate(keys) if seen[i]}
        levels = tuple(float(v) for v in levels)
    return CptModel(**common, table=table, counts=counts, levels=levels, probs=probs,
                    marginal=marginal)


def _fit_binned(spec, X, y, w, common) -> BinnedModel:
    k = X.shape[1]
    bins = spec.bins_for(k)
    lo = tuple(float(v) for v in X.min(axis=0))
    hi = tuple(float(v) for v in X.max(axis=0))
    model = BinnedModel(**common, bins=bins, lo=lo, hi=hi)
    cells = model.cell_index(X)
    size = bins ** k
    ww = np.ones(len(y)) if w is None else w
    counts = np.bincount(cells, minlength=size).astype(float)
    tot = np.bincount(cells, weights=ww, minlength=size)
    sums = np.bincount(cells, weights=ww * y, minlength=size)
    means = np.full(size, model.fallback)
    np.divide(sums, tot, out=means, where=tot > 0)
    object.__setattr__(model, "means", means)
    object.__setattr__(model, "counts", counts)
    return model
