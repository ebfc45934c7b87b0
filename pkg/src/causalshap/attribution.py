"""Observational and causal-context Shapley attribution.

An importance term compares E[Y | X_j, S] with E[Y | S]. The observational
version fits both on data; the interventional version fits them on samples
of the model in which the context S is drawn from its marginal independently
of its causes. Shapley values weight these terms over all contexts.
"""
from __future__ import annotations

import csv
import io
import itertools
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction
from typing import Iterable, Mapping, Sequence

import numpy as np

from .data import INTERVENTION_COLUMN, Dataset
from .errors import ArgumentError, PreconditionError, ResourceLimitError
from .estimators import BinnedModel, EstimatorSpec, FittedModel, fit
from .graph import (CausalGraph, backdoor_paths, d_separated, do_surgery, has_directed_path,
                    is_blocked, lemma1_applies, lemma2_applies)
from .scm import Scm, intervene_stochastic, marginal_sampler, sample
from .seeding import DEFAULT_SEED, derive_int, derive_rng

MAX_FEATURES = 12


@dataclass(frozen=True)
class ContextWeight:
    size: int
    n_features: int
    exact: Fraction

    @property
    def value(self) -> float:
        return float(self.exact)


def shapley_weight(subset_size: int, n_features: int) -> ContextWeight:
    """|S|! (|F| - |S| - 1)! / |F|! as an exact fraction."""
    if n_features < 1 or not 0 <= subset_size <= n_features - 1:
        raise ArgumentError(f"subset size {subset_size} out of range for {n_features} features")
    w = Fraction(math.factorial(subset_size) * math.factorial(n_features - subset_size - 1),
                 math.factorial(n_features))
    return ContextWeight(subset_size, n_features, w)


class Mode(Enum):
    OBSERVATIONAL = "observational"
    INTERVENTIONAL = "interventional"
    SHORTCUT_LEMMA1 = "shortcut-irrelevant-context"
    SHORTCUT_LEMMA2 = "shortcut-observation-equals-intervention"
    BACKDOOR = "backdoor-adjustment"


def context_label(s: Iterable[str]) -> str:
    return "{" + ",".join(sorted(s)) + "}"


@dataclass(frozen=True, eq=False)
class ImportancePair:
    feature: str
    context: frozenset[str]
    model_with: FittedModel
    model_without: FittedModel
    mode: Mode

    def __post_init__(self):
        object.__setattr__(self, "context", frozenset(self.context))
        if set(self.model_with.inputs) != set(self.model_without.inputs) | {self.feature}:
            raise ArgumentError("model_with must use the inputs of model_without plus the feature")

    def evaluate(self, d: Dataset) -> np.ndarray:
        return self.model_with.predict_dataset(d) - self.model_without.predict_dataset(d)

    def __call__(self, row: Mapping[str, float]) -> float:
        return self.model_with.predict(row) - self.model_without.predict(row)


def _subsets(items: Sequence[str]):
    for r in range(len(items) + 1):
        for c in itertools.combinations(items, r):
            yield frozenset(c)


def _check_pair_args(names, target, xj, s):
    if xj == target or target in s:
        raise ArgumentError("the target cannot be a feature or part of the context")
    if xj in s:
        raise ArgumentError(f"{xj!r} cannot be part of its own context")
    missing = (set(s) | {xj, target}) - set(names)
    if missing:
        from .errors import UnknownNodeError
        raise UnknownNodeError(missing)


class ObservationalFits:
    """E[Y | T] fits on one dataset, cached by input set."""

    def __init__(self, d: Dataset, target: str, spec: EstimatorSpec):
        self.d, self.target, self.spec = d, target, spec
        self._models: dict[frozenset, FittedModel] = {}

    def model(self, inputs: Iterable[str]) -> FittedModel:
        key = frozenset(inputs)
        if key not in self._models:
            self._models[key] = fit(self.spec, self.d, sorted(key), self.target)
        return self._models[key]

    def pair(self, xj: str, s: Iterable[str], mode: Mode = Mode.OBSERVATIONAL) -> ImportancePair:
        s = frozenset(s)
        _check_pair_args(self.d.names, self.target, xj, s)
        return ImportancePair(xj, s, self.model(s | {xj}), self.model(s), mode)


def importance_obs(d: Dataset, xj: str, s: Iterable[str], spec: EstimatorSpec, *,
                   target: str) -> ImportancePair:
    """Observational importance of ``xj`` in context ``s``, fitted on ``d``."""
    return ObservationalFits(d, target, spec).pair(xj, s)


class InterventionalFits:
    """Samples and fits of the model under do(S ~ q), cached per context S.

    One ancestral pool serves as the marginal of every context; each context
    gets its own derived stream for the fitting sample. The empty context is
    the unmodified model.
    """

    def __init__(self, m: Scm, spec: EstimatorSpec, n_fit: int, seed: int,
                 n_pool: int = 100_000, independent: bool = False):
        if n_fit < 1:
            raise ArgumentError("n_fit must be >= 1")
        self.m, self.spec, self.n_fit, self.seed = m, spec, n_fit, seed
        self.n_pool, self.independent = n_pool, independent
        self._pool: Dataset | None = None
        self._data: dict[frozenset, Dataset] = {}
        self._fits: dict[frozenset, ObservationalFits] = {}

    @property
    def target(self) -> str:
        return self.m.target

    def pool(self) -> Dataset:
        if self._pool is None:
            self._pool = sample(self.m, self.n_pool, derive_int(self.seed, "pool"))
        return self._pool

    def intervened_model(self, s: frozenset) -> Scm:
        q = marginal_sampler(self.m, s, independent=self.independent, pool=self.pool())
        return intervene_stochastic(self.m, s, q)

    def data(self, s: Iterable[str]) -> Dataset:
        s = frozenset(s)
        if s not in self._data:
            model = self.intervened_model(s) if s else self.m
            self._data[s] = sample(model, self.n_fit, derive_int(self.seed, "fit", s))
        return self._data[s]

    def fits(self, s: Iterable[str]) -> ObservationalFits:
        s = frozenset(s)
        if s not in self._fits:
            self._fits[s] = ObservationalFits(self.data(s), self.target, self.spec)
        return self._fits[s]

    def prefetch(self, contexts: Iterable[frozenset], n_jobs: int = 1) -> None:
        todo = sorted({frozenset(c) for c in contexts} - set(self._data), key=sorted)
        if any(todo):
            self.pool()
        if n_jobs > 1 and len(todo) > 1:
            with ThreadPoolExecutor(max_workers=n_jobs) as ex:
                list(ex.map(self.data, todo))
        else:
            for c in todo:
                self.data(c)

    def observational_pair(self, xj: str, s: Iterable[str],
                           mode: Mode = Mode.OBSERVATIONAL) -> ImportancePair:
        return self.fits(()).pair(xj, s, mode)

    def interventional_pair(self, xj: str, s: Iterable[str]) -> ImportancePair:
        s = frozenset(s)
        _check_pair_args(self.m.graph.nodes, self.target, xj, s)
        return self.fits(s).pair(xj, s, Mode.INTERVENTIONAL)

    def pair(self, xj: str, s: Iterable[str], shortcuts: bool = True,
             g: CausalGraph | None = None) -> ImportancePair:
        s = frozenset(s)
        g = g or self.m.graph
        if not s:
            return self.observational_pair(xj, s)
        if shortcuts:
            if lemma1_applies(g, xj, s):
                base = self.observational_pair(xj, ())
                return ImportancePair(xj, s, base.model_with, base.model_without,
                                      Mode.SHORTCUT_LEMMA1)
            if lemma2_applies(g, xj, s):
                return self.observational_pair(xj, s, Mode.SHORTCUT_LEMMA2)
        return self.interventional_pair(xj, s)


def importance_do(m: Scm, xj: str, s: Iterable[str], spec: EstimatorSpec, n_fit: int,
                  seed: int = DEFAULT_SEED, n_pool: int = 100_000,
                  independent: bool = False) -> ImportancePair:
    """Interventional importance: fit both terms on samples of do(S ~ marginal)."""
    return InterventionalFits(m, spec, n_fit, seed, n_pool, independent).interventional_pair(xj, s)


def importance_do_with_shortcuts(m: Scm, g: CausalGraph | None, xj: str, s: Iterable[str],
                                 spec: EstimatorSpec, n_fit: int, seed: int = DEFAULT_SEED,
                                 n_pool: int = 100_000,
                                 fits: InterventionalFits | None = None) -> ImportancePair:
    """Like importance_do, but uses the irrelevant-context identity first and the
    observation-equals-intervention identity second when the graph allows."""
    fits = fits or InterventionalFits(m, spec, n_fit, seed, n_pool)
    return fits.pair(xj, s, shortcuts=True, g=g or m.graph)


# Backdoor adjustment ---------------------------------------------------------

@dataclass(frozen=True, eq=False)
class AdjustedModel(FittedModel):
    """Averages an inner fit over adjustment values W.

    With ``feature`` set, W is drawn from the rows whose feature value falls
    in the same bin as the query; otherwise from all rows.
    """

    inner: FittedModel | None = None
    adjust: tuple[str, ...] = ()
    feature: str | None = None
    edges: np.ndarray | None = None  # bin edges of the feature; None = exact values
    pools: Mapping = field(default_factory=dict)
    global_pool: np.ndarray | None = None

    def _bin(self, x: np.ndarray) -> np.ndarray:
        if self.edges is None:
            return x
        k = np.searchsorted(self.edges, x, side="right") - 1
        return np.clip(k, 0, len(self.edges) - 2)

    def predict_matrix(self, X):
        X = np.asarray(X, dtype=float).reshape(len(X), len(self.inputs))
        out = np.empty(len(X))
        order = [self.inner.inputs.index(n) for n in self.inputs]
        w_cols = [self.inner.inputs.index(n) for n in self.adjust]
        if self.feature is None:
            groups = {None: np.arange(len(X))}
        else:
            b = self._bin(X[:, self.inputs.index(self.feature)])
            groups = {k: np.flatnonzero(b == k) for k in np.unique(b)}
        for key, rows in groups.items():
            if len(rows) == 0:
                continue
            pool = self.global_pool if key is None else self.pools.get(
                float(key) if self.edges is None else int(key), self.global_pool)
            P = len(pool)
            full = np.empty((len(rows) * P, len(self.inner.inputs)))
            full[:, order] = np.repeat(X[rows], P, axis=0)
            full[:, w_cols] = np.tile(pool, (len(rows), 1))
            out[rows] = self.inner.predict_matrix(full).reshape(len(rows), P).mean(axis=1)
        return out

    @property
    def n_params(self):
        return self.inner.n_params


def _check_backdoor_premises(g: CausalGraph, xj: str, s: frozenset, w: frozenset) -> None:
    if w & (s | {xj}):
        raise PreconditionError("adjustment set must be disjoint from the context and the feature")
    if g.target in w:
        raise PreconditionError("adjustment set cannot contain the target")
    if s and has_directed_path(g, s, w | {xj}):
        raise PreconditionError("context has a directed path into the adjustment set or the feature")
    for block in (w, w | {xj}):
        for p in backdoor_paths(g, s, {g.target}):
            if not is_blocked(g, p, block):
                raise PreconditionError(
                    f"backdoor path {p} is not blocked by {context_label(block)}")


def backdoor_importance(d: Dataset, g: CausalGraph, xj: str, s: Iterable[str],
                        w: Iterable[str], spec: EstimatorSpec, pool_size: int = 200,
                        seed: int = DEFAULT_SEED) -> ImportancePair:
    """Interventional importance from observational data by adjusting for ``w``.

    Premises are checked on ``g``; any violation raises PreconditionError.
    """
    s, w = frozenset(s), frozenset(w)
    _check_pair_args(g.nodes, g.target, xj, s)
    g.check_nodes(w)
    _check_backdoor_premises(g, xj, s, w)
    obs = ObservationalFits(d, g.target, spec)
    if not w:
        pair = obs.pair(xj, s)
        return ImportancePair(xj, s, pair.model_with, pair.model_without, Mode.BACKDOOR)
    adjust = tuple(sorted(w))
    rng = derive_rng(seed, "backdoor", xj, s, w)
    W = d.matrix(adjust)

    def subsample(idx):
        if len(idx) > pool_size:
            idx = np.sort(rng.choice(idx, pool_size, replace=False))
        return W[idx]

    x = d[xj]
    if spec.kind == "cpt":
        edges = None
        keys = x
    else:
        bins = spec.bins_for(len(s) + len(w) + 1) if spec.kind == "binned" else 32
        lo, hi = float(x.min()), float(x.max())
        edges = np.linspace(lo, hi if hi > lo else lo + 1.0, bins + 1)
        keys = np.clip(np.searchsorted(edges, x, side="right") - 1, 0, bins - 1)
    pools = {}
    for k in np.unique(keys):
        pools[float(k) if edges is None else int(k)] = subsample(np.flatnonzero(keys == k))
    global_pool = subsample(np.arange(d.n_rows))
    inner_with = obs.model(s | w | {xj})
    inner_without = obs.model(s | w)
    with_inputs = tuple(sorted(s | {xj}))
    common = dict(spec=spec, target=g.target, n_train=d.n_rows)
    model_with = AdjustedModel(inputs=with_inputs, fallback=inner_with.fallback, inner=inner_with,
                               adjust=adjust, feature=xj, edges=edges, pools=pools,
                               global_pool=global_pool, **common)
    model_without = AdjustedModel(inputs=tuple(sorted(s)), fallback=inner_without.fallback,
                                  inner=inner_without, adjust=adjust, global_pool=global_pool,
                                  **common)
    return ImportancePair(xj, s, model_with, model_without, Mode.BACKDOOR)


# Shapley values --------------------------------------------------------------

@dataclass(eq=False)
class AttributionResult:
    """Per-row attributions plus every term and weight that produced them."""

    method: str  # "shapley" or "cc-shapley"
    rows: Dataset
    features: tuple[str, ...]
    phi: dict[str, np.ndarray]
    terms: dict[tuple[str, frozenset], np.ndarray]
    weights: dict[tuple[str, frozenset], ContextWeight]
    pairs: dict[tuple[str, frozenset], ImportancePair]

    @property
    def plan(self) -> dict[tuple[str, frozenset], Mode]:
        return {k: p.mode for k, p in self.pairs.items()}

    def recomposed(self, feature: str) -> np.ndarray:
        total = np.zeros(self.rows.n_rows)
        for (f, s), term in self.terms.items():
            if f == feature:
                total = total + self.weights[(f, s)].value * term
        return total

    def recomposition_error(self) -> float:
        errs = [np.max(np.abs(self.phi[f] - self.recomposed(f)), initial=0.0)
                for f in self.features]
        return float(max(errs, default=0.0))

    def contexts_of(self, feature: str) -> list[frozenset]:
        return [s for (f, s) in self.terms if f == feature]

    def plan_text(self) -> str:
        lines = []
        for (f, s), p in self.pairs.items():
            w = self.weights[(f, s)]
            lines.append(f"{f}\t{context_label(s)}\t{w.exact}\t{p.mode.value}")
        return "feature\tcontext\tweight\tmode\n" + "\n".join(lines) + ("\n" if lines else "")

    def attributions_csv(self, path: str | os.PathLike | None = None) -> str:
        buf = io.StringIO()
        out = csv.writer(buf, lineterminator="\n")
        out.writerow(["row_id", "feature", "mode", "phi", "feature_value"])
        for i in range(self.rows.n_rows):
            for f in self.features:
                out.writerow([i, f, self.method, repr(float(self.phi[f][i])),
                              repr(float(self.rows[f][i]))])
        return _write(buf.getvalue(), path)

    def contexts_csv(self, path: str | os.PathLike | None = None,
                     max_rows: int | None = None) -> str:
        """Long format: one line per (row, feature, context)."""
        buf = io.StringIO()
        out = csv.writer(buf, lineterminator="\n")
        out.writerow(["row_id", "feature", "context", "mode", "weight", "importance"])
        n = self.rows.n_rows if max_rows is None else min(max_rows, self.rows.n_rows)
        keys = list(self.terms)
        for i in range(n):
            for key in keys:
                f, s = key
                out.writerow([i, f, context_label(s), self.pairs[key].mode.value,
                              str(self.weights[key].exact), repr(float(self.terms[key][i]))])
        return _write(buf.getvalue(), path)


def _write(text: str, path) -> str:
    if path is not None:
        with open(path, "w", newline="") as fh:
            fh.write(text)
    return text


def _features(names: Iterable[str], target: str, features) -> tuple[str, ...]:
    if features is None:
        features = [n for n in names if n not in (target, INTERVENTION_COLUMN)]
    features = tuple(features)
    if target in features:
        raise ArgumentError("the target cannot be a feature")
    if not features:
        raise ArgumentError("no features to attribute")
    return features


def _assemble(method, rows, features, pair_for, max_features) -> AttributionResult:
    if len(features) > max_features:
        raise ResourceLimitError(
            f"{len(features)} features exceed the cap of {max_features} "
            f"(2^{len(features) - 1} contexts per feature)")
    n = len(features)
    preds: dict[int, np.ndarray] = {}

    def predict(model):
        if id(model) not in preds:
            preds[id(model)] = model.predict_dataset(rows)
        return preds[id(model)]

    phi, terms, weights, pairs = {}, {}, {}, {}
    for f in features:
        # terms built from the same two models are merged with their exact
        # weights first, so shortcut identities hold without rounding
        merged: dict[tuple[int, int], list] = {}
        others = [x for x in features if x != f]
        for s in _subsets(others):
            key = (f, s)
            pair = pair_for(f, s)
            term = predict(pair.model_with) - predict(pair.model_without)
            w = shapley_weight(len(s), n)
            pairs[key], terms[key], weights[key] = pair, term, w
            slot = merged.setdefault((id(pair.model_with), id(pair.model_without)),
                                     [Fraction(0), term])
            slot[0] += w.exact
        total = np.zeros(rows.n_rows)
        for w, term in merged.values():
            total = total + float(w) * term
        phi[f] = total
    return AttributionResult(method, rows, features, phi, terms, weights, pairs)


def shapley_values(d: Dataset, eval_rows: Dataset, spec: EstimatorSpec, *, target: str,
                   features: Sequence[str] | None = None,
                   max_features: int = MAX_FEATURES) -> AttributionResult:
    """Observational Shapley values; E[Y|S] fits are shared across features."""
    features = _features(d.names, target, features)
    eval_rows.require(features)
    obs = ObservationalFits(d, target, spec)
    return _assemble("shapley", eval_rows, features, obs.pair, max_features)


def cc_shapley_values(m: Scm, eval_rows: Dataset, spec: EstimatorSpec, n_fit: int,
                      seed: int = DEFAULT_SEED, *, features: Sequence[str] | None = None,
                      shortcuts: bool = True, n_pool: int = 100_000, independent: bool = False,
                      n_jobs: int = 1, max_features: int = MAX_FEATURES,
                      fits: InterventionalFits | None = None) -> AttributionResult:
    """Causal-context Shapley values from an SCM.

    Each context's intervened model is sampled once and shared across the
    features that use it.
    """
    features = _features(m.graph.nodes, m.target, features)
    eval_rows.require(features)
    if len(features) > max_features:
        raise ResourceLimitError(f"{len(features)} features exceed the cap of {max_features}")
    fits = fits or InterventionalFits(m, spec, n_fit, seed, n_pool, independent)
    g = m.graph
    needed = [frozenset()]
    for f in features:
        for s in _subsets([x for x in features if x != f]):
            if s and not (shortcuts and (lemma1_applies(g, f, s) or lemma2_applies(g, f, s))):
                needed.append(s)
    fits.prefetch(needed, n_jobs)
    return _assemble("cc-shapley", eval_rows, features,
                     lambda f, s: fits.pair(f, s, shortcuts, g), max_features)


# SAP check -----------------------------------------------------------------------

@dataclass(frozen=True)
class SapEntry:
    feature: str
    mean_abs_phi: float
    structural: bool  # still separated from the target under every intervened context
    passed: bool


@dataclass(frozen=True)
class SapReport:
    tolerance: float
    entries: tuple[SapEntry, ...]

    @property
    def passed(self) -> bool:
        return all(e.passed for e in self.entries)

    @property
    def violations(self) -> tuple[SapEntry, ...]:
        return tuple(e for e in self.entries if not e.passed)

    def __str__(self):
        if not self.entries:
            return "no feature is d-separated from the target"
        return "\n".join(
            f"{e.feature}: mean|phi_cc| = {e.mean_abs_phi:.4g} "
            f"(tol {self.tolerance}) {'PASS' if e.passed else 'FAIL'}" for e in self.entries)


def sap_check(result: AttributionResult, g: CausalGraph, tolerance: float = 0.02) -> SapReport:
    """Features separated from the target must get (near) zero cc-Shapley value."""
    if result.method != "cc-shapley":
        raise ArgumentError("sap_check expects a cc-shapley result")
    entries = []
    for f in result.features:
        if not d_separated(g, {f}, {g.target}, ()):
            continue
        others = [x for x in result.features if x != f]
        structural = all(d_separated(do_surgery(g, s), {f}, {g.target}, ())
                         for s in _subsets(others))
        mean_abs = float(np.mean(np.abs(result.phi[f]))) if result.rows.n_rows else 0.0
        entries.append(SapEntry(f, mean_abs, structural, structural and mean_abs <= tolerance))
    return SapReport(tolerance, tuple(entries))
