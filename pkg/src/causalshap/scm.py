"""Structural causal models: mechanisms, ancestral sampling, interventions,
random linear models and fitting mechanisms from data."""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Iterable, Mapping, Protocol, Sequence

import numpy as np

from . import expr as ex
from .data import Dataset
from .errors import (ArgumentError, DomainError, ExpressionError, FitError, SamplingError,
                     UnknownNodeError)
from .estimators import CptModel, EstimatorSpec, FittedModel, fit
from .graph import CausalGraph, WeightedGraph, do_surgery
from .seeding import derive_rng

# rows per independently seeded block; results do not depend on how blocks
# are scheduled
CHUNK = 1 << 16


@dataclass(frozen=True)
class NoiseSpec:
    """Exogenous distribution. Normal takes (mean, variance)."""

    kind: str
    params: tuple[float, ...]

    def __post_init__(self):
        p = tuple(float(v) for v in self.params)
        object.__setattr__(self, "params", p)
        k = self.kind
        if k == "normal":
            if len(p) != 2 or p[1] < 0:
                raise ArgumentError("normal(mean, variance) needs variance >= 0")
        elif k == "laplace":
            if len(p) != 2 or p[1] <= 0:
                raise ArgumentError("laplace(location, scale) needs scale > 0")
        elif k == "bernoulli":
            if len(p) != 1 or not 0 <= p[0] <= 1:
                raise ArgumentError("bernoulli(p) needs p in [0, 1]")
        elif k == "uniform":
            if len(p) != 2 or p[1] < p[0]:
                raise ArgumentError("uniform(lo, hi) needs lo <= hi")
        elif k == "categorical":
            if not p or min(p) < 0 or abs(sum(p) - 1) > 1e-9:
                raise ArgumentError("categorical probabilities must be >= 0 and sum to 1")
        else:
            raise ArgumentError(f"unknown noise kind {k!r}")

    @classmethod
    def normal(cls, mean: float, variance: float) -> "NoiseSpec":
        return cls("normal", (mean, variance))

    @classmethod
    def laplace(cls, location: float, scale: float) -> "NoiseSpec":
        return cls("laplace", (location, scale))

    @classmethod
    def bernoulli(cls, p: float) -> "NoiseSpec":
        return cls("bernoulli", (p,))

    @classmethod
    def uniform(cls, lo: float, hi: float) -> "NoiseSpec":
        return cls("uniform", (lo, hi))

    @classmethod
    def categorical(cls, probs: Sequence[float]) -> "NoiseSpec":
        return cls("categorical", tuple(probs))

    @classmethod
    def parse(cls, text: str) -> "NoiseSpec":
        name, args = ex.parse_call(text)
        values = []
        for a in args:
            e = ex.parse(a)
            if ex.names(e):
                raise ExpressionError(f"noise parameters must be constants: {text!r}")
            values.append(float(ex.evaluate(e, {}, 1)[0]))
        name = name.lower()
        if name == "normal_sd":
            if len(values) != 2:
                raise ArgumentError("normal_sd(mean, sd) takes two arguments")
            return cls.normal(values[0], values[1] ** 2)
        return cls(name, tuple(values))

    def draw(self, rng: np.random.Generator, n: int) -> np.ndarray:
        p = self.params
        if self.kind == "normal":
            return rng.normal(p[0], math.sqrt(p[1]), n)
        if self.kind == "laplace":
            return rng.laplace(p[0], p[1], n)
        if self.kind == "bernoulli":
            return (rng.random(n) < p[0]).astype(float)
        if self.kind == "uniform":
            return rng.uniform(p[0], p[1], n)
        u = rng.random(n)
        return np.searchsorted(np.cumsum(p)[:-1], u, side="right").astype(float)

    def __str__(self):
        return f"{self.kind}({', '.join(repr(v) for v in self.params)})"


# Mechanisms ---------------------------------------------------------------

class Mechanism:
    """Assignment function of one node."""

    @property
    def parents(self) -> frozenset[str]:
        return frozenset()

    def sample(self, env: Mapping[str, np.ndarray], rng: np.random.Generator, n: int,
               noise_out: dict | None = None) -> np.ndarray:
        raise NotImplementedError

    def describe(self) -> str:
        return type(self).__name__


@dataclass(frozen=True)
class Deterministic(Mechanism):
    expression: ex.Expr
    noise: NoiseSpec | None = None
    source: str = ""

    def __post_init__(self):
        if ex.NOISE in ex.names(self.expression) and self.noise is None:
            raise ExpressionError("expression references U but no noise is declared")

    @classmethod
    def parse(cls, text: str, noise: NoiseSpec | None = None) -> "Deterministic":
        return cls(ex.parse(text), noise, text)

    @property
    def parents(self):
        return frozenset(ex.names(self.expression) - {ex.NOISE})

    def sample(self, env, rng, n, noise_out=None):
        local = dict(env)
        if self.noise is not None:
            u = self.noise.draw(rng, n)
            local[ex.NOISE] = u
            if noise_out is not None:
                noise_out["U"] = u
        return np.array(ex.evaluate(self.expression, local, n), dtype=float)

    def describe(self):
        text = self.source or ex.to_string(self.expression)
        return text + (f"; U ~ {self.noise}" if self.noise else "")


@dataclass(frozen=True)
class Constant(Mechanism):
    value: float

    def sample(self, env, rng, n, noise_out=None):
        return np.full(n, float(self.value))

    def describe(self):
        return f"do({self.value!r})"


@dataclass(frozen=True)
class StochasticBernoulli(Mechanism):
    probability: ex.Expr
    source: str = ""

    @classmethod
    def parse(cls, text: str) -> "StochasticBernoulli":
        return cls(ex.parse(text), text)

    @property
    def parents(self):
        names = ex.names(self.probability)
        if ex.NOISE in names:
            raise ExpressionError("bernoulli probability cannot reference U")
        return frozenset(names)

    def sample(self, env, rng, n, noise_out=None):
        p = ex.evaluate(self.probability, env, n)
        bad = (p < 0) | (p > 1)
        if bad.any():
            row = int(np.flatnonzero(bad)[0])
            raise DomainError(f"probability {p[row]!r} outside [0, 1]", row)
        u = rng.random(n)
        if noise_out is not None:
            noise_out["U"] = u
        return (u < p).astype(float)

    def describe(self):
        return f"bernoulli({self.source or ex.to_string(self.probability)})"


@dataclass(frozen=True)
class StochasticCategorical(Mechanism):
    model: CptModel

    @property
    def parents(self):
        return frozenset(self.model.inputs)

    def sample(self, env, rng, n, noise_out=None):
        X = np.column_stack([np.broadcast_to(env[p], (n,)) for p in self.model.inputs]) \
            if self.model.inputs else np.empty((n, 0))
        probs = self.model.predict_proba_matrix(X)
        u = rng.random(n)
        idx = (np.cumsum(probs, axis=1)[:, :-1] < u[:, None]).sum(axis=1)
        return np.asarray(self.model.levels)[idx]

    def describe(self):
        return f"categorical table over ({', '.join(self.model.inputs)}), {len(self.model.table)} configurations"


@dataclass(frozen=True)
class Exogenous(Mechanism):
    noise: NoiseSpec

    def sample(self, env, rng, n, noise_out=None):
        u = self.noise.draw(rng, n)
        if noise_out is not None:
            noise_out["U"] = u
        return u

    def describe(self):
        return f"exogenous {self.noise}"


@dataclass(frozen=True)
class Linear(Mechanism):
    """Weighted sum of parents plus additive noise."""

    weights: Mapping[str, float]
    noise: NoiseSpec

    def __post_init__(self):
        object.__setattr__(self, "weights", dict(sorted(dict(self.weights).items())))

    @property
    def parents(self):
        return frozenset(self.weights)

    def sample(self, env, rng, n, noise_out=None):
        u = self.noise.draw(rng, n)
        if noise_out is not None:
            noise_out["U"] = u
        out = u.copy()
        for p, w in self.weights.items():
            out += w * env[p]
        return out

    def describe(self):
        terms = " + ".join(f"{w!r}*{p}" for p, w in self.weights.items())
        return (terms + " + " if terms else "") + f"U; U ~ {self.noise}"


@dataclass(frozen=True, eq=False)
class Regression(Mechanism):
    """Fitted conditional mean plus a resampled empirical residual."""

    model: FittedModel
    residuals: np.ndarray

    @property
    def parents(self):
        return frozenset(self.model.inputs)

    def sample(self, env, rng, n, noise_out=None):
        X = np.column_stack([np.broadcast_to(env[p], (n,)) for p in self.model.inputs])
        u = self.residuals[rng.integers(len(self.residuals), size=n)]
        if noise_out is not None:
            noise_out["U"] = u
        return self.model.predict_matrix(X) + u

    def describe(self):
        return f"fitted {self.model.spec} on ({', '.join(self.model.inputs)}) + empirical residual"


@dataclass(frozen=True, eq=False)
class Empirical(Mechanism):
    values: np.ndarray

    def sample(self, env, rng, n, noise_out=None):
        return self.values[rng.integers(len(self.values), size=n)]

    def describe(self):
        return f"empirical marginal ({len(self.values)} values)"


@dataclass(frozen=True)
class JointDraw(Mechanism):
    """Placeholder for a node set jointly by a stochastic intervention."""

    group: int

    def sample(self, env, rng, n, noise_out=None):
        raise AssertionError("joint draws are resolved by the model")

    def describe(self):
        return f"do(~ q) group {self.group}"


# Samplers -----------------------------------------------------------------

class Sampler(Protocol):
    nodes: tuple[str, ...]

    def draw(self, rng: np.random.Generator, n: int) -> dict[str, np.ndarray]:
        ...


@dataclass(frozen=True, eq=False)
class EmpiricalSampler:
    """Resamples rows (or, if ``independent``, each column separately) from a pool."""

    pool: Mapping[str, np.ndarray]
    independent: bool = False

    @property
    def nodes(self) -> tuple[str, ...]:
        return tuple(sorted(self.pool))

    def draw(self, rng, n):
        size = len(next(iter(self.pool.values())))
        if self.independent:
            return {k: self.pool[k][rng.integers(size, size=n)] for k in self.nodes}
        idx = rng.integers(size, size=n)
        return {k: self.pool[k][idx] for k in self.nodes}


# Model ----------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class Scm:
    graph: CausalGraph
    mechanisms: Mapping[str, Mechanism]
    groups: tuple[tuple[tuple[str, ...], Sampler], ...] = ()

    def __post_init__(self):
        mech = dict(self.mechanisms)
        missing = set(self.graph.nodes) - set(mech)
        if missing:
            raise ArgumentError(f"missing mechanisms for: {', '.join(sorted(missing))}")
        extra = set(mech) - set(self.graph.nodes)
        if extra:
            raise UnknownNodeError(extra)
        for node, m in mech.items():
            undeclared = m.parents - set(self.graph.parents(node))
            if undeclared:
                raise ExpressionError(
                    f"mechanism of {node!r} references non-parents: {', '.join(sorted(undeclared))}")
        object.__setattr__(self, "mechanisms", mech)
        object.__setattr__(self, "groups", tuple(self.groups))

    @property
    def target(self) -> str:
        return self.graph.target

    @property
    def features(self) -> tuple[str, ...]:
        return self.graph.features

    def topological_order(self) -> list[str]:
        return self.graph.topological_order()

    def describe(self) -> str:
        lines = [f"target: {self.target}"]
        for n in self.topological_order():
            pa = ", ".join(self.graph.parents(n))
            lines.append(f"{n} <- [{pa}]: {self.mechanisms[n].describe()}")
        return "\n".join(lines) + "\n"


def topological_order(m: Scm) -> list[str]:
    return m.topological_order()


def _sample_block(m: Scm, order: list[str], n: int, seed: int, block: int,
                  start: int, keep_noise: bool):
    values: dict[str, np.ndarray] = {}
    noise: dict[str, np.ndarray] = {}
    for gi, (nodes, sampler) in enumerate(m.groups):
        drawn = sampler.draw(derive_rng(seed, "group", gi, nodes, block), n)
        for k in nodes:
            values[k] = np.asarray(drawn[k], dtype=float)
    for node in order:
        mech = m.mechanisms[node]
        if isinstance(mech, JointDraw):
            continue
        rng = derive_rng(seed, "node", node, block)
        captured = {} if keep_noise else None
        try:
            values[node] = np.asarray(mech.sample(values, rng, n, captured), dtype=float)
        except DomainError as exc:
            raise SamplingError(node, start + (exc.row or 0), str(exc)) from None
        if keep_noise and captured:
            noise[node] = captured["U"]
    return values, noise


def sample(m: Scm, n: int, seed: int, keep_noise: bool = False, n_jobs: int = 1) -> Dataset:
    """``n`` i.i.d. draws by ancestral sampling; identical for any ``n_jobs``."""
    if n < 0:
        raise ArgumentError("n must be >= 0")
    order = m.topological_order()
    starts = list(range(0, n, CHUNK))
    jobs = [(min(CHUNK, n - s), b, s) for b, s in enumerate(starts)]

    def run(job):
        size, block, start = job
        return _sample_block(m, order, size, seed, block, start, keep_noise)

    if n_jobs > 1 and len(jobs) > 1:
        with ThreadPoolExecutor(max_workers=n_jobs) as pool:
            parts = list(pool.map(run, jobs))
    else:
        parts = [run(j) for j in jobs]
    names = list(m.graph.nodes)
    if parts:
        cols = {k: np.concatenate([p[0][k] for p in parts]) for k in names}
        noise_names = [k for k in names if k in parts[0][1]]
        noise = {k: np.concatenate([p[1][k] for p in parts]) for k in noise_names}
    else:
        cols = {k: np.empty(0) for k in names}
        noise = {}
    return Dataset(cols, noise=noise if keep_noise else None)


def intervene_atomic(m: Scm, assignments: Mapping[str, float]) -> Scm:
    if not assignments:
        return m
    m.graph.check_nodes(assignments)
    if m.target in assignments:
        raise ArgumentError("cannot intervene on the target")
    mech = dict(m.mechanisms)
    for k, v in assignments.items():
        mech[k] = Constant(float(v))
    return _with_surgery(m, set(assignments), mech, m.groups)


def intervene_stochastic(m: Scm, s: Iterable[str], q: Sampler) -> Scm:
    s = frozenset(s)
    if not s:
        return m
    m.graph.check_nodes(s)
    if m.target in s:
        raise ArgumentError("cannot intervene on the target")
    if set(q.nodes) != set(s):
        raise ArgumentError(
            f"sampler generates {sorted(q.nodes)} but the intervention targets {sorted(s)}")
    groups = []
    for nodes, sampler in m.groups:
        if set(nodes) & s:
            raise ArgumentError("nodes are already set by an earlier stochastic intervention")
        groups.append((nodes, sampler))
    mech = dict(m.mechanisms)
    for k in s:
        mech[k] = JointDraw(len(groups))
    groups.append((tuple(sorted(s)), q))
    return _with_surgery(m, s, mech, tuple(groups))


def _with_surgery(m: Scm, s, mech, groups) -> Scm:
    return Scm(do_surgery(m.graph, s), mech, groups)


def marginal_sampler(m: Scm, s: Iterable[str], n_pool: int = 100_000, seed: int = 0,
                     independent: bool = False, pool: Dataset | None = None) -> EmpiricalSampler:
    """Sampler of the joint (or product-of-marginals) distribution of ``s`` in ``m``.

    ``pool`` reuses an existing ancestral sample of ``m`` instead of drawing
    ``n_pool`` fresh rows.
    """
    s = sorted(set(s))
    m.graph.check_nodes(s)
    if m.target in s:
        raise ArgumentError("context must consist of features")
    if pool is None:
        pool = sample(m, n_pool, seed)
    return EmpiricalSampler({k: pool[k] for k in s}, independent)


def random_linear_scm(n_vars: int, edge_prob: float, noise: NoiseSpec,
                      seed: int) -> tuple[Scm, WeightedGraph]:
    """Random linear model V = A V + U.

    A strictly upper-triangular Bernoulli pattern is permuted by a uniformly
    random permutation and filled with standard-normal weights. Node 0 is the
    target 'Y', node i >= 1 is 'X{i}'.
    """
    if n_vars < 2:
        raise ArgumentError("n_vars must be >= 2")
    if not 0 <= edge_prob <= 1:
        raise ArgumentError("edge_prob must lie in [0, 1]")
    A = random_adjacency(n_vars, edge_prob, seed)
    names = ["Y"] + [f"X{i}" for i in range(1, n_vars)]
    weights = {(names[j], names[i]): float(A[i, j])
               for i in range(n_vars) for j in range(n_vars) if A[i, j] != 0}
    g = CausalGraph(tuple(names), frozenset(weights), "Y")
    mech = {}
    for i, child in enumerate(names):
        mech[child] = Linear({p: w for (p, c), w in weights.items() if c == child}, noise)
    return Scm(g, mech), WeightedGraph(g, weights)


def random_adjacency(n: int, p: float, seed: int) -> np.ndarray:
    """A[i, j] != 0 means V_j -> V_i with that weight."""
    rng = derive_rng(seed, "adjacency")
    mask = rng.uniform(0.0, 1.0, (n, n)) < p
    mask &= np.triu(np.ones((n, n), dtype=bool), k=1)
    perm = rng.permutation(n)
    mask = mask[perm][:, perm]
    alpha = rng.normal(0.0, 1.0, (n, n))
    return np.where(mask, alpha, 0.0)


def linear_matrix(wg: WeightedGraph) -> tuple[list[str], np.ndarray]:
    names = list(wg.base.nodes)
    pos = {k: i for i, k in enumerate(names)}
    A = np.zeros((len(names), len(names)))
    for (a, b), w in wg.weights.items():
        A[pos[b], pos[a]] = w
    return names, A


def solve_linear(wg: WeightedGraph, noise: Mapping[str, np.ndarray]) -> dict[str, np.ndarray]:
    """V = (I - A)^{-1} U, solved for every noise row at once."""
    names, A = linear_matrix(wg)
    U = np.vstack([noise[k] for k in names])
    V = np.linalg.solve(np.eye(len(names)) - A, U)
    return {k: V[i] for i, k in enumerate(names)}


def _is_discrete(values: np.ndarray) -> bool:
    levels = np.unique(values)
    return len(levels) <= 16 and bool(np.all(levels == np.round(levels)))


def fit_scm_from_data(g: CausalGraph, d: Dataset, estimator_spec: EstimatorSpec | None = None,
                      discrete: Iterable[str] | None = None) -> Scm:
    """Fit one mechanism per node given the graph.

    Rows flagged as intervened on a node are excluded from that node's fit.
    Discrete nodes get categorical tables over their parents, continuous ones
    a fitted mean plus resampled residuals, roots their empirical marginal.
    """
    d.require(g.nodes)
    spec = estimator_spec or EstimatorSpec("linear")
    discrete = set(discrete) if discrete is not None else {n for n in g.nodes if _is_discrete(d[n])}
    mech: dict[str, Mechanism] = {}
    for node in g.topological_order():
        rows = d.usable_for(node)
        if not rows.any():
            raise FitError(f"node {node!r} has no usable (non-intervened) rows")
        parents = g.parents(node)
        if not parents:
            mech[node] = Empirical(np.array(d[node][rows]))
        elif node in discrete:
            model = fit(EstimatorSpec("cpt"), d, parents, node, rows)
            if model.levels is None:
                raise FitError(f"node {node!r} declared discrete but has non-integer values")
            mech[node] = StochasticCategorical(model)
        else:
            model = fit(spec, d, parents, node, rows)
            resid = d[node][rows] - model.predict_matrix(d.matrix(parents)[rows])
            mech[node] = Regression(model, np.array(resid))
    return Scm(g, mech)
