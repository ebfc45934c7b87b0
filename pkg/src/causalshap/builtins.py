"""Built-in models used by the experiments and the command line."""
from __future__ import annotations

import itertools
import math

import numpy as np

from .errors import ArgumentError
from .estimators import CptModel, EstimatorSpec
from .graph import CausalGraph, WeightedGraph
from .scm import (Deterministic, Exogenous, NoiseSpec, Scm, StochasticBernoulli,
                  StochasticCategorical, random_linear_scm)
from .seeding import derive_rng


def _normal(mean: float, second: float, semantics: str) -> NoiseSpec:
    if semantics == "variance":
        return NoiseSpec.normal(mean, second)
    if semantics == "sd":
        return NoiseSpec.normal(mean, second ** 2)
    raise ArgumentError("semantics must be 'variance' or 'sd'")


def breakfast(semantics: str = "variance") -> Scm:
    """C = breakfast carbohydrates, Y = diabetes, G = blood glucose (C -> G <- Y)."""
    g = CausalGraph(("C", "Y", "G"), frozenset({("C", "G"), ("Y", "G")}), "Y")
    return Scm(g, {
        "C": Exogenous(_normal(60, 25, semantics)),
        "Y": Exogenous(NoiseSpec.bernoulli(0.15)),
        "G": Deterministic.parse("85 + 0.4 * C + 40 * Y + U", _normal(0, 10, semantics)),
    })


# 105 + 2.5 ln((1 - p) / p) with p = 0.15
BREAKFAST_K = 105.0 + 2.5 * math.log(17.0 / 3.0)
BREAKFAST_K_ROUNDED = 109.0


def analytic_breakfast_posterior(g_val, c_val, rounded: bool = False):
    """P(Y = 1 | G, C) of the breakfast model (variance reading of its noise)."""
    k = BREAKFAST_K_ROUNDED if rounded else BREAKFAST_K
    z = 0.4 * (np.asarray(g_val, dtype=float) - 0.4 * np.asarray(c_val, dtype=float) - k)
    out = 1.0 / (1.0 + np.exp(-z))
    return float(out) if np.ndim(out) == 0 else out


def analytic_breakfast_importance(g_val, c_val, rounded: bool = False):
    """E[Y | G, C] - E[Y | C] in closed form."""
    return analytic_breakfast_posterior(g_val, c_val, rounded) - 0.15


def diabetes_risk(semantics: str = "variance") -> Scm:
    """B = BMI, Y = diabetes, H = average sugar, G = blood glucose."""
    edges = {("B", "Y"), ("B", "H"), ("B", "G"), ("Y", "H"), ("Y", "G"), ("H", "G")}
    g = CausalGraph(("B", "Y", "H", "G"), frozenset(edges), "Y")
    return Scm(g, {
        "B": Exogenous(_normal(25, 5, semantics)),
        "Y": StochasticBernoulli.parse("sigmoid(-2 + 0.1 * (B - 25))"),
        "H": Deterministic.parse("5 + 10 * Y + 0.01 * B ** 2 + U", _normal(0, 1, semantics)),
        "G": Deterministic.parse("90 + 20 * Y + 30 * sigmoid(-0.5 * (H - 5)) + B + U",
                                 _normal(0, 5, semantics)),
    })


def binary_product() -> Scm:
    """Y = X1 * X2 with independent fair coins."""
    g = CausalGraph(("X1", "X2", "Y"), frozenset({("X1", "Y"), ("X2", "Y")}), "Y")
    return Scm(g, {
        "X1": Exogenous(NoiseSpec.bernoulli(0.5)),
        "X2": Exogenous(NoiseSpec.bernoulli(0.5)),
        "Y": Deterministic.parse("X1 * X2"),
    })


def linear_sweep_instance(seed: int, n_vars: int = 9, edge_prob: float = 0.8,
                          noise: NoiseSpec | None = None) -> tuple[Scm, WeightedGraph]:
    return random_linear_scm(n_vars, edge_prob, noise or NoiseSpec.laplace(0.0, 0.1), seed)


SIGNALLING_EDGES = (
    ("PKC", "PKA"), ("PKC", "P38"), ("PKC", "Jnk"), ("PKC", "Raf"), ("PKC", "Mek"),
    ("PKA", "P38"), ("PKA", "Jnk"), ("PKA", "Raf"), ("PKA", "Mek"), ("PKA", "Erk"),
    ("PKA", "Akt"), ("Raf", "Mek"), ("Mek", "Erk"), ("Erk", "Akt"),
)
SIGNALLING_NODES = ("PKC", "PKA", "P38", "Jnk", "Raf", "Mek", "Erk", "Akt")


def signalling_graph(decoys: bool = False) -> CausalGraph:
    """Protein-signalling topology with PKA as target.

    With ``decoys``, adds ``Dsup -> Erk`` (joined to the target only through
    the collider Erk) and an isolated ``Diso``; both are d-separated from PKA.
    """
    nodes, edges = list(SIGNALLING_NODES), list(SIGNALLING_EDGES)
    if decoys:
        nodes += ["Dsup", "Diso"]
        edges.append(("Dsup", "Erk"))
    return CausalGraph(tuple(nodes), frozenset(edges), "PKA")


LEVELS = (0.0, 1.0, 2.0)


def _ordinal_probs(score: float, cut: np.ndarray) -> np.ndarray:
    # P(level = k) proportional to exp(k * score - cut_k)
    logits = np.arange(3) * score - cut
    p = np.exp(logits - logits.max())
    return p / p.sum()


def discrete_scm(g: CausalGraph, seed: int, strength: float = 1.2) -> Scm:
    """Three-level categorical model on ``g`` with random monotone tables.

    Each parent shifts the child's level up or down with a coefficient of
    magnitude ``strength`` times a uniform factor in [0.5, 1]; the sign is
    random.
    """
    rng = derive_rng(seed, "discrete-scm")
    spec = EstimatorSpec("cpt")
    mech = {}
    for node in g.topological_order():
        parents = g.parents(node)
        beta = rng.choice([-1.0, 1.0], len(parents)) * strength * rng.uniform(0.5, 1.0, len(parents))
        cut = np.concatenate([[0.0], rng.uniform(-0.5, 0.5, 2)])
        probs, table = {}, {}
        for config in itertools.product(LEVELS, repeat=len(parents)):
            score = float(np.dot(beta, np.asarray(config) - 1.0)) if parents else 0.0
            p = _ordinal_probs(score, cut)
            probs[tuple(config)] = p
            table[tuple(config)] = float(np.dot(p, LEVELS))
        marginal = np.mean(list(probs.values()), axis=0)
        model = CptModel(spec=spec, inputs=tuple(parents), target=node,
                         fallback=float(np.dot(marginal, LEVELS)), n_train=0, table=table,
                         counts={k: 0.0 for k in table}, levels=LEVELS, probs=probs,
                         marginal=marginal)
        mech[node] = StochasticCategorical(model)
    return Scm(g, mech)


BUILTINS = {
    "breakfast": breakfast,
    "diabetes-risk": diabetes_risk,
    "binary-product": binary_product,
    "linear-sweep-instance": lambda: linear_sweep_instance(0)[0],
    "signalling": lambda: discrete_scm(signalling_graph(), 0),
}


def builtin(name: str) -> Scm:
    try:
        return BUILTINS[name]()
    except KeyError:
        raise ArgumentError(f"unknown builtin {name!r}; choose from {', '.join(BUILTINS)}") from None
