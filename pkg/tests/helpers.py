"""Shared fixtures: random DAGs and brute-force oracles."""
import itertools

import numpy as np
from hypothesis import strategies as st

from causalshap.graph import CausalGraph, enumerate_paths, is_blocked


def names(n):
    return [f"V{i}" for i in range(n)]


def dag_from_mask(n, mask, perm, target_index=0):
    nodes = names(n)
    edges = set()
    k = 0
    for i in range(n):
        for j in range(i + 1, n):
            if mask[k]:
                edges.add((nodes[perm[i]], nodes[perm[j]]))
            k += 1
    return CausalGraph(tuple(nodes), frozenset(edges), nodes[target_index])


@st.composite
def dags(draw, min_nodes=2, max_nodes=7):
    n = draw(st.integers(min_nodes, max_nodes))
    mask = draw(st.lists(st.booleans(), min_size=n * (n - 1) // 2, max_size=n * (n - 1) // 2))
    perm = draw(st.permutations(range(n)))
    return dag_from_mask(n, mask, perm)


def random_dag(rng, max_nodes=7, p=None):
    n = int(rng.integers(2, max_nodes + 1))
    prob = rng.uniform(0.1, 0.7) if p is None else p
    mask = rng.random(n * (n - 1) // 2) < prob
    return dag_from_mask(n, mask, rng.permutation(n))


def reachability(g):
    """Transitive closure by repeated squaring of the adjacency relation."""
    idx = {v: i for i, v in enumerate(g.nodes)}
    n = len(g.nodes)
    R = np.zeros((n, n), dtype=bool)
    for a, b in g.edges:
        R[idx[a], idx[b]] = True
    for _ in range(n):
        R = R | ((R.astype(int) @ R.astype(int)) > 0)
    return R, idx


def dsep_oracle(g, s1, s2, z):
    for a in s1:
        for b in s2:
            for p in enumerate_paths(g, a, b):
                if not is_blocked(g, p, z):
                    return False
    return True


def disjoint_triples(g, rng):
    """Random disjoint (s1, s2, z) with non-empty s1, s2."""
    nodes = list(g.nodes)
    rng.shuffle(nodes)
    labels = rng.integers(0, 4, len(nodes))  # 0: s1, 1: s2, 2: z, 3: none
    labels[0], labels[1] = 0, 1
    pick = lambda k: {v for v, l in zip(nodes, labels) if l == k}
    return pick(0), pick(1), pick(2)


# Exactly enumerable discrete problems -----------------------------------------------

@st.composite
def enumerable_problems(draw, max_features=3):
    """Joint law over binary features and a target, as (features, outcomes).

    ``outcomes`` lists (x tuple, y, probability) with Fraction probabilities.
    Every feature configuration has positive mass; y takes up to two values
    per configuration, so the target may be stochastic given the features.
    """
    from fractions import Fraction
    k = draw(st.integers(1, max_features))
    feats = [f"X{i + 1}" for i in range(k)]
    raw = []
    for x in itertools.product((0, 1), repeat=k):
        mass = draw(st.integers(1, 6))
        split = draw(st.integers(0, mass))
        y0, y1 = draw(st.integers(-4, 4)), draw(st.integers(-4, 4))
        raw.append((x, Fraction(y0, 2), split))
        raw.append((x, Fraction(y1, 2), mass - split))
    total = sum(m for _, _, m in raw)
    outcomes = [(x, y, Fraction(m, total)) for x, y, m in raw if m > 0]
    return feats, outcomes


def oracle_conditional_mean(outcomes, idx, x):
    num = sum(p * y for xs, y, p in outcomes if all(xs[i] == x[i] for i in idx))
    den = sum(p for xs, _, p in outcomes if all(xs[i] == x[i] for i in idx))
    return num / den


def oracle_shapley(feats, outcomes, x):
    """phi_j(x) averaged over all feature orderings, in exact arithmetic."""
    from fractions import Fraction
    k = len(feats)
    perms = list(itertools.permutations(range(k)))
    phi = [Fraction(0)] * k
    for order in perms:
        before = []
        for j in order:
            phi[j] += (oracle_conditional_mean(outcomes, before + [j], x)
                       - oracle_conditional_mean(outcomes, before, x))
            before.append(j)
    return {f: v / len(perms) for f, v in zip(feats, phi)}


def weighted_dataset(feats, outcomes):
    from causalshap.data import Dataset
    cols = {f: np.array([float(xs[i]) for xs, _, _ in outcomes]) for i, f in enumerate(feats)}
    cols["Y"] = np.array([float(y) for _, y, _ in outcomes])
    return Dataset(cols, weights=np.array([float(p) for _, _, p in outcomes]))


def configuration_rows(feats):
    from causalshap.data import Dataset
    xs = list(itertools.product((0.0, 1.0), repeat=len(feats)))
    return xs, Dataset({f: np.array([x[i] for x in xs]) for i, f in enumerate(feats)})
