"""YAML declaration of an SCM.

    target: Y
    nodes:
      - name: C
        mechanism: exogenous normal(60, 25)
      - name: G
        parents: [C, Y]
        mechanism: 85 + 0.4 * C + 40 * Y + U
        noise: normal(0, 10)
      - name: Y
        mechanism: bernoulli(0.15)

``normal(mean, variance)``; ``normal_sd(mean, sd)`` is accepted as well.
"""
from __future__ import annotations

import os

import yaml

from . import expr as ex
from .errors import ExpressionError, IngestError
from .graph import CausalGraph
from .scm import (Constant, Deterministic, Exogenous, Linear, Mechanism, NoiseSpec, Scm,
                  StochasticBernoulli)


def _mechanism(entry: dict) -> Mechanism:
    name = entry["name"]
    text = entry.get("mechanism")
    if not isinstance(text, (str, int, float)):
        raise IngestError(f"node {name!r}: missing mechanism")
    text = str(text).strip()
    noise = entry.get("noise")
    noise = NoiseSpec.parse(str(noise)) if noise is not None else None
    if text.startswith("exogenous"):
        spec = text[len("exogenous"):].strip() or (str(entry.get("noise") or ""))
        if not spec:
            raise IngestError(f"node {name!r}: exogenous mechanism needs a distribution")
        return Exogenous(NoiseSpec.parse(spec))
    if text.startswith("bernoulli("):
        fn, args = ex.parse_call(text)
        if len(args) != 1:
            raise ExpressionError(f"node {name!r}: bernoulli takes one argument")
        return StochasticBernoulli.parse(args[0])
    return Deterministic.parse(text, noise)


def parse_scm(text: str, source: str = "<string>") -> Scm:
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise IngestError(f"{source}: invalid YAML: {exc}") from None
    if not isinstance(doc, dict) or "nodes" not in doc or "target" not in doc:
        raise IngestError(f"{source}: expected a mapping with 'target' and 'nodes'")
    entries = doc["nodes"]
    if not isinstance(entries, list) or not entries:
        raise IngestError(f"{source}: 'nodes' must be a non-empty list")
    names, edges, mech = [], set(), {}
    for entry in entries:
        if not isinstance(entry, dict) or "name" not in entry:
            raise IngestError(f"{source}: every node needs a name")
        name = str(entry["name"])
        if name in mech:
            raise IngestError(f"{source}: duplicate node {name!r}")
        parents = entry.get("parents") or []
        if isinstance(parents, str):
            parents = [p.strip() for p in parents.split(",") if p.strip()]
        names.append(name)
        edges.update((str(p), name) for p in parents)
        mech[name] = _mechanism(entry)
    g = CausalGraph(tuple(names), frozenset(edges), str(doc["target"]))
    return Scm(g, mech)


def load_scm(path: str | os.PathLike) -> Scm:
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise IngestError(f"cannot read {path}: {exc.strerror}") from None
    return parse_scm(text, str(path))


def _mechanism_entry(m: Mechanism) -> dict:
    if isinstance(m, Exogenous):
        return {"mechanism": f"exogenous {m.noise}"}
    if isinstance(m, StochasticBernoulli):
        return {"mechanism": f"bernoulli({m.source or ex.to_string(m.probability)})"}
    if isinstance(m, Deterministic):
        out = {"mechanism": m.source or ex.to_string(m.expression)}
        if m.noise is not None:
            out["noise"] = str(m.noise)
        return out
    if isinstance(m, Linear):
        terms = [f"{w!r} * {p}" for p, w in m.weights.items()] + ["U"]
        return {"mechanism": " + ".join(terms), "noise": str(m.noise)}
    if isinstance(m, Constant):
        return {"mechanism": repr(m.value)}
    raise IngestError(f"{type(m).__name__} mechanisms have no file representation")


def dump_scm(m: Scm) -> str:
    nodes = []
    for n in m.topological_order():
        entry = {"name": n}
        pa = list(m.graph.parents(n))
        if pa:
            entry["parents"] = pa
        entry.update(_mechanism_entry(m.mechanisms[n]))
        nodes.append(entry)
    return yaml.safe_dump({"target": m.target, "nodes": nodes}, sort_keys=False)
