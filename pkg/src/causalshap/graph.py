"""Directed acyclic graphs with a designated target and the structural queries
needed for attribution: paths, blocking, d-separation, backdoor paths, graph
surgery, path-context classification and the collider-impact heuristic.

All graph values are immutable; every query is a pure function.
"""
from __future__ import annotations

import heapq
import math
from collections import deque
from dataclasses import dataclass, field
from enum import Enum
from functools import cached_property
from typing import Callable, Iterable, Iterator, Mapping

from .errors import ArgumentError, CycleError, ResourceLimitError, UnknownNodeError

DEFAULT_MAX_PATHS = 10_000


@dataclass(frozen=True)
class CausalGraph:
    nodes: tuple[str, ...]
    edges: frozenset[tuple[str, str]]
    target: str

    def __post_init__(self):
        object.__setattr__(self, "nodes", tuple(self.nodes))
        object.__setattr__(self, "edges", frozenset((str(a), str(b)) for a, b in self.edges))
        if any(not isinstance(n, str) or not n for n in self.nodes):
            raise ArgumentError("node names must be non-empty strings")
        if len(set(self.nodes)) != len(self.nodes):
            raise ArgumentError("duplicate node names")
        known = set(self.nodes)
        unknown = {n for e in self.edges for n in e} - known
        if unknown:
            raise UnknownNodeError(unknown)
        if any(a == b for a, b in self.edges):
            raise CycleError([a for a, b in self.edges if a == b][:1] * 2)
        if self.target not in known:
            raise UnknownNodeError({self.target})
        self.topological_order()  # raises CycleError

    @classmethod
    def from_edges(cls, edges: Iterable[tuple[str, str]], target: str,
                   nodes: Iterable[str] | None = None) -> "CausalGraph":
        edges = list(edges)
        if nodes is None:
            seen: dict[str, None] = {}
            for a, b in edges:
                seen.setdefault(a)
                seen.setdefault(b)
            seen.setdefault(target)
            nodes = list(seen)
        return cls(tuple(nodes), frozenset(edges), target)

    @cached_property
    def _parents(self) -> dict[str, tuple[str, ...]]:
        pa: dict[str, list[str]] = {n: [] for n in self.nodes}
        for a, b in self.edges:
            pa[b].append(a)
        return {n: tuple(sorted(v)) for n, v in pa.items()}

    @cached_property
    def _children(self) -> dict[str, tuple[str, ...]]:
        ch: dict[str, list[str]] = {n: [] for n in self.nodes}
        for a, b in self.edges:
            ch[a].append(b)
        return {n: tuple(sorted(v)) for n, v in ch.items()}

    @cached_property
    def _neighbors(self) -> dict[str, tuple[str, ...]]:
        return {n: tuple(sorted(set(self._parents[n]) | set(self._children[n]))) for n in self.nodes}

    @property
    def features(self) -> tuple[str, ...]:
        return tuple(n for n in self.nodes if n != self.target)

    def parents(self, node: str) -> tuple[str, ...]:
        self.check_nodes([node])
        return self._parents[node]

    def children(self, node: str) -> tuple[str, ...]:
        self.check_nodes([node])
        return self._children[node]

    def neighbors(self, node: str) -> tuple[str, ...]:
        return self._neighbors[node]

    def has_edge(self, a: str, b: str) -> bool:
        return (a, b) in self.edges

    def check_nodes(self, names: Iterable[str]) -> None:
        unknown = set(names) - set(self.nodes)
        if unknown:
            raise UnknownNodeError(unknown)

    def topological_order(self) -> list[str]:
        """Kahn's algorithm with ties broken by node name."""
        indeg = {n: 0 for n in self.nodes}
        children: dict[str, list[str]] = {n: [] for n in self.nodes}
        for a, b in self.edges:
            indeg[b] += 1
            children[a].append(b)
        heap = [n for n, d in indeg.items() if d == 0]
        heapq.heapify(heap)
        order = []
        while heap:
            n = heapq.heappop(heap)
            order.append(n)
            for c in children[n]:
                indeg[c] -= 1
                if indeg[c] == 0:
                    heapq.heappush(heap, c)
        if len(order) != len(self.nodes):
            raise CycleError(_find_cycle(self.nodes, self.edges))
        return order

    def to_adjacency_text(self, weights: Mapping[tuple[str, str], float] | None = None) -> str:
        lines = []
        for a, b in sorted(self.edges):
            if weights is None:
                lines.append(f"{a} -> {b}")
            else:
                lines.append(f"{a} -> {b} {weights[(a, b)]!r}")
        return "\n".join(lines) + ("\n" if lines else "")

    def with_edges(self, edges: Iterable[tuple[str, str]]) -> "CausalGraph":
        return CausalGraph(self.nodes, frozenset(edges), self.target)


def _find_cycle(nodes, edges) -> list[str]:
    children: dict[str, list[str]] = {n: [] for n in nodes}
    for a, b in edges:
        children[a].append(b)
    color = {n: 0 for n in nodes}
    stack: list[str] = []

    def visit(n):
        color[n] = 1
        stack.append(n)
        for c in sorted(children[n]):
            if color[c] == 1:
                return stack[stack.index(c):] + [c]
            if color[c] == 0:
                found = visit(c)
                if found:
                    return found
        stack.pop()
        color[n] = 2
        return None

    for n in sorted(nodes):
        if color[n] == 0:
            found = visit(n)
            if found:
                return found
    return []


@dataclass(frozen=True)
class WeightedGraph:
    base: CausalGraph
    weights: Mapping[tuple[str, str], float]

    def __post_init__(self):
        w = {tuple(k): float(v) for k, v in dict(self.weights).items()}
        if set(w) != set(self.base.edges):
            raise ArgumentError("weights must be defined for exactly the edges of the graph")
        if not all(math.isfinite(v) for v in w.values()):
            raise ArgumentError("edge weights must be finite")
        object.__setattr__(self, "weights", w)

    def weight(self, a: str, b: str) -> float:
        return self.weights[(a, b)]

    def to_adjacency_text(self) -> str:
        return self.base.to_adjacency_text(self.weights)


@dataclass(frozen=True)
class Path:
    """A simple path; ``forward[i]`` is True for an edge nodes[i] -> nodes[i+1]."""

    nodes: tuple[str, ...]
    forward: tuple[bool, ...]

    def __post_init__(self):
        if len(self.forward) != len(self.nodes) - 1:
            raise ArgumentError("a path needs one direction flag per edge")

    @property
    def start(self) -> str:
        return self.nodes[0]

    @property
    def end(self) -> str:
        return self.nodes[-1]

    @property
    def interior(self) -> tuple[str, ...]:
        return self.nodes[1:-1]

    def edges(self) -> list[tuple[str, str]]:
        return [(a, b) if f else (b, a)
                for a, b, f in zip(self.nodes, self.nodes[1:], self.forward)]

    def role(self, i: int) -> str:
        """'collider', 'chain' or 'fork' for interior position ``i``."""
        if not 0 < i < len(self.nodes) - 1:
            raise ArgumentError("only interior nodes have a role on a path")
        into_from_left = self.forward[i - 1]
        into_from_right = not self.forward[i]
        if into_from_left and into_from_right:
            return "collider"
        if not into_from_left and not into_from_right:
            return "fork"
        return "chain"

    def colliders(self) -> list[str]:
        return [self.nodes[i] for i in range(1, len(self.nodes) - 1) if self.role(i) == "collider"]

    def is_directed(self) -> bool:
        return all(self.forward) or not any(self.forward)

    def __str__(self):
        out = [self.nodes[0]]
        for n, f in zip(self.nodes[1:], self.forward):
            out.append("->" if f else "<-")
            out.append(n)
        return " ".join(out)

    @classmethod
    def parse(cls, text: str) -> "Path":
        tokens = text.split()
        nodes = tuple(tokens[0::2])
        arrows = tokens[1::2]
        if any(a not in ("->", "<-") for a in arrows):
            raise ArgumentError(f"cannot parse path {text!r}")
        return cls(nodes, tuple(a == "->" for a in arrows))


def _as_set(g: CausalGraph, s: Iterable[str] | str | None) -> frozenset[str]:
    if s is None:
        return frozenset()
    if isinstance(s, str):
        s = [s]
    s = frozenset(s)
    g.check_nodes(s)
    return s


def ancestors(g: CausalGraph, s: Iterable[str]) -> set[str]:
    """Nodes with a directed path into some member of ``s`` (``s`` excluded)."""
    s = _as_set(g, s)
    seen: set[str] = set()
    queue = deque(s)
    while queue:
        n = queue.popleft()
        for p in g._parents[n]:
            if p not in seen:
                seen.add(p)
                queue.append(p)
    return seen - s


def descendants(g: CausalGraph, s: Iterable[str]) -> set[str]:
    s = _as_set(g, s)
    seen: set[str] = set()
    queue = deque(s)
    while queue:
        n = queue.popleft()
        for c in g._children[n]:
            if c not in seen:
                seen.add(c)
                queue.append(c)
    return seen - s


def has_directed_path(g: CausalGraph, src: Iterable[str], dst: Iterable[str],
                      avoid: Iterable[str] = ()) -> bool:
    """True if a directed path of length >= 1 leads from a node in ``src`` to
    one in ``dst`` whose interior avoids ``avoid``."""
    src, dst, avoid = _as_set(g, src), _as_set(g, dst), set(avoid)
    queue = deque(src)
    seen: set[str] = set()
    while queue:
        n = queue.popleft()
        for c in g._children[n]:
            if c in dst:
                return True
            if c in avoid or c in seen:
                continue
            seen.add(c)
            queue.append(c)
    return False


def _iter_paths(g: CausalGraph, a: str, b: str, avoid: frozenset[str] = frozenset(),
                prune: Callable[[list[str], list[bool]], bool] | None = None) -> Iterator[Path]:
    """Depth-first enumeration of simple paths from ``a`` to ``b`` in
    lexicographic neighbour order. ``prune(nodes, forward)`` may cut a prefix."""
    nodes = [a]
    forward: list[bool] = []
    on_path = {a}
    stack = [iter(g._neighbors[a])]
    while stack:
        nxt = next(stack[-1], None)
        if nxt is None:
            stack.pop()
            on_path.discard(nodes.pop())
            if forward:
                forward.pop()
            continue
        if nxt in on_path:
            continue
        direction = g.has_edge(nodes[-1], nxt)
        if nxt == b:
            nodes.append(nxt)
            forward.append(direction)
            if prune is None or not prune(nodes, forward):
                yield Path(tuple(nodes), tuple(forward))
            nodes.pop()
            forward.pop()
            continue
        if nxt in avoid:
            continue
        nodes.append(nxt)
        forward.append(direction)
        if prune is not None and prune(nodes, forward):
            nodes.pop()
            forward.pop()
            continue
        on_path.add(nxt)
        stack.append(iter(g._neighbors[nxt]))


def enumerate_paths(g: CausalGraph, a: str, b: str, max_paths: int = DEFAULT_MAX_PATHS,
                    avoid: Iterable[str] = ()) -> list[Path]:
    """All simple undirected paths between ``a`` and ``b``, sorted by node sequence.

    ``avoid`` excludes nodes from path interiors. Raises ResourceLimitError
    once more than ``max_paths`` paths are found.
    """
    g.check_nodes([a, b])
    if a == b:
        raise ArgumentError("path endpoints must differ")
    out = []
    for p in _iter_paths(g, a, b, frozenset(avoid)):
        out.append(p)
        if len(out) > max_paths:
            raise ResourceLimitError(
                f"more than {max_paths} paths between {a!r} and {b!r}; raise max_paths")
    out.sort(key=lambda p: p.nodes)
    return out


def _check_path(g: CausalGraph, p: Path) -> None:
    g.check_nodes(p.nodes)
    if len(set(p.nodes)) != len(p.nodes):
        raise ArgumentError(f"path {p} repeats a node")
    for (x, y), f in zip(zip(p.nodes, p.nodes[1:]), p.forward):
        if not g.has_edge(*((x, y) if f else (y, x))):
            raise ArgumentError(f"path {p} uses an edge absent from the graph")


def is_blocked(g: CausalGraph, p: Path, z: Iterable[str] = ()) -> bool:
    _check_path(g, p)
    z = _as_set(g, z)
    if p.start in z or p.end in z:
        raise ArgumentError("path endpoints may not be in the conditioning set")
    an_z = None
    for i in range(1, len(p.nodes) - 1):
        node = p.nodes[i]
        if p.role(i) == "collider":
            if an_z is None:
                an_z = ancestors(g, z) | z
            if node not in an_z:
                return True
        elif node in z:
            return True
    return False


def d_separated(g: CausalGraph, s1: Iterable[str], s2: Iterable[str],
                z: Iterable[str] = ()) -> bool:
    """d-separation via the moralized ancestral graph."""
    s1, s2, z = _as_set(g, s1), _as_set(g, s2), _as_set(g, z)
    if s1 & s2 or s1 & z or s2 & z:
        raise ArgumentError("s1, s2 and z must be pairwise disjoint")
    if not s1 or not s2:
        return True
    keep = s1 | s2 | z
    keep = keep | ancestors(g, keep)
    adj: dict[str, set[str]] = {n: set() for n in keep}
    for a, b in g.edges:
        if a in keep and b in keep:
            adj[a].add(b)
            adj[b].add(a)
    for n in keep:
        pa = [p for p in g._parents[n] if p in keep]
        for i, u in enumerate(pa):
            for v in pa[i + 1:]:
                adj[u].add(v)
                adj[v].add(u)
    seen = set(s1)
    queue = deque(s1)
    while queue:
        n = queue.popleft()
        for m in adj[n]:
            if m in z or m in seen:
                continue
            if m in s2:
                return False
            seen.add(m)
            queue.append(m)
    return True


def backdoor_paths(g: CausalGraph, s: Iterable[str], b: Iterable[str],
                   max_paths: int = DEFAULT_MAX_PATHS) -> list[Path]:
    """Paths from a node of ``s`` to a node of ``b`` entering the ``s`` endpoint.

    Interiors avoid ``s`` and ``b`` so every path is counted once, from the
    last ``s`` member it leaves.
    """
    s, b = _as_set(g, s), _as_set(g, b)
    if s & b:
        raise ArgumentError("backdoor path sets must be disjoint")
    avoid = s | b
    out = []
    for a in sorted(s):
        if not g._parents[a]:
            continue
        for t in sorted(b):
            out.extend(p for p in enumerate_paths(g, a, t, max_paths, avoid) if not p.forward[0])
    return out


def do_surgery(g: CausalGraph, s: Iterable[str]) -> CausalGraph:
    s = _as_set(g, s)
    if g.target in s:
        raise ArgumentError("cannot intervene on the target")
    return g.with_edges(e for e in g.edges if e[1] not in s)


class TableRow(Enum):
    CHAIN_THROUGH_K = "chain through k"
    FORK_AT_K = "fork at k"
    COLLIDER_AT_K = "collider at k"
    COLLIDER_ANCESTOR_OF_K = "collider ancestral to k"
    UNAFFECTED = "none of the above"


class BlockState(Enum):
    BLOCKED = "blocked"
    EITHER = "blocked or unblocked"


@dataclass(frozen=True)
class Transition:
    before: BlockState
    after: BlockState

    def __str__(self):
        return f"{self.before.value} => {self.after.value}"


_B, _E = BlockState.BLOCKED, BlockState.EITHER
# (conditioning, intervention) per row; None means "no effect"
_TABLE = {
    TableRow.CHAIN_THROUGH_K: (Transition(_E, _B), Transition(_E, _B)),
    TableRow.FORK_AT_K: (Transition(_E, _B), Transition(_E, _B)),
    TableRow.COLLIDER_AT_K: (Transition(_B, _E), Transition(_B, _B)),
    TableRow.COLLIDER_ANCESTOR_OF_K: (Transition(_B, _E), Transition(_B, _B)),
    TableRow.UNAFFECTED: (None, None),
}


@dataclass(frozen=True)
class PathContextEffect:
    row: TableRow
    matches: tuple[TableRow, ...]
    conditioning: Transition | None
    intervention: Transition | None


def classify_path_context(g: CausalGraph, p: Path, k: str) -> PathContextEffect:
    """Effect of conditioning on / intervening on ``k`` for path ``p``.

    Rows are tried top to bottom and the first match wins; ``matches`` lists
    every row that applies.
    """
    _check_path(g, p)
    g.check_nodes([k])
    if k in (p.start, p.end):
        raise ArgumentError("context node may not be an endpoint of the path")
    matches = []
    if k in p.nodes:
        role = p.role(p.nodes.index(k))
        matches.append({"chain": TableRow.CHAIN_THROUGH_K, "fork": TableRow.FORK_AT_K,
                        "collider": TableRow.COLLIDER_AT_K}[role])
    an_k = ancestors(g, [k])
    if any(c in an_k for c in p.colliders()):
        matches.append(TableRow.COLLIDER_ANCESTOR_OF_K)
    if not matches:
        matches.append(TableRow.UNAFFECTED)
    row = matches[0]
    cond, interv = _TABLE[row]
    return PathContextEffect(row, tuple(matches), cond, interv)


def collider_impact(wg: WeightedGraph, x1: str, x2: str, y: str,
                    max_paths: int = DEFAULT_MAX_PATHS) -> float | None:
    """|CP| / (|CP| + |UP|) over weighted x1-y paths through x2.

    CP sums weight products of paths whose only collider is x2; UP sums those
    of collider-free paths through x2. Returns None when both sums vanish.
    """
    g = wg.base
    g.check_nodes([x1, x2, y])
    if len({x1, x2, y}) != 3:
        raise ArgumentError("x1, x2 and y must be distinct")

    def prune(nodes, forward):
        # reject as soon as an interior collider other than x2 appears
        i = len(nodes) - 2
        if i >= 1 and forward[i - 1] and not forward[i] and nodes[i] != x2:
            return True
        return False

    cp = up = 0.0
    count = 0
    for p in _iter_paths(g, x1, y, prune=prune):
        count += 1
        if count > max_paths:
            raise ResourceLimitError(f"more than {max_paths} candidate paths")
        if x2 not in p.interior:
            continue
        prod = math.prod(wg.weights[e] for e in p.edges())
        colliders = p.colliders()
        if colliders == [x2]:
            cp += prod
        elif not colliders:
            up += prod
    denom = abs(cp) + abs(up)
    if denom == 0.0:
        return None
    return abs(cp) / denom


def lemma1_applies(g: CausalGraph, xj: str, s: Iterable[str]) -> bool:
    """No directed path from the context into the target or into ``xj``."""
    s = _as_set(g, s)
    _check_context(g, xj, s)
    if not s:
        return True
    return not has_directed_path(g, s, {g.target, xj})


def lemma2_applies(g: CausalGraph, xj: str, s: Iterable[str]) -> bool:
    """Observational and interventional context coincide for ``xj``.

    Either no backdoor path from the context to ``xj`` or to the target is
    open given the empty set, or the setup is purely causal: the target has
    no descendants among ``xj`` and the context, and no outside node confounds
    ``xj`` (or a context node) with the target.
    """
    s = _as_set(g, s)
    _check_context(g, xj, s)
    if not s:
        return True
    return _no_open_backdoor(g, xj, s) or _purely_causal(g, xj, s)


def _check_context(g: CausalGraph, xj: str, s: frozenset[str]) -> None:
    g.check_nodes([xj])
    if xj == g.target:
        raise ArgumentError("the feature of interest cannot be the target")
    if xj in s or g.target in s:
        raise ArgumentError("context must be a subset of the features other than xj")


def _no_open_backdoor(g: CausalGraph, xj: str, s: frozenset[str]) -> bool:
    for dst in (xj, g.target):
        for p in backdoor_paths(g, s, {dst}):
            if not is_blocked(g, p, ()):
                return False
    return True


def _purely_causal(g: CausalGraph, xj: str, s: frozenset[str]) -> bool:
    y = g.target
    if has_directed_path(g, {y}, s | {xj}):
        return False
    excluded = s | {xj, y}
    for h in g.nodes:
        if h in excluded:
            continue
        # a confounder needs a route to the target that does not pass through
        # xj or the context; routes through them are chains, not forks
        if not has_directed_path(g, {h}, {y}, avoid=s | {xj}):
            continue
        if has_directed_path(g, {h}, s | {xj}):
            return False
    return True


def target_path_profile(g: CausalGraph, xj: str,
                        max_paths: int = DEFAULT_MAX_PATHS) -> tuple[int, int]:
    """(paths to the target, how many of them contain a collider)."""
    paths = enumerate_paths(g, xj, g.target, max_paths)
    return len(paths), sum(1 for p in paths if p.colliders())
