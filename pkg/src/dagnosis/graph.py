"""Directed acyclic graphs over feature indices.

Provides the DAG container plus the graph queries the rest of the toolkit
is built on: topological ordering, Markov boundaries, d-separation,
Erdos-Renyi sampling, structural Hamming distance, and SHD-targeted
corruption.  The d-separation routine follows the linear-time reachability
formulation of Koller & Friedman (2009), ch. 3.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass
from pathlib import Path

import numpy as np

__all__ = [
    "Dag",
    "MarkovBoundary",
    "topological_order",
    "markov_boundary",
    "d_separated",
    "sample_erdos_renyi",
    "autoregressive_dag",
    "shd",
    "corrupt_to_shd",
    "read_dag_file",
    "write_dag_file",
]

Edge = tuple[int, int]


@dataclass(frozen=True)
class Dag:
    """DAG over nodes ``0..d-1`` with edges ``(i, j)`` meaning ``i -> j``.

    Acyclicity, index bounds, and the absence of self-loops and 2-cycles
    are enforced at construction.
    """

    d: int
    edges: frozenset[Edge]

    def __init__(self, d: int, edges) -> None:
        object.__setattr__(self, "d", int(d))
        object.__setattr__(self, "edges", frozenset((int(i), int(j)) for i, j in edges))
        if self.d < 1:
            raise ValueError(f"node count must be >= 1, got {self.d}")
        for i, j in self.edges:
            if i == j:
                raise ValueError(f"self-loop at node {i}")
            if not (0 <= i < self.d and 0 <= j < self.d):
                raise ValueError(f"edge ({i}, {j}) out of range for d={self.d}")
            if (j, i) in self.edges:
                raise ValueError(f"both ({i}, {j}) and ({j}, {i}) present")
        # acyclicity check; result cached for topological_order
        object.__setattr__(self, "_topo", _kahn_order(self.d, self.edges))

    def parents(self, i: int) -> set[int]:
        return {a for a, b in self.edges if b == i}

    def children(self, i: int) -> set[int]:
        return {b for a, b in self.edges if a == i}

    def parent_lists(self) -> list[list[int]]:
        """Sorted parent list per node."""
        out: list[list[int]] = [[] for _ in range(self.d)]
        for a, b in self.edges:
            out[b].append(a)
        for lst in out:
            lst.sort()
        return out

    def child_lists(self) -> list[list[int]]:
        out: list[list[int]] = [[] for _ in range(self.d)]
        for a, b in self.edges:
            out[a].append(b)
        for lst in out:
            lst.sort()
        return out


def _kahn_order(d: int, edges: frozenset[Edge]) -> tuple[int, ...]:
    """Topological order via Kahn's algorithm, smallest index first."""
    indeg = [0] * d
    children: list[list[int]] = [[] for _ in range(d)]
    for a, b in edges:
        indeg[b] += 1
        children[a].append(b)
    ready = [i for i in range(d) if indeg[i] == 0]
    heapq.heapify(ready)
    order: list[int] = []
    while ready:
        node = heapq.heappop(ready)
        order.append(node)
        for c in children[node]:
            indeg[c] -= 1
            if indeg[c] == 0:
                heapq.heappush(ready, c)
    if len(order) != d:
        raise ValueError("edge set contains a cycle")
    return tuple(order)


@dataclass(frozen=True)
class MarkovBoundary:
    """Minimal set of nodes shielding ``target`` from the rest of the graph."""

    target: int
    members: tuple[int, ...]


def topological_order(g: Dag) -> tuple[int, ...]:
    """Deterministic topological order (ties broken by smallest index)."""
    return g._topo  # computed at construction


def markov_boundary(g: Dag, i: int) -> MarkovBoundary:
    """Markov boundary of node ``i``: parents, children, and co-parents.

    This graphical rule yields the minimal Markov blanket under the
    Bayesian-network factorization encoded by ``g``.
    """
    if not 0 <= i < g.d:
        raise IndexError(f"node {i} out of range for d={g.d}")
    parents = g.parents(i)
    children = g.children(i)
    coparents: set[int] = set()
    for c in children:
        coparents |= g.parents(c)
    members = (parents | children | coparents) - {i}
    return MarkovBoundary(target=i, members=tuple(sorted(members)))


def d_separated(g: Dag, a: int, b: int, s) -> bool:
    """Decide whether every path between ``a`` and ``b`` is blocked given ``s``.

    Standard active-trail reachability: a trail through a non-collider is
    blocked when the middle node is conditioned on; a trail through a
    collider is open only when the collider or one of its descendants is
    conditioned on.
    """
    s = frozenset(int(x) for x in s)
    if a == b:
        raise ValueError("a and b must differ")
    if a in s or b in s:
        raise ValueError("a and b must not be in the conditioning set")
    parents = g.parent_lists()
    children = g.child_lists()

    # nodes that are in s or have a descendant in s (collider activators)
    activates = [False] * g.d
    stack = list(s)
    for z in s:
        activates[z] = True
    while stack:
        node = stack.pop()
        for p in parents[node]:
            if not activates[p]:
                activates[p] = True
                stack.append(p)

    # reachability over (node, direction); direction 'up' means the trail
    # arrived against an edge (from a child), 'down' means along one.
    UP, DOWN = 0, 1
    seen = [[False, False] for _ in range(g.d)]
    frontier = [(a, UP)]
    seen[a][UP] = True
    while frontier:
        node, direction = frontier.pop()
        if node == b:
            return False
        nxt: list[tuple[int, int]] = []
        if direction == UP and node not in s:
            nxt.extend((p, UP) for p in parents[node])
            nxt.extend((c, DOWN) for c in children[node])
        elif direction == DOWN:
            if node not in s:
                nxt.extend((c, DOWN) for c in children[node])
            if activates[node]:
                nxt.extend((p, UP) for p in parents[node])
        for state in nxt:
            n, dr = state
            if not seen[n][dr]:
                seen[n][dr] = True
                frontier.append(state)
    return True


def sample_erdos_renyi(d: int, s: int, rng: np.random.Generator) -> Dag:
    """Sample a DAG with exactly ``s`` edges.

    ``s`` unordered node pairs are drawn uniformly without replacement and
    each is oriented along a uniformly drawn node ordering, which guarantees
    acyclicity by construction.
    """
    max_edges = d * (d - 1) // 2
    if not 0 <= s <= max_edges:
        raise ValueError(f"s={s} outside [0, {max_edges}] for d={d}")
    pairs = [(i, j) for i in range(d) for j in range(i + 1, d)]
    chosen = rng.choice(len(pairs), size=s, replace=False) if s else []
    order = rng.permutation(d)
    rank = np.empty(d, dtype=int)
    rank[order] = np.arange(d)
    edges = set()
    for idx in chosen:
        i, j = pairs[int(idx)]
        edges.add((i, j) if rank[i] < rank[j] else (j, i))
    return Dag(d, edges)


def autoregressive_dag(d: int) -> Dag:
    """Complete DAG with every edge ``i -> j`` for ``i < j``.

    Encodes the factorization with no independence assumptions, so every
    node's Markov boundary is all other nodes.
    """
    return Dag(d, {(i, j) for i in range(d) for j in range(i + 1, d)})


def _pair_status(g: Dag, i: int, j: int) -> int:
    """0 = no edge, 1 = i->j, 2 = j->i, for i < j."""
    if (i, j) in g.edges:
        return 1
    if (j, i) in g.edges:
        return 2
    return 0


def shd(g1: Dag, g2: Dag) -> int:
    """Structural Hamming distance; a reversed edge counts as one edit.

    Decomposes over unordered node pairs: each pair whose status (absent /
    forward / backward) differs between the graphs costs exactly one edit
    (addition, deletion, or reversal).
    """
    if g1.d != g2.d:
        raise ValueError(f"dimension mismatch: {g1.d} vs {g2.d}")
    touched = {(min(i, j), max(i, j)) for i, j in g1.edges | g2.edges}
    return sum(1 for i, j in touched if _pair_status(g1, i, j) != _pair_status(g2, i, j))


def corrupt_to_shd(g: Dag, target: int, rng: np.random.Generator, max_proposals: int = 10_000) -> Dag:
    """Produce a DAG at exactly ``target`` structural Hamming distance.

    Applies random single-edge edits (add / delete / reverse), proposing
    uniformly over legal edits.  Edits that would create a cycle or touch a
    node pair already edited (which could undo prior work) are rejected, so
    every accepted edit raises the distance by one.  Raises after
    ``max_proposals`` rejected or exhausted proposals.
    """
    if target < 1:
        raise ValueError(f"target SHD must be >= 1, got {target}")
    edges = set(g.edges)
    touched: set[tuple[int, int]] = set()
    proposals = 0
    while len(touched) < target:
        if proposals >= max_proposals:
            raise RuntimeError(
                f"could not reach SHD {target} within {max_proposals} proposals "
                f"(reached {len(touched)})"
            )
        proposals += 1
        i, j = rng.choice(g.d, size=2, replace=False)
        i, j = int(i), int(j)
        pair = (min(i, j), max(i, j))
        if pair in touched:
            continue
        has_fwd = (i, j) in edges
        has_bwd = (j, i) in edges
        if has_fwd or has_bwd:
            u, v = (i, j) if has_fwd else (j, i)
            # choose delete or reverse with equal probability
            if rng.random() < 0.5:
                edges.remove((u, v))
            else:
                edges.remove((u, v))
                edges.add((v, u))
                if _has_cycle(g.d, edges):
                    edges.remove((v, u))
                    edges.add((u, v))
                    continue
        else:
            new = (i, j)
            edges.add(new)
            if _has_cycle(g.d, edges):
                edges.remove(new)
                continue
        touched.add(pair)
    out = Dag(g.d, edges)
    assert shd(g, out) == target
    return out


def _has_cycle(d: int, edges: set[Edge]) -> bool:
    try:
        _kahn_order(d, frozenset(edges))
    except ValueError:
        return True
    return False


def write_dag_file(g: Dag, path: str | Path) -> None:
    """Write the plain-text interchange format: ``d <count>`` then one
    ``i j`` line per edge."""
    path = Path(path)
    with path.open("w", encoding="utf-8") as fh:
        fh.write(f"d {g.d}\n")
        for i, j in sorted(g.edges):
            fh.write(f"{i} {j}\n")


def read_dag_file(path: str | Path) -> Dag:
    """Read the interchange format written by :func:`write_dag_file`.

    '#' lines are comments; the first non-comment line must be
    ``d <count>`` so isolated nodes survive the round trip.
    """
    path = Path(path)
    d: int | None = None
    edges: set[Edge] = set()
    with path.open("r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            if d is None:
                if len(parts) != 2 or parts[0] != "d":
                    raise ValueError(
                        f"{path}: line {lineno}: expected 'd <count>' header, got {line!r}"
                    )
                d = int(parts[1])
                continue
            if len(parts) != 2:
                raise ValueError(f"{path}: line {lineno}: expected 'i j', got {line!r}")
            edges.add((int(parts[0]), int(parts[1])))
    if d is None:
        raise ValueError(f"{path}: missing 'd <count>' header")
    return Dag(d, edges)
