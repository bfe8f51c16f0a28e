"""Directed acyclic graphs over latent nodes ``0..n-1``."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

import numpy as np


class CycleError(ValueError):
    """Raised when an edge set does not admit a topological order."""


@dataclass(frozen=True)
class Dag:
    """Immutable DAG. ``edges`` holds ordered pairs ``(i, j)`` meaning ``i -> j``."""

    n: int
    edges: frozenset[tuple[int, int]] = field(default_factory=frozenset)

    def __post_init__(self) -> None:
        if self.n < 1:
            raise ValueError(f"node count must be positive, got {self.n}")
        edges = frozenset((int(i), int(j)) for i, j in self.edges)
        for i, j in edges:
            if i == j:
                raise ValueError(f"self-loop on node {i}")
            if not (0 <= i < self.n and 0 <= j < self.n):
                raise ValueError(f"edge {(i, j)} out of range for n={self.n}")
        object.__setattr__(self, "edges", edges)
        # raises CycleError
        object.__setattr__(self, "_order", _kahn(self.n, edges))

    @classmethod
    def from_adjacency(cls, adj: np.ndarray) -> Dag:
        adj = np.asarray(adj)
        if adj.ndim != 2 or adj.shape[0] != adj.shape[1]:
            raise ValueError("adjacency must be square")
        rows, cols = np.nonzero(adj)
        return cls(adj.shape[0], frozenset(zip(rows.tolist(), cols.tolist())))

    @classmethod
    def empty(cls, n: int) -> Dag:
        return cls(n)

    @property
    def adjacency(self) -> np.ndarray:
        """Boolean matrix with ``adj[i, j]`` true iff ``i -> j``."""
        adj = np.zeros((self.n, self.n), dtype=bool)
        for i, j in self.edges:
            adj[i, j] = True
        return adj

    def parents(self, i: int) -> set[int]:
        return {a for a, b in self.edges if b == i}

    def children(self, i: int) -> set[int]:
        return {b for a, b in self.edges if a == i}

    def ancestors(self, i: int) -> set[int]:
        return ancestors(self, i)

    def descendants(self, i: int) -> set[int]:
        return descendants(self, i)

    def topological_order(self) -> list[int]:
        return list(self._order)  # type: ignore[attr-defined]

    def relabel(self, mapping: Iterable[int]) -> Dag:
        """Rename node ``k`` to ``mapping[k]``."""
        mapping = list(mapping)
        if sorted(mapping) != list(range(self.n)):
            raise ValueError("mapping must be a permutation")
        return Dag(self.n, frozenset((mapping[i], mapping[j]) for i, j in self.edges))

    def __len__(self) -> int:
        return len(self.edges)


def _kahn(n: int, edges: frozenset[tuple[int, int]]) -> tuple[int, ...]:
    indeg = [0] * n
    out: list[list[int]] = [[] for _ in range(n)]
    for i, j in sorted(edges):
        indeg[j] += 1
        out[i].append(j)
    ready = [i for i in range(n) if indeg[i] == 0]
    order: list[int] = []
    while ready:
        ready.sort()
        i = ready.pop(0)
        order.append(i)
        for j in out[i]:
            indeg[j] -= 1
            if indeg[j] == 0:
                ready.append(j)
    if len(order) != n:
        raise CycleError("edge set contains a directed cycle")
    return tuple(order)


def random_dag(n: int, density: float, seed: int | np.random.Generator | None = None) -> Dag:
    """Erdos-Renyi DAG: draw a uniform node order, then keep each forward pair
    independently with probability ``density``."""
    if n < 1:
        raise ValueError(f"node count must be positive, got {n}")
    if not 0.0 <= density <= 1.0:
        raise ValueError(f"density must lie in [0, 1], got {density}")
    rng = np.random.default_rng(seed)
    order = rng.permutation(n)
    keep = rng.random((n, n)) < density
    edges = {
        (int(order[a]), int(order[b]))
        for a in range(n)
        for b in range(a + 1, n)
        if keep[a, b]
    }
    return Dag(n, frozenset(edges))


def _reach(g: Dag, i: int, forward: bool) -> set[int]:
    nbrs: dict[int, list[int]] = {k: [] for k in range(g.n)}
    for a, b in g.edges:
        if forward:
            nbrs[a].append(b)
        else:
            nbrs[b].append(a)
    seen: set[int] = set()
    stack = list(nbrs[i])
    while stack:
        k = stack.pop()
        if k not in seen:
            seen.add(k)
            stack.extend(nbrs[k])
    return seen


def ancestors(g: Dag, i: int) -> set[int]:
    return _reach(g, i, forward=False)


def descendants(g: Dag, i: int) -> set[int]:
    return _reach(g, i, forward=True)


def topological_order(g: Dag) -> list[int]:
    return g.topological_order()


def transitive_closure(g: Dag) -> Dag:
    edges = {(a, j) for j in range(g.n) for a in ancestors(g, j)}
    return Dag(g.n, frozenset(edges))


def shd(g1: Dag, g2: Dag) -> int:
    """Number of ordered pairs whose edge status differs; a reversal costs 2."""
    if g1.n != g2.n:
        raise ValueError(f"node counts differ: {g1.n} vs {g2.n}")
    return len(g1.edges ^ g2.edges)


def write_edge_list(g: Dag, path: str | Path) -> None:
    lines = [f"# n={g.n}"] + [f"{i} {j}" for i, j in sorted(g.edges)]
    Path(path).write_text("\n".join(lines) + "\n")


def read_edge_list(path: str | Path, n: int | None = None) -> Dag:
    edges = []
    for line in Path(path).read_text().splitlines():
        line = line.strip()
        if line.startswith("# n=") and n is None:
            n = int(line[4:])
            continue
        if not line or line.startswith("#"):
            continue
        i, j = line.split()
        edges.append((int(i), int(j)))
    if n is None:
        n = 1 + max((max(e) for e in edges), default=0)
    return Dag(n, frozenset(edges))
