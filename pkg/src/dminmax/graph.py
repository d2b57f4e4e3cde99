"""Undirected connected communication graphs."""

from __future__ import annotations

import numpy as np


class NotConnectedAfterRetries(RuntimeError):
    """Random graph sampling never produced a connected graph."""


class Graph:
    """Undirected simple graph on nodes 0..n-1.

    Immutable after construction; all protocol code assumes connectivity and
    relies on sorted neighbor lists for deterministic message schedules.
    """

    def __init__(self, n: int, edges=()):
        if n < 1:
            raise ValueError("need at least one node")
        self.n = int(n)
        adjacency = np.zeros((n, n), dtype=np.int8)
        canon = set()
        for i, j in edges:
            i, j = int(i), int(j)
            if i == j:
                raise ValueError(f"self-loop at node {i}")
            if not (0 <= i < n and 0 <= j < n):
                raise ValueError(f"edge ({i},{j}) out of range for n={n}")
            canon.add((min(i, j), max(i, j)))
            adjacency[i, j] = adjacency[j, i] = 1
        self.edges = frozenset(canon)
        self.adjacency = adjacency
        self.adjacency.setflags(write=False)
        self._neighbors = [sorted(np.flatnonzero(adjacency[i]).tolist())
                           for i in range(n)]

    def neighbors(self, i: int) -> list[int]:
        """Sorted neighbor list of node i."""
        if not (0 <= i < self.n):
            raise IndexError(f"node {i} out of range for n={self.n}")
        return list(self._neighbors[i])

    def degree(self, i: int) -> int:
        return len(self._neighbors[i])

    def is_connected(self) -> bool:
        """BFS sweep from node 0 reaches every node."""
        seen = np.zeros(self.n, dtype=bool)
        seen[0] = True
        frontier = [0]
        while frontier:
            nxt = []
            for u in frontier:
                for v in self._neighbors[u]:
                    if not seen[v]:
                        seen[v] = True
                        nxt.append(v)
            frontier = nxt
        return bool(seen.all())

    def to_edge_list(self) -> str:
        """One 'i j' pair per line, sorted, for config files."""
        return "\n".join(f"{i} {j}" for i, j in sorted(self.edges)) + (
            "\n" if self.edges else "")

    @classmethod
    def from_edge_list(cls, text: str, n: int | None = None) -> "Graph":
        edges = []
        for lineno, line in enumerate(text.splitlines(), 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            if len(parts) != 2:
                raise ValueError(f"line {lineno}: expected 'i j', got {line!r}")
            edges.append((int(parts[0]), int(parts[1])))
        if n is None:
            n = 1 + max((max(e) for e in edges), default=0)
        return cls(n, edges)

    def __repr__(self):
        return f"Graph(n={self.n}, edges={len(self.edges)})"


def complete_graph(n: int) -> Graph:
    return Graph(n, [(i, j) for i in range(n) for j in range(i + 1, n)])


def erdos_renyi(n: int, p: float, seed: int = 0, max_tries: int = 1000) -> Graph:
    """Sample G(n, p) repeatedly until connected.

    Each unordered pair is included independently with probability p; the
    draw is deterministic given the seed. Raises NotConnectedAfterRetries
    when max_tries samples all come out disconnected (p too small for n).
    """
    if not (0.0 <= p <= 1.0):
        raise ValueError("p must lie in [0, 1]")
    rng = np.random.default_rng(seed)
    pairs = [(i, j) for i in range(n) for j in range(i + 1, n)]
    for _ in range(max_tries):
        mask = rng.random(len(pairs)) < p
        g = Graph(n, [e for e, keep in zip(pairs, mask) if keep])
        if g.is_connected():
            return g
    raise NotConnectedAfterRetries(
        f"no connected sample in {max_tries} tries (n={n}, p={p})")
