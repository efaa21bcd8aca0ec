"""Graph representation, BFS orderings and the adjacency-sequence encoding.

Nodes are dense integers ``0..n-1``. An :class:`AdjacencySequence` stores,
for every position ``i`` of a :class:`NodeOrdering`, the row of length ``i``
describing edges between the node at position ``i`` and the nodes placed
before it (positions are 0-based, so the first row is empty).
"""
from __future__ import annotations

import logging
from collections import deque
from dataclasses import dataclass
from os import PathLike
from typing import Iterable, Iterator, Sequence

import numpy as np

log = logging.getLogger(__name__)

UNKNOWN = -1
"""Entry value for pairs whose adjacency is not observed."""


def _pair(u: int, v: int) -> tuple[int, int]:
    return (u, v) if u < v else (v, u)


class Graph:
    """Immutable simple undirected graph on nodes ``0..node_count-1``."""

    __slots__ = ("node_count", "edges", "labels", "_adj")

    def __init__(
        self,
        node_count: int,
        edges: Iterable[tuple[int, int]] = (),
        labels: Sequence[str] | None = None,
    ):
        node_count = int(node_count)
        if node_count < 0:
            raise ValueError("node_count must be non-negative")
        normalized = set()
        for u, v in edges:
            u, v = int(u), int(v)
            if u == v:
                raise ValueError(f"self-loop ({u}, {u}) is not allowed")
            if not (0 <= u < node_count and 0 <= v < node_count):
                raise ValueError(f"edge ({u}, {v}) out of range for {node_count} nodes")
            normalized.add(_pair(u, v))
        if labels is not None:
            labels = tuple(str(x) for x in labels)
            if len(labels) != node_count:
                raise ValueError("labels must have one entry per node")
        object.__setattr__(self, "node_count", node_count)
        object.__setattr__(self, "edges", frozenset(normalized))
        object.__setattr__(self, "labels", labels)
        adj: list[set[int]] = [set() for _ in range(node_count)]
        for u, v in normalized:
            adj[u].add(v)
            adj[v].add(u)
        object.__setattr__(self, "_adj", tuple(frozenset(a) for a in adj))

    def __setattr__(self, name, value):
        raise AttributeError("Graph is immutable")

    def __repr__(self) -> str:
        return f"Graph(node_count={self.node_count}, edges={self.edge_count})"

    def __eq__(self, other) -> bool:
        if not isinstance(other, Graph):
            return NotImplemented
        return self.node_count == other.node_count and self.edges == other.edges

    def __hash__(self) -> int:
        return hash((self.node_count, self.edges))

    @property
    def edge_count(self) -> int:
        return len(self.edges)

    def nodes(self) -> range:
        return range(self.node_count)

    def neighbors(self, u: int) -> frozenset[int]:
        return self._adj[u]

    def degree(self, u: int) -> int:
        return len(self._adj[u])

    def degrees(self) -> np.ndarray:
        return np.array([len(a) for a in self._adj], dtype=np.int64)

    def has_edge(self, u: int, v: int) -> bool:
        return v in self._adj[u]

    def sorted_edges(self) -> list[tuple[int, int]]:
        return sorted(self.edges)

    def non_edges(self) -> Iterator[tuple[int, int]]:
        """Unordered non-adjacent pairs ``(u, v)``, ``u < v``, in lexicographic order."""
        for u in range(self.node_count):
            adj = self._adj[u]
            for v in range(u + 1, self.node_count):
                if v not in adj:
                    yield (u, v)

    def adjacency_matrix(self) -> np.ndarray:
        a = np.zeros((self.node_count, self.node_count), dtype=np.int8)
        if self.edges:
            e = np.array(self.sorted_edges())
            a[e[:, 0], e[:, 1]] = 1
            a[e[:, 1], e[:, 0]] = 1
        return a

    def with_edges(self, extra: Iterable[tuple[int, int]]) -> "Graph":
        return Graph(self.node_count, list(self.edges) + list(extra), self.labels)

    def with_nodes(self, count: int) -> "Graph":
        """Copy with ``count`` isolated nodes appended (labels are dropped)."""
        return Graph(self.node_count + count, self.edges)

    def induced_subgraph(self, nodes: Iterable[int]) -> tuple["Graph", list[int]]:
        """Subgraph induced by ``nodes``, relabelled densely in sorted order.

        Returns the subgraph and ``kept`` where ``kept[new_id] = old_id``.
        """
        kept = sorted(set(int(v) for v in nodes))
        index = {old: new for new, old in enumerate(kept)}
        sub_edges = [(index[u], index[v]) for u, v in self.edges if u in index and v in index]
        labels = [self.labels[v] for v in kept] if self.labels is not None else None
        return Graph(len(kept), sub_edges, labels), kept

    def connected_components(self) -> list[list[int]]:
        """Components as sorted node lists, largest first (ties by smallest node)."""
        seen = [False] * self.node_count
        comps = []
        for s in range(self.node_count):
            if seen[s]:
                continue
            seen[s] = True
            comp = [s]
            queue = deque([s])
            while queue:
                u = queue.popleft()
                for w in self._adj[u]:
                    if not seen[w]:
                        seen[w] = True
                        comp.append(w)
                        queue.append(w)
            comps.append(sorted(comp))
        comps.sort(key=lambda c: (-len(c), c[0]))
        return comps

    def largest_component(self) -> "Graph":
        if self.node_count == 0:
            return self
        sub, _ = self.induced_subgraph(self.connected_components()[0])
        return sub

    def to_networkx(self):
        import networkx as nx

        g = nx.Graph()
        g.add_nodes_from(range(self.node_count))
        g.add_edges_from(self.sorted_edges())
        return g

    @classmethod
    def from_networkx(cls, g) -> "Graph":
        nodes = sorted(g.nodes())
        index = {v: i for i, v in enumerate(nodes)}
        edges = [(index[u], index[v]) for u, v in g.edges() if u != v]
        return cls(len(nodes), edges)


@dataclass(frozen=True)
class PartialObservation:
    """Observed graph plus the number of missing nodes.

    Missing nodes are the placeholder ids ``observed.node_count ..
    total_nodes - 1``.
    """

    observed: Graph
    missing_node_count: int

    def __post_init__(self):
        if self.missing_node_count < 0:
            raise ValueError("missing_node_count must be non-negative")

    @property
    def observed_count(self) -> int:
        return self.observed.node_count

    @property
    def total_nodes(self) -> int:
        return self.observed.node_count + self.missing_node_count

    def is_observed(self, v: int) -> bool:
        return v < self.observed.node_count


class NodeOrdering:
    """Bijection between generation positions ``0..n-1`` and node ids."""

    __slots__ = ("order", "position")

    def __init__(self, order: Sequence[int]):
        order = tuple(int(v) for v in order)
        position = {v: i for i, v in enumerate(order)}
        if len(position) != len(order):
            raise ValueError("ordering contains duplicate nodes")
        self.order = order
        self.position = position

    def __len__(self) -> int:
        return len(self.order)

    def __getitem__(self, i: int) -> int:
        return self.order[i]

    def __iter__(self):
        return iter(self.order)

    def __eq__(self, other) -> bool:
        return isinstance(other, NodeOrdering) and self.order == other.order

    def __repr__(self) -> str:
        return f"NodeOrdering({list(self.order)})"

    def covers(self, nodes: Iterable[int]) -> bool:
        nodes = set(nodes)
        return len(nodes) == len(self.order) and nodes == set(self.order)


class AdjacencySequence:
    """Lookback rows of a graph under an ordering.

    ``rows[i]`` has length ``i``; ``rows[i][j]`` is 1/0 for edge/no edge
    between the nodes at positions ``j`` and ``i``, or :data:`UNKNOWN`.
    """

    __slots__ = ("rows",)

    def __init__(self, rows: Iterable[Sequence[int]]):
        rows = tuple(np.asarray(r, dtype=np.int8).reshape(-1) for r in rows)
        for i, r in enumerate(rows):
            if r.shape[0] != i:
                raise ValueError(f"row {i} has length {r.shape[0]}, expected {i}")
            if r.size and (r.min() < UNKNOWN or r.max() > 1):
                raise ValueError(f"row {i} has entries outside {{0, 1, UNKNOWN}}")
        self.rows = rows

    def __len__(self) -> int:
        return len(self.rows)

    def __getitem__(self, i: int) -> np.ndarray:
        return self.rows[i]

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, AdjacencySequence)
            and len(self) == len(other)
            and all(np.array_equal(a, b) for a, b in zip(self.rows, other.rows))
        )

    def __repr__(self) -> str:
        return "AdjacencySequence(" + ", ".join(str(r.tolist()) for r in self.rows) + ")"

    def unknown_count(self) -> int:
        return int(sum(np.count_nonzero(r == UNKNOWN) for r in self.rows))

    @property
    def fully_known(self) -> bool:
        return self.unknown_count() == 0

    def window(self, i: int, width: int) -> np.ndarray:
        """Row ``i`` in lookback form: entry ``k`` is the pair with position ``i-1-k``.

        Positions further back than ``width`` are truncated; short rows are
        zero padded.
        """
        return lookback_window(self.rows[i], width)

    def windows(self, width: int) -> np.ndarray:
        """All rows in lookback form, shape ``(n, width)``."""
        out = np.zeros((len(self.rows), width), dtype=np.float64)
        for i, r in enumerate(self.rows):
            out[i] = lookback_window(r, width)
        return out

    def bandwidth(self) -> int:
        """Largest distance from a row to its earliest 1-entry (0 if edgeless)."""
        best = 0
        for i, r in enumerate(self.rows):
            ones = np.flatnonzero(r == 1)
            if ones.size:
                best = max(best, i - int(ones[0]))
        return best


def lookback_window(row: np.ndarray, width: int) -> np.ndarray:
    out = np.zeros(width, dtype=np.float64)
    k = min(len(row), width)
    if k:
        out[:k] = row[::-1][:k]
    return out


def bfs_ordering(g: Graph, start: int, rng: np.random.Generator) -> NodeOrdering:
    """Breadth-first ordering from ``start`` with randomized neighbor expansion.

    Nodes outside the start's component are appended in shuffled order.
    """
    if not (0 <= start < g.node_count):
        raise ValueError(f"start node {start} is not in the graph")
    seen = np.zeros(g.node_count, dtype=bool)
    seen[start] = True
    order = [start]
    queue = deque([start])
    while queue:
        u = queue.popleft()
        fresh = [w for w in sorted(g.neighbors(u)) if not seen[w]]
        if not fresh:
            continue
        for idx in rng.permutation(len(fresh)):
            w = fresh[idx]
            seen[w] = True
            order.append(w)
            queue.append(w)
    rest = np.flatnonzero(~seen)
    if rest.size:
        order.extend(int(v) for v in rng.permutation(rest))
    return NodeOrdering(order)


def random_bfs_ordering(g: Graph, rng: np.random.Generator) -> NodeOrdering:
    return bfs_ordering(g, int(rng.integers(g.node_count)), rng)


def encode_sequence(g: Graph, ordering: NodeOrdering) -> AdjacencySequence:
    if not ordering.covers(g.nodes()):
        raise ValueError("ordering does not cover exactly the nodes of the graph")
    a = g.adjacency_matrix()
    perm = np.asarray(ordering.order, dtype=np.int64)
    ap = a[np.ix_(perm, perm)]
    return AdjacencySequence(ap[i, :i] for i in range(len(perm)))


def decode_sequence(seq: AdjacencySequence, ordering: NodeOrdering) -> Graph:
    if len(seq) != len(ordering):
        raise ValueError("sequence and ordering lengths differ")
    edges = []
    for i, r in enumerate(seq.rows):
        if np.any(r == UNKNOWN):
            raise ValueError(f"row {i} contains UNKNOWN entries; impute the sequence first")
        for j in np.flatnonzero(r == 1):
            edges.append((ordering[int(j)], ordering[i]))
    return Graph(len(ordering), edges)


def encode_partial(obs: PartialObservation, ordering: NodeOrdering) -> AdjacencySequence:
    """Encode an observation; any pair touching a placeholder is UNKNOWN."""
    n = obs.total_nodes
    if not ordering.covers(range(n)):
        raise ValueError("ordering must cover observed nodes and placeholders")
    n_obs = obs.observed_count
    rows = []
    for i, u in enumerate(ordering.order):
        r = np.empty(i, dtype=np.int8)
        for j in range(i):
            v = ordering.order[j]
            if u < n_obs and v < n_obs:
                r[j] = 1 if obs.observed.has_edge(u, v) else 0
            else:
                r[j] = UNKNOWN
        rows.append(r)
    return AdjacencySequence(rows)


def read_edge_list(path: str | PathLike) -> Graph:
    """Load a whitespace-separated edge list (``#`` starts a comment).

    Node tokens are mapped to dense ids in order of first appearance and
    kept as labels. A line with a single token declares an isolated node.
    Self-loops and duplicate edges are dropped.
    """
    index: dict[str, int] = {}
    labels: list[str] = []
    edges = set()
    self_loops = duplicates = 0

    def node(tok: str) -> int:
        if tok not in index:
            index[tok] = len(labels)
            labels.append(tok)
        return index[tok]

    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) == 1:
                node(parts[0])
                continue
            if len(parts) > 3:
                raise ValueError(f"{path}:{lineno}: expected 'u v', got {line!r}")
            u, v = node(parts[0]), node(parts[1])
            if u == v:
                self_loops += 1
                continue
            p = _pair(u, v)
            if p in edges:
                duplicates += 1
                continue
            edges.add(p)
    if self_loops or duplicates:
        log.warning("%s: dropped %d self-loops and %d duplicate edges", path, self_loops, duplicates)
    return Graph(len(labels), edges, labels)


def write_edge_list(g: Graph, path: str | PathLike, use_labels: bool = True) -> None:
    name = (lambda v: g.labels[v]) if (use_labels and g.labels is not None) else str
    with open(path, "w") as fh:
        fh.write(f"# nodes {g.node_count} edges {g.edge_count}\n")
        for u, v in g.sorted_edges():
            fh.write(f"{name(u)} {name(v)}\n")
        for v in g.nodes():
            if not g.neighbors(v):
                fh.write(f"{name(v)}\n")
