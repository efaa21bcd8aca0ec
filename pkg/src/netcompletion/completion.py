"""Greedy completion (DeepNC-L) and its EM refinement (DeepNC-EM).

Positions are 0-based. At step ``i`` the model emits a lookback probability
row ``phi`` for the node about to be placed at position ``i``; ``phi[k]``
is the edge probability towards the node at position ``i - 1 - k``.
Observed pairs further back than the window carry no model probability and
are left out of the selection scores.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from . import grnn
from .graph import Graph, NodeOrdering, PartialObservation
from .nn import PROB_CLAMP

log = logging.getLogger(__name__)

OBSERVABLE = "observable"
MISSING = "missing"

OUT_OF_WINDOW_RULES = ("half-row-mean", "floor")


@dataclass
class CompletionState:
    """Bookkeeping of a greedy completion between two steps."""

    obs: PartialObservation
    window_m: int
    order: list[int] = field(default_factory=list)
    position: dict[int, int] = field(default_factory=dict)
    remaining_observed: set[int] = field(default_factory=set)
    remaining_missing: set[int] = field(default_factory=set)
    frontier: set[int] = field(default_factory=set)
    # (unplaced observed node, position of a placed observed neighbor), by position
    hit_nodes: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    hit_positions: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    placed: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=bool))

    @classmethod
    def start(cls, obs: PartialObservation, window_m: int) -> "CompletionState":
        return cls(
            obs=obs,
            window_m=window_m,
            remaining_observed=set(range(obs.observed_count)),
            remaining_missing=set(range(obs.observed_count, obs.total_nodes)),
            placed=np.zeros(obs.total_nodes, dtype=bool),
        )

    @property
    def step(self) -> int:
        """Position that the next placed node will take."""
        return len(self.order)

    @property
    def remaining(self) -> int:
        return len(self.remaining_observed) + len(self.remaining_missing)

    def is_observed(self, v: int) -> bool:
        return v < self.obs.observed_count

    def place(self, v: int) -> None:
        """Append ``v`` to the ordering and update the frontier."""
        if v in self.position:
            raise ValueError(f"node {v} already placed")
        self.position[v] = len(self.order)
        self.order.append(v)
        self.placed[v] = True
        if self.is_observed(v):
            self.remaining_observed.remove(v)
            fresh = sorted(self.obs.observed.neighbors(v) & self.remaining_observed)
            if fresh:
                self.hit_nodes = np.concatenate([self.hit_nodes, fresh])
                self.hit_positions = np.concatenate(
                    [self.hit_positions, np.full(len(fresh), self.position[v])])
        else:
            self.remaining_missing.remove(v)
        self.frontier = update_frontier(self, v)

    def window_hits(self) -> tuple[np.ndarray, np.ndarray]:
        """Hits whose node is unplaced and whose position is inside the window.

        Stale entries never become valid again, so they are dropped for good.
        """
        if len(self.hit_nodes):
            keep = (self.hit_positions >= self.step - self.window_m) & ~self.placed[self.hit_nodes]
            self.hit_nodes = self.hit_nodes[keep]
            self.hit_positions = self.hit_positions[keep]
        return self.hit_nodes, self.hit_positions

    def placed_observed_in_window(self) -> list[tuple[int, int]]:
        """``(lookback index, node)`` for placed observed nodes inside the window."""
        i = self.step
        out = []
        for k in range(min(i, self.window_m)):
            u = self.order[i - 1 - k]
            if self.is_observed(u):
                out.append((k, u))
        return out


def update_frontier(state: CompletionState, chosen: int) -> set[int]:
    """Frontier after ``chosen`` has been placed (``state`` already excludes it).

    Observed nodes add their unplaced neighbors; missing nodes only shrink it.
    """
    frontier = set(state.frontier)
    if state.is_observed(chosen):
        frontier |= state.obs.observed.neighbors(chosen)
    return frontier & state.remaining_observed


def select_node_type(state: CompletionState, rng: np.random.Generator) -> str:
    m = len(state.remaining_missing)
    total = m + len(state.remaining_observed)
    if total == 0:
        raise ValueError("no nodes left to place")
    if m == 0:
        return OBSERVABLE
    if m == total:
        return MISSING
    return MISSING if rng.random() < m / total else OBSERVABLE


def score_candidates(state: CompletionState, phi: np.ndarray) -> dict[int, float]:
    """Odds product ``D_v`` over each frontier node's placed in-window neighbors.

    Factors are multiplied in position order, so candidates with the same
    placed neighbors get bitwise-equal scores.
    """
    i = state.step
    scores = dict.fromkeys(sorted(state.frontier), 1.0)
    nodes, positions = state.window_hits()
    if not len(nodes):
        return scores
    odds = phi / (1.0 - phi)
    order = np.argsort(nodes, kind="stable")
    nodes = nodes[order]
    factors = odds[i - 1 - positions[order]]
    starts = np.flatnonzero(np.r_[True, nodes[1:] != nodes[:-1]])
    for v, d in zip(nodes[starts].tolist(), np.multiply.reduceat(factors, starts).tolist()):
        scores[v] = d
    return scores


def observable_likelihood(state: CompletionState, phi: np.ndarray, v: int) -> float:
    """p(O_i; phi) for candidate ``v`` over every in-window observable entry.

    Returns the empty product 1.0 when no observed node is in the window.
    """
    g = state.obs.observed
    like = 1.0
    for k, u in state.placed_observed_in_window():
        like *= phi[k] if g.has_edge(u, v) else 1.0 - phi[k]
    return like


def select_observable_node(state: CompletionState, scores: dict[int, float],
                           rng: np.random.Generator) -> tuple[int, bool]:
    """Pick an observed node; returns ``(node, used_random_fallback)``.

    Nodes outside the frontier have an implicit score of 1: they are drawn
    uniformly when every frontier score is below 1 and join the tie when
    the best frontier score is exactly 1.
    """
    pool = state.remaining_observed
    if not pool:
        raise ValueError("no observable node left")
    has_outside = len(pool) > len(state.frontier)
    best = max(scores.values(), default=0.0)
    if has_outside and best < 1.0:
        outside = sorted(pool - state.frontier)
        return outside[int(rng.integers(len(outside)))], True
    top = sorted(v for v, d in scores.items() if d == best)
    if has_outside and best == 1.0:
        top = sorted(top + sorted(pool - state.frontier))
    return top[int(rng.integers(len(top)))], False


def impute_row(state: CompletionState, v: int, phi: np.ndarray,
               rng: np.random.Generator) -> np.ndarray:
    """Lookback row for ``v`` at position ``state.step``.

    Observed-observed pairs copy G_O; pairs touching a missing node are
    Bernoulli(phi) draws. Entries beyond the window are not represented.
    """
    i = state.step
    valid = min(i, state.window_m)
    row = np.zeros(state.window_m)
    if valid == 0:
        return row
    row[:valid] = rng.random(valid) < phi[:valid]
    if state.is_observed(v):
        back = np.asarray(state.order[i - valid:][::-1])
        known = back < state.obs.observed_count
        adjacent = np.isin(back, list(state.obs.observed.neighbors(v)))
        row[:valid][known] = adjacent[known]
    return row


@dataclass
class StepDecision:
    step: int
    node: int
    node_type: str
    scores: dict[int, float] | None = None
    random_fallback: bool = False

    def to_json(self) -> dict:
        d = {"step": self.step, "node": self.node, "type": self.node_type,
             "random_fallback": self.random_fallback}
        if self.scores is not None:
            d["scores"] = {str(k): v for k, v in self.scores.items()}
        return d


@dataclass
class CompletionResult:
    ordering: NodeOrdering
    phi: np.ndarray  # (n, M); row i is the lookback row used at position i (row 0 unused)
    graph: Graph
    decisions: list[StepDecision] = field(default_factory=list)
    em_trace: list[float] = field(default_factory=list)
    iteration_graphs: list[Graph] = field(default_factory=list)

    def phi_row(self, i: int) -> np.ndarray:
        """Row ``i`` in positional order: entry ``j`` refers to position ``j < i``.

        Positions outside the window are NaN.
        """
        M = self.phi.shape[1]
        out = np.full(i, np.nan)
        k = min(i, M)
        if k:
            out[i - k:] = self.phi[i, :k][::-1]
        return out


def deepnc_l(obs: PartialObservation, params: grnn.ModelParams | None,
             rng: np.random.Generator, record: bool = True) -> CompletionResult:
    """Greedy one-node-per-step completion of ``obs``.

    The observed graph is taken as complete: only pairs touching a missing
    node are imputed. The result contains every edge of ``obs.observed``.
    """
    if params is None:
        raise ValueError("deepnc_l needs trained model parameters")
    if obs.observed_count < 1:
        raise ValueError("need at least one observed node")
    n = obs.total_nodes
    M = params.window_m
    state = CompletionState.start(obs, M)
    gen = grnn.init_state(params, rng)
    phi_rows = np.zeros((n, M))
    edges = set(obs.observed.edges)
    decisions: list[StepDecision] = []

    first = int(rng.integers(n))
    state.place(first)
    row = np.zeros(M)
    if record:
        decisions.append(StepDecision(0, first, OBSERVABLE if state.is_observed(first) else MISSING))
    for i in range(1, n):
        gen = grnn.transition(params, gen, row)
        phi = grnn.edge_probabilities(params, gen)
        phi_rows[i] = phi
        kind = select_node_type(state, rng)
        scores = None
        fallback = False
        if kind == OBSERVABLE:
            scores = score_candidates(state, phi)
            v, fallback = select_observable_node(state, scores, rng)
        else:
            missing = sorted(state.remaining_missing)
            v = missing[int(rng.integers(len(missing)))]
        row = impute_row(state, v, phi, rng)
        for k in np.flatnonzero(row):
            u = state.order[i - 1 - int(k)]
            edges.add((u, v) if u < v else (v, u))
        state.place(v)
        if record:
            decisions.append(StepDecision(i, v, kind, scores, fallback))
    return CompletionResult(NodeOrdering(state.order), phi_rows, Graph(n, edges), decisions)


# ---------------------------------------------------------------------------
# EM over missing observed-pair edges


class PairProbabilities:
    """Edge probabilities for the non-edges of G_O, in lexicographic pair order."""

    __slots__ = ("pairs", "values")

    def __init__(self, pairs: np.ndarray, values: np.ndarray):
        self.pairs = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
        self.values = np.asarray(values, dtype=np.float64).reshape(-1)
        if len(self.pairs) != len(self.values):
            raise ValueError("pairs and values differ in length")

    def __len__(self) -> int:
        return len(self.values)

    def __getitem__(self, pair: tuple[int, int]) -> float:
        u, v = sorted(pair)
        hit = np.flatnonzero((self.pairs[:, 0] == u) & (self.pairs[:, 1] == v))
        if not hit.size:
            raise KeyError(pair)
        return float(self.values[hit[0]])

    def as_dict(self) -> dict[tuple[int, int], float]:
        return {(int(u), int(v)): float(p) for (u, v), p in zip(self.pairs, self.values)}

    def with_values(self, values: np.ndarray) -> "PairProbabilities":
        return PairProbabilities(self.pairs, values)


def observed_non_edges(g: Graph) -> np.ndarray:
    n = g.node_count
    if n < 2:
        return np.zeros((0, 2), dtype=np.int64)
    iu, ju = np.triu_indices(n, 1)
    a = g.adjacency_matrix()
    keep = a[iu, ju] == 0
    return np.stack([iu[keep], ju[keep]], axis=1)


def filter_pair_probs(ordering: NodeOrdering, phi: np.ndarray, pairs: np.ndarray,
                      out_of_window: str = "half-row-mean") -> PairProbabilities:
    """Read the probability of each observed pair off the rows ``phi``.

    For a pair at positions ``p < q`` within the window the value is
    ``phi[q][q - p - 1]``. Wider gaps get half the mean in-window probability
    of row ``q`` (``"half-row-mean"``) or the clamp floor (``"floor"``).
    """
    if out_of_window not in OUT_OF_WINDOW_RULES:
        raise ValueError(f"out_of_window must be one of {OUT_OF_WINDOW_RULES}")
    pairs = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
    n, M = phi.shape
    pos = np.empty(n, dtype=np.int64)
    pos[np.asarray(ordering.order)] = np.arange(n)
    a, b = pos[pairs[:, 0]], pos[pairs[:, 1]]
    lo, hi = np.minimum(a, b), np.maximum(a, b)
    gap = hi - lo
    inside = gap <= M
    values = np.empty(len(pairs))
    values[inside] = phi[hi[inside], gap[inside] - 1]
    if np.any(~inside):
        if out_of_window == "floor":
            values[~inside] = PROB_CLAMP
        else:
            width = np.minimum(np.arange(n), M)
            cols = np.arange(M)[None, :] < width[:, None]
            sums = (phi * cols).sum(axis=1)
            means = np.divide(sums, width, out=np.zeros(n), where=width > 0)
            values[~inside] = np.maximum(0.5 * means[hi[~inside]], PROB_CLAMP)
    return PairProbabilities(pairs, np.clip(values, PROB_CLAMP, 1.0 - PROB_CLAMP))


def sample_missing_edges(pz: PairProbabilities, rng: np.random.Generator) -> list[tuple[int, int]]:
    hit = rng.random(len(pz)) < pz.values
    return [(int(u), int(v)) for u, v in pz.pairs[hit]]


@dataclass
class EmConfig:
    sample_count: int = 10
    threshold: float = 1e-3
    max_iterations: int = 6
    seed: int = 0
    out_of_window: str = "half-row-mean"

    def __post_init__(self):
        if self.sample_count < 1:
            raise ValueError("sample_count must be at least 1")
        if self.threshold <= 0:
            raise ValueError("threshold must be positive")
        if self.max_iterations < 0:
            raise ValueError("max_iterations must be non-negative")
        if self.out_of_window not in OUT_OF_WINDOW_RULES:
            raise ValueError(f"out_of_window must be one of {OUT_OF_WINDOW_RULES}")


def _augmented(obs: PartialObservation, extra: list[tuple[int, int]]) -> PartialObservation:
    if not extra:
        return obs
    return PartialObservation(obs.observed.with_edges(extra), obs.missing_node_count)


def deepnc_em(obs: PartialObservation, params: grnn.ModelParams, cfg: EmConfig,
              rng: np.random.Generator, record_iterations: bool = False) -> CompletionResult:
    """EM completion that also infers edges missing between observed nodes.

    With ``record_iterations`` the result's ``iteration_graphs[t]`` holds the
    completion obtained by stopping after ``t`` EM iterations (entry 0 is
    the initial greedy run).
    """
    pairs = observed_non_edges(obs.observed)
    # separate stream so recording snapshots leaves the main result unchanged
    probes = rng.spawn(1)[0]
    first = deepnc_l(obs, params, rng, record=not len(pairs))
    if not len(pairs):
        return first
    pz = filter_pair_probs(first.ordering, first.phi, pairs, cfg.out_of_window)
    trace: list[float] = []
    snapshots = [first.graph] if record_iterations else []
    for t in range(cfg.max_iterations):
        acc = np.zeros(len(pz))
        for child in rng.spawn(cfg.sample_count):
            sample = _augmented(obs, sample_missing_edges(pz, child))
            res = deepnc_l(sample, params, child, record=False)
            acc += filter_pair_probs(res.ordering, res.phi, pairs, cfg.out_of_window).values
        new = pz.with_values(acc / cfg.sample_count)
        delta = float(np.linalg.norm(new.values - pz.values))
        trace.append(delta)
        pz = new
        log.debug("EM iteration %d: |dPhi_Z| = %.6g", t + 1, delta)
        if record_iterations:
            probe = probes.spawn(1)[0]
            snap = deepnc_l(_augmented(obs, sample_missing_edges(pz, probe)), params, probe,
                            record=False)
            snapshots.append(snap.graph)
        if delta < cfg.threshold:
            break
    final = deepnc_l(_augmented(obs, sample_missing_edges(pz, rng)), params, rng)
    final.em_trace = trace
    final.iteration_graphs = snapshots
    return final
