"""Simplified GraphRNN: a GRU stack over lookback rows with an MLP edge head.

Rows are fed in lookback form of fixed width ``window_m``: entry ``k`` of
the input (or of an output probability row) refers to the node placed
``k + 1`` positions earlier. Pairs further back than the window are
outside the model.
"""
from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field
from os import PathLike
from typing import Sequence

import numpy as np

from . import nn
from .graph import (
    AdjacencySequence,
    Graph,
    NodeOrdering,
    PartialObservation,
    UNKNOWN,
    encode_sequence,
    lookback_window,
    random_bfs_ordering,
)

log = logging.getLogger(__name__)

MIN_WINDOW = 8
H0_SCALE = 0.01


@dataclass
class ModelParams:
    gru: nn.GruStackParams
    mlp: nn.MlpParams
    window_m: int

    def __post_init__(self):
        if self.gru.input_dim != self.window_m or self.mlp.output_dim != self.window_m:
            raise ValueError("GRU input width and MLP output width must equal window_m")
        if self.mlp.input_dim != self.gru.hidden_dim:
            raise ValueError("MLP input width must equal the GRU hidden width")

    @property
    def hidden_dim(self) -> int:
        return self.gru.hidden_dim

    @property
    def layer_count(self) -> int:
        return self.gru.layer_count

    def arrays(self) -> dict[str, np.ndarray]:
        return nn.named_arrays(self.gru, self.mlp)

    def copy(self) -> "ModelParams":
        gru, mlp = nn.from_named_arrays({k: v.copy() for k, v in self.arrays().items()})
        return ModelParams(gru, mlp, self.window_m)

    @classmethod
    def init(cls, window_m: int, rng: np.random.Generator, hidden_dim: int = 128,
             layer_count: int = 4, mlp_hidden: int = 64) -> "ModelParams":
        gru = nn.GruStackParams.init(window_m, hidden_dim, layer_count, rng)
        mlp = nn.MlpParams.init(hidden_dim, window_m, rng, hidden=mlp_hidden)
        return cls(gru, mlp, window_m)

    @classmethod
    def zeros(cls, window_m: int, hidden_dim: int = 4, layer_count: int = 1,
              mlp_hidden: int = 4) -> "ModelParams":
        gru = nn.GruStackParams.zeros(window_m, hidden_dim, layer_count)
        mlp = nn.MlpParams.init(hidden_dim, window_m, np.random.default_rng(0), hidden=mlp_hidden, scale=0.0)
        return cls(gru, mlp, window_m)


@dataclass
class GenerationState:
    """Hidden states after consuming ``step - 1`` rows.

    :func:`edge_probabilities` on this state gives the distribution of row
    ``step`` (1-based), once at least one row has been consumed.
    """

    step: int
    hidden: list[np.ndarray]


@dataclass
class TrainConfig:
    batch_size: int = 32
    total_batches: int = 2000  # 32,000 in the full-scale setup
    learning_rate: float = 1e-3
    seed: int = 0
    orderings_per_graph: int = 1
    layer_count: int = 4
    hidden_dim: int = 128
    mlp_hidden: int = 64
    window_orderings: int = 4
    window_m: int | None = None
    log_every: int = 100

    def __post_init__(self):
        for name in ("batch_size", "learning_rate", "orderings_per_graph", "layer_count",
                     "hidden_dim", "mlp_hidden", "window_orderings"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.total_batches < 0:
            raise ValueError("total_batches must be non-negative")


@dataclass
class TrainResult:
    params: ModelParams
    losses: list[float] = field(default_factory=list)
    config: TrainConfig | None = None

    def report(self) -> dict:
        return {
            "window_m": self.params.window_m,
            "config": asdict(self.config) if self.config else None,
            "loss_trace": self.losses,
        }


# ---------------------------------------------------------------------------
# window fitting


def sample_orderings(graphs: Sequence[Graph], rng: np.random.Generator, per_graph: int
                     ) -> list[list[NodeOrdering]]:
    return [[random_bfs_ordering(g, rng) for _ in range(per_graph)] for g in graphs]


def fit_window(graphs: Sequence[Graph], rng: np.random.Generator, per_graph: int = 4,
               floor: int = MIN_WINDOW) -> int:
    """Largest BFS bandwidth over sampled orderings, at least ``floor``."""
    if not graphs:
        raise ValueError("fit_window needs at least one training graph")
    best = 0
    for g, orderings in zip(graphs, sample_orderings(graphs, rng, per_graph)):
        for o in orderings:
            best = max(best, encode_sequence(g, o).bandwidth())
    return max(best, floor)


# ---------------------------------------------------------------------------
# stepwise inference


def init_state(params: ModelParams, rng: np.random.Generator, scale: float = H0_SCALE) -> GenerationState:
    hidden = [scale * rng.standard_normal(params.hidden_dim) for _ in range(params.layer_count)]
    return GenerationState(1, hidden)


def zero_state(params: ModelParams) -> GenerationState:
    return GenerationState(1, [np.zeros(params.hidden_dim) for _ in range(params.layer_count)])


def transition(params: ModelParams, state: GenerationState, row: np.ndarray) -> GenerationState:
    """Consume one lookback row of width ``window_m``."""
    row = np.asarray(row, dtype=np.float64)
    if row.shape != (params.window_m,):
        raise ValueError(f"row must have width {params.window_m}, got shape {row.shape}")
    return GenerationState(state.step + 1, nn.gru_forward(params.gru, state.hidden, row))


def edge_probabilities(params: ModelParams, state: GenerationState) -> np.ndarray:
    """Lookback probability row for the next node (width ``window_m``)."""
    return nn.mlp_forward(params.mlp, state.hidden[-1])


def row_log_factor(phi: np.ndarray, row: np.ndarray) -> float:
    """log p(row; phi) over the entries of a lookback ``row`` inside ``phi``'s width.

    ``row`` holds 0/1 values in lookback order; its length is the number
    of valid entries.
    """
    k = min(len(row), len(phi))
    r = np.asarray(row[:k], dtype=np.float64)
    p = phi[:k]
    return float(np.sum(r * np.log(p) + (1.0 - r) * np.log1p(-p)))


def sequence_log_likelihood(params: ModelParams, seq: AdjacencySequence,
                            state: GenerationState | None = None) -> float:
    """Teacher-forced log-likelihood of a fully known sequence.

    Only pairs inside the window contribute. ``state`` defaults to the zero
    initial state.
    """
    if not seq.fully_known:
        raise ValueError("sequence contains UNKNOWN entries")
    state = state or zero_state(params)
    M = params.window_m
    total = 0.0
    for i in range(len(seq)):
        if i > 0:
            phi = edge_probabilities(params, state)
            total += row_log_factor(phi, seq[i][::-1])
        state = transition(params, state, lookback_window(seq[i], M))
    return total


def sample_graph(params: ModelParams, n: int, rng: np.random.Generator,
                 state: GenerationState | None = None) -> Graph:
    """Generate an ``n``-node graph; node ids are generation positions."""
    if n < 1:
        raise ValueError("n must be at least 1")
    M = params.window_m
    state = state or init_state(params, rng)
    state = transition(params, state, np.zeros(M))
    edges = []
    for i in range(1, n):
        phi = edge_probabilities(params, state)
        valid = min(i, M)
        draw = (rng.random(valid) < phi[:valid]).astype(np.float64)
        for k in np.flatnonzero(draw):
            edges.append((i - 1 - int(k), i))
        row = np.zeros(M)
        row[:valid] = draw
        if i < n - 1:
            state = transition(params, state, row)
    return Graph(n, edges)


def vgraphrnn_complete(params: ModelParams, obs: PartialObservation, rng: np.random.Generator) -> Graph:
    """Teacher-force a random BFS ordering of G_O, then sample the missing rows."""
    g_o = obs.observed
    n_obs, n = obs.observed_count, obs.total_nodes
    if obs.missing_node_count == 0:
        return g_o
    M = params.window_m
    if n_obs:
        order = list(random_bfs_ordering(g_o, rng).order)
    else:
        order = []
    order += list(range(n_obs, n))
    state = init_state(params, rng)
    state = transition(params, state, np.zeros(M))
    edges = list(g_o.edges)
    for i in range(1, n):
        u = order[i]
        valid = min(i, M)
        if i < n_obs:
            prev = order[i - valid:i][::-1]
            row = np.zeros(M)
            row[:valid] = [1.0 if g_o.has_edge(u, v) else 0.0 for v in prev]
        else:
            phi = edge_probabilities(params, state)
            row = np.zeros(M)
            row[:valid] = rng.random(valid) < phi[:valid]
            for k in np.flatnonzero(row):
                edges.append((order[i - 1 - int(k)], u))
        if i < n - 1:
            state = transition(params, state, row)
    return Graph(n, edges)


# ---------------------------------------------------------------------------
# training


def _sequence_tensors(seq: AdjacencySequence, M: int):
    """Teacher-forcing inputs, targets and masks for one sequence, each (n-1, M)."""
    n = len(seq)
    wins = seq.windows(M)
    inputs = np.zeros((n - 1, M))
    inputs[1:] = wins[1:n - 1]
    targets = wins[1:]
    valid = np.minimum(np.arange(1, n), M)
    mask = (np.arange(M)[None, :] < valid[:, None]).astype(np.float64)
    return inputs, targets, mask


def _batch(seqs: list[AdjacencySequence], M: int):
    parts = [_sequence_tensors(s, M) for s in seqs]
    T = max(p[0].shape[0] for p in parts)
    B = len(parts)
    x = np.zeros((T, B, M))
    y = np.zeros((T, B, M))
    mask = np.zeros((T, B, M))
    for b, (xi, yi, mi) in enumerate(parts):
        t = xi.shape[0]
        x[:t, b], y[:t, b], mask[:t, b] = xi, yi, mi
    return x, y, mask


def batch_loss_and_grads(params: ModelParams, seqs: list[AdjacencySequence], h0: list[np.ndarray]):
    x, y, mask = _batch(seqs, params.window_m)
    rec = nn.sequence_forward(params.gru, params.mlp, h0, x)
    loss = nn.bce_loss(rec.probs, y, mask)
    grads = nn.backward(params.gru, params.mlp, rec, y, mask)
    return loss, grads


def train(graphs: Sequence[Graph], cfg: TrainConfig) -> TrainResult:
    """Teacher-forced minibatch training on fresh BFS orderings of ``graphs``."""
    graphs = [g for g in graphs if g.node_count >= 2]
    if not graphs:
        raise ValueError("train needs at least one graph with two or more nodes")
    rng = np.random.default_rng(cfg.seed)
    M = cfg.window_m or fit_window(graphs, rng, cfg.window_orderings)
    params = ModelParams.init(M, rng, cfg.hidden_dim, cfg.layer_count, cfg.mlp_hidden)
    result = TrainResult(params, [], cfg)
    if cfg.total_batches == 0:
        return result
    adam = nn.AdamState(learning_rate=cfg.learning_rate)
    arrays = params.arrays()
    pool: list[int] = []
    for b in range(cfg.total_batches):
        seqs = []
        while len(seqs) < cfg.batch_size:
            if not pool:
                pool = [int(i) for i in rng.permutation(len(graphs))] * cfg.orderings_per_graph
            g = graphs[pool.pop()]
            seqs.append(encode_sequence(g, random_bfs_ordering(g, rng)))
        h0 = [H0_SCALE * rng.standard_normal((len(seqs), params.hidden_dim))
              for _ in range(params.layer_count)]
        loss, grads = batch_loss_and_grads(params, seqs, h0)
        nn.adam_step(adam, arrays, grads)
        result.losses.append(loss)
        if cfg.log_every and (b + 1) % cfg.log_every == 0:
            log.info("batch %d/%d loss %.5f", b + 1, cfg.total_batches, loss)
    return result


# ---------------------------------------------------------------------------
# persistence


def save_model(path: str | PathLike, params: ModelParams, config: TrainConfig | None = None) -> None:
    meta = {
        "window_m": params.window_m,
        "layer_count": params.layer_count,
        "hidden_dim": params.hidden_dim,
        "mlp_hidden": params.mlp.w1.shape[1],
        "train_config": asdict(config) if config else None,
    }
    nn.save_checkpoint(path, params.arrays(), meta)


def load_model(path: str | PathLike) -> tuple[ModelParams, dict]:
    arrays, meta = nn.load_checkpoint(path)
    gru, mlp = nn.from_named_arrays(arrays)
    params = ModelParams(gru, mlp, int(meta["window_m"]))
    if params.layer_count != meta["layer_count"] or params.hidden_dim != meta["hidden_dim"]:
        raise ValueError(f"{path}: tensor shapes disagree with recorded dimensions")
    return params, meta


def write_train_report(path: str | PathLike, result: TrainResult, extra: dict | None = None) -> None:
    doc = result.report()
    if extra:
        doc.update(extra)
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=1, sort_keys=True)
        fh.write("\n")
