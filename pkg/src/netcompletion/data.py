"""Synthetic generators, RN/FF sampling, edge deletion and dataset manifests."""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from os import PathLike
from pathlib import Path

import numpy as np

from .graph import Graph, PartialObservation, read_edge_list, write_edge_list

SAMPLERS = ("RN", "FF")


def _target_count(fraction: float, total: int) -> int:
    if not (0.0 < fraction <= 1.0):
        raise ValueError(f"fraction must be in (0, 1], got {fraction}")
    # round first so that e.g. 0.7 * 100 gives 70, not 71
    return min(total, math.ceil(round(fraction * total, 9)))


def rn_sample(g: Graph, fraction: float, rng: np.random.Generator) -> tuple[Graph, list[int]]:
    """Uniform node sample; returns the induced subgraph and ``kept[new] = old``."""
    k = _target_count(fraction, g.node_count)
    chosen = rng.choice(g.node_count, size=k, replace=False)
    return g.induced_subgraph(chosen.tolist())


def ff_sample(g: Graph, fraction: float, burn_prob: float,
              rng: np.random.Generator) -> tuple[Graph, list[int]]:
    """Forest-fire node sample of exactly ``ceil(fraction * n)`` nodes.

    Each burning node ignites a geometric number (mean ``p / (1 - p)``) of
    its unburned neighbors; the fire is reseeded uniformly when it dies out.
    """
    k = _target_count(fraction, g.node_count)
    if not (0.0 <= burn_prob < 1.0):
        raise ValueError(f"burn_prob must be in [0, 1), got {burn_prob}")
    burned = np.zeros(g.node_count, dtype=bool)
    count = 0
    queue: list[int] = []
    while count < k:
        if not queue:
            seed = int(rng.choice(np.flatnonzero(~burned)))
            burned[seed] = True
            count += 1
            queue.append(seed)
            continue
        u = queue.pop(0)
        fresh = [w for w in sorted(g.neighbors(u)) if not burned[w]]
        if not fresh:
            continue
        spread = int(rng.geometric(1.0 - burn_prob)) - 1
        spread = min(spread, len(fresh), k - count)
        if spread <= 0:
            continue
        for idx in rng.choice(len(fresh), size=spread, replace=False):
            w = fresh[int(idx)]
            burned[w] = True
            queue.append(w)
        count += spread
    return g.induced_subgraph(np.flatnonzero(burned).tolist())


def delete_edges(g: Graph, keep_fraction: float, rng: np.random.Generator) -> Graph:
    """Keep ``ceil(keep_fraction * |E|)`` uniformly chosen edges."""
    edges = g.sorted_edges()
    if not edges:
        _target_count(keep_fraction, 1)
        return g
    k = _target_count(keep_fraction, len(edges))
    idx = np.sort(rng.choice(len(edges), size=k, replace=False))
    return Graph(g.node_count, [edges[i] for i in idx], g.labels)


@dataclass(frozen=True)
class CorruptionSpec:
    node_fraction: float = 0.7
    edge_fraction: float = 0.9
    sampler: str = "RN"
    ff_burn_prob: float = 0.7
    seed: int = 0

    def __post_init__(self):
        for name in ("node_fraction", "edge_fraction"):
            v = getattr(self, name)
            if not (0.0 < v <= 1.0):
                raise ValueError(f"{name} must be in (0, 1], got {v}")
        if self.sampler not in SAMPLERS:
            raise ValueError(f"sampler must be one of {SAMPLERS}, got {self.sampler!r}")


@dataclass
class Corruption:
    observation: PartialObservation
    alignment: list[int]  # alignment[observed id] = node id in the true graph


def corrupt(g_t: Graph, spec: CorruptionSpec) -> Corruption:
    """Node-sample ``g_t``, then drop edges from the induced subgraph."""
    rng = np.random.default_rng(spec.seed)
    if spec.sampler == "RN":
        sub, kept = rn_sample(g_t, spec.node_fraction, rng)
    else:
        sub, kept = ff_sample(g_t, spec.node_fraction, spec.ff_burn_prob, rng)
    observed = delete_edges(sub, spec.edge_fraction, rng)
    return Corruption(PartialObservation(observed, g_t.node_count - len(kept)), kept)


# ---------------------------------------------------------------------------
# generators


def generate_ba(n: int, c: int, rng: np.random.Generator) -> Graph:
    """Preferential attachment grown from a ``c``-clique, ``c`` links per new node."""
    if c < 1:
        raise ValueError("attach count must be at least 1")
    if n <= c:
        raise ValueError(f"need n > c, got n={n}, c={c}")
    edges = [(u, v) for u in range(c) for v in range(u + 1, c)]
    degree = np.zeros(n, dtype=np.float64)
    degree[:c] = c - 1
    for new in range(c, n):
        w = degree[:new]
        total = w.sum()
        if total == 0:
            targets = rng.choice(new, size=c, replace=False)
        else:
            targets = rng.choice(new, size=c, replace=False, p=w / total)
        for t in targets:
            edges.append((int(t), new))
        degree[targets] += 1
        degree[new] = c
    return Graph(n, edges)


def generate_planted_partition(n: int, k: int, p_in: float, p_out: float,
                               rng: np.random.Generator) -> Graph:
    """Equal-size block model, reduced to its largest connected component."""
    if k < 1 or n < k:
        raise ValueError("need 1 <= k <= n")
    for name, p in (("p_in", p_in), ("p_out", p_out)):
        if not (0.0 < p < 1.0):
            raise ValueError(f"{name} must be in (0, 1)")
    if p_in < p_out:
        raise ValueError("p_in must be at least p_out")
    block = (np.arange(n) * k) // n
    iu, ju = np.triu_indices(n, 1)
    p = np.where(block[iu] == block[ju], p_in, p_out)
    keep = rng.random(iu.size) < p
    return Graph(n, zip(iu[keep].tolist(), ju[keep].tolist())).largest_component()


def planted_blocks(n: int, k: int) -> np.ndarray:
    return (np.arange(n) * k) // n


# ---------------------------------------------------------------------------
# manifests


@dataclass
class DatasetManifest:
    """Graph files with roles ``train`` (G_I) or ``test`` (G_T)."""

    graphs: list[dict] = field(default_factory=list)
    generator: dict | None = None
    seeds: dict = field(default_factory=dict)

    def __post_init__(self):
        for entry in self.graphs:
            if entry.get("role") not in ("train", "test"):
                raise ValueError(f"graph entry {entry} has no valid role")

    def paths(self, role: str) -> list[str]:
        return [e["path"] for e in self.graphs if e["role"] == role]

    def validate(self) -> None:
        if not self.paths("test"):
            raise ValueError("manifest must list at least one test graph")

    def save(self, path: str | PathLike) -> None:
        with open(path, "w") as fh:
            json.dump(asdict(self), fh, indent=1, sort_keys=True)
            fh.write("\n")

    @classmethod
    def load(cls, path: str | PathLike) -> "DatasetManifest":
        with open(path) as fh:
            doc = json.load(fh)
        base = Path(path).parent
        graphs = []
        for e in doc.get("graphs", []):
            p = Path(e["path"])
            graphs.append({**e, "path": str(p if p.is_absolute() else base / p)})
        return cls(graphs, doc.get("generator"), doc.get("seeds", {}))

    def load_graphs(self, role: str) -> list[Graph]:
        """Read graphs of ``role``, keeping each one's largest connected component."""
        return [read_edge_list(p).largest_component() for p in self.paths(role)]


def write_corpus(out_dir: str | PathLike, train: list[Graph], test: list[Graph],
                 generator: dict | None = None, seeds: dict | None = None) -> DatasetManifest:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    entries = []
    for role, graphs in (("train", train), ("test", test)):
        for i, g in enumerate(graphs):
            name = f"{role}_{i:04d}.edges"
            write_edge_list(g, out / name)
            entries.append({"path": name, "role": role})
    manifest = DatasetManifest(entries, generator, seeds or {})
    manifest.save(out / "manifest.json")
    return manifest
