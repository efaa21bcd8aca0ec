"""Experiment configuration, method dispatch, repetition runs and aggregation."""
from __future__ import annotations

import csv
import hashlib
import json
import time
from dataclasses import asdict, dataclass, field
from os import PathLike
from pathlib import Path

import numpy as np

from . import completion, data, grnn, metrics
from .graph import Graph, PartialObservation

METHODS = ("deepnc-l", "deepnc-em", "vgraphrnn", "random-attach")

METRIC_COLUMNS = ("repetition", "graph", "method", "cost", "normalized", "runtime_s")
EM_COLUMNS = ("repetition", "graph", "iteration", "cost", "normalized")
SUMMARY_COLUMNS = ("method", "mean", "sd", "count")
SCALE_COLUMNS = ("nodes", "observed_nodes", "repetition", "runtime_s")


def derive_seed(*keys: int) -> int:
    """Stable 63-bit seed for a tuple of integer keys."""
    state = np.random.SeedSequence([int(k) for k in keys]).generate_state(2, np.uint32)
    return int((int(state[0]) << 31) ^ int(state[1])) & (2**63 - 1)


def random_attach_complete(obs: PartialObservation, mean_degree: float,
                           rng: np.random.Generator) -> Graph:
    """Baseline: missing nodes link uniformly to earlier nodes.

    The number of added edges tops the graph up to ``mean_degree * n / 2``
    and is spread as evenly as possible over the missing nodes.
    """
    n_obs = obs.observed_count
    m = obs.missing_node_count
    if m == 0:
        return obs.observed
    n = n_obs + m
    budget = max(0, round(mean_degree * n / 2) - obs.observed.edge_count)
    share = np.full(m, budget // m)
    share[: budget % m] += 1
    edges = list(obs.observed.edges)
    for k in range(m):
        v = n_obs + k
        count = min(int(share[k]), v)
        if count:
            for u in rng.choice(v, size=count, replace=False):
                edges.append((int(u), v))
    return Graph(n, edges)


def mean_degree(graphs: list[Graph]) -> float:
    if not graphs:
        raise ValueError("need at least one graph")
    return float(np.mean([2.0 * g.edge_count / g.node_count for g in graphs]))


@dataclass
class ScaleConfig:
    attach_count: int = 2
    sizes: list[int] = field(default_factory=lambda: list(range(200, 2001, 200)))
    repetitions: int = 10
    node_fraction: float = 0.7
    train_graphs: int = 20
    train_batches: int = 100
    train_size: int = 200

    def __post_init__(self):
        if len(set(self.sizes)) < 3:
            raise ValueError("scale benchmark needs at least three distinct sizes")
        if min(self.sizes) <= self.attach_count:
            raise ValueError("every size must exceed attach_count")
        if self.repetitions < 1:
            raise ValueError("repetitions must be at least 1")


@dataclass
class ExperimentConfig:
    manifest: str | None = None
    corruption: data.CorruptionSpec = field(default_factory=data.CorruptionSpec)
    train: grnn.TrainConfig = field(default_factory=grnn.TrainConfig)
    em: completion.EmConfig = field(default_factory=completion.EmConfig)
    methods: list[str] = field(default_factory=lambda: list(METHODS))
    repetitions: int = 10
    output_dir: str = "runs"
    seed: int = 0
    checkpoint: str | None = None
    test_index: int = 0
    record_em_iterations: bool = False
    scale: ScaleConfig = field(default_factory=ScaleConfig)

    def __post_init__(self):
        if self.repetitions < 1:
            raise ValueError("repetitions must be at least 1")
        unknown = [m for m in self.methods if m not in METHODS]
        if unknown or not self.methods:
            raise ValueError(f"methods must be a non-empty subset of {METHODS}, got {self.methods}")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, doc: dict) -> "ExperimentConfig":
        doc = dict(doc)
        sub = {"corruption": data.CorruptionSpec, "train": grnn.TrainConfig,
               "em": completion.EmConfig, "scale": ScaleConfig}
        for key, kind in sub.items():
            if key in doc:
                doc[key] = kind(**doc[key])
        try:
            return cls(**doc)
        except TypeError as exc:
            raise ValueError(f"bad experiment config: {exc}") from None

    @classmethod
    def load(cls, path: str | PathLike) -> "ExperimentConfig":
        with open(path) as fh:
            cfg = cls.from_dict(json.load(fh))
        base = Path(path).parent
        for key in ("manifest", "checkpoint"):
            p = getattr(cfg, key)
            if p is not None and not Path(p).is_absolute():
                setattr(cfg, key, str(base / p))
        return cfg

    def save(self, path: str | PathLike) -> None:
        write_json(path, self.to_dict())

    def config_hash(self) -> str:
        """Hash of every field except the output location."""
        doc = self.to_dict()
        doc.pop("output_dir")
        blob = json.dumps(doc, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    def validate_files(self) -> None:
        for key in ("manifest", "checkpoint"):
            p = getattr(self, key)
            if p is not None and not Path(p).is_file():
                raise FileNotFoundError(f"{key} file not found: {p}")


def write_json(path: str | PathLike, doc) -> None:
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=1, sort_keys=True)
        fh.write("\n")


def write_csv(path: str | PathLike, columns: tuple[str, ...], rows: list[dict]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(columns), lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: _fmt(r[k]) for k in columns})


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return v


def read_csv(path: str | PathLike) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


# ---------------------------------------------------------------------------
# running methods


def run_method(method: str, obs: PartialObservation, params: grnn.ModelParams | None,
               em_cfg: completion.EmConfig, train_mean_degree: float, rng: np.random.Generator,
               record_iterations: bool = False):
    """Complete ``obs`` with ``method``; returns ``(graph, CompletionResult or None)``."""
    if method == "random-attach":
        return random_attach_complete(obs, train_mean_degree, rng), None
    if params is None:
        raise ValueError(f"method {method} needs a trained model")
    if method == "vgraphrnn":
        return grnn.vgraphrnn_complete(params, obs, rng), None
    if method == "deepnc-l":
        res = completion.deepnc_l(obs, params, rng)
    elif method == "deepnc-em":
        res = completion.deepnc_em(obs, params, em_cfg, rng, record_iterations)
    else:
        raise ValueError(f"unknown method {method!r}")
    return res.graph, res


def run_repetitions(cfg: ExperimentConfig, params: grnn.ModelParams | None, truth: Graph,
                    train_mean_degree: float, graph_id: str = "test_0000",
                    corruption: data.CorruptionSpec | None = None):
    """Corrupt ``truth`` once per repetition and score every method against it.

    Returns ``(metric_rows, em_iteration_rows)``.
    """
    spec = corruption or cfg.corruption
    rows, em_rows = [], []
    for rep in range(cfg.repetitions):
        rep_spec = data.CorruptionSpec(spec.node_fraction, spec.edge_fraction, spec.sampler,
                                       spec.ff_burn_prob, derive_seed(cfg.seed, spec.seed, rep))
        obs = data.corrupt(truth, rep_spec).observation
        for method in cfg.methods:
            rng = np.random.default_rng(derive_seed(cfg.seed, rep, 1 + METHODS.index(method)))
            t0 = time.perf_counter()
            g, res = run_method(method, obs, params, cfg.em, train_mean_degree, rng,
                                cfg.record_em_iterations)
            elapsed = time.perf_counter() - t0
            ged = metrics.approximate_ged(g, truth)
            rows.append({"repetition": rep, "graph": graph_id, "method": method,
                         "cost": ged.cost, "normalized": ged.normalized, "runtime_s": elapsed})
            if res is not None and res.iteration_graphs:
                for t, snap in enumerate(res.iteration_graphs):
                    sg = metrics.approximate_ged(snap, truth)
                    em_rows.append({"repetition": rep, "graph": graph_id, "iteration": t,
                                    "cost": sg.cost, "normalized": sg.normalized})
    return rows, em_rows


def summarize(rows: list[dict], key: str = "method") -> list[dict]:
    """Mean and sample standard deviation (n - 1) of ``normalized`` per ``key``."""
    groups: dict = {}
    for r in rows:
        groups.setdefault(r[key], []).append(float(r["normalized"]))
    out = []
    for k, vals in groups.items():
        v = np.asarray(vals)
        sd = float(v.std(ddof=1)) if len(v) > 1 else 0.0
        out.append({key: k, "mean": float(v.mean()), "sd": sd, "count": len(v)})
    return out


def format_table(summary: list[dict]) -> str:
    width = max(len(str(s["method"])) for s in summary)
    return "\n".join(f"{s['method']:<{width}}  {s['mean']:.4f} ± {s['sd']:.4f}" for s in summary)


# ---------------------------------------------------------------------------
# scaling


def loglog_slope(sizes, times) -> float:
    x = np.log(np.asarray(sizes, dtype=np.float64))
    y = np.log(np.asarray(times, dtype=np.float64))
    if len(np.unique(x)) < 3:
        raise ValueError("slope fit needs at least three distinct sizes")
    slope, _ = np.polyfit(x, y, 1)
    return float(slope)


def scale_training_model(sc: ScaleConfig, seed: int, hidden_dim: int = 32,
                         layer_count: int = 1) -> grnn.ModelParams:
    rng = np.random.default_rng(derive_seed(seed, 99))
    graphs = [data.generate_ba(sc.train_size, sc.attach_count, rng) for _ in range(sc.train_graphs)]
    cfg = grnn.TrainConfig(total_batches=sc.train_batches, seed=derive_seed(seed, 98),
                           hidden_dim=hidden_dim, layer_count=layer_count, log_every=0)
    return grnn.train(graphs, cfg).params


def run_scale_bench(sc: ScaleConfig, params: grnn.ModelParams, em_cfg: completion.EmConfig,
                    seed: int) -> tuple[list[dict], float]:
    """Time DeepNC-EM on corrupted B-A graphs; returns rows and the fitted slope."""
    rows = []
    for n in sc.sizes:
        g = data.generate_ba(n, sc.attach_count, np.random.default_rng(derive_seed(seed, n)))
        for rep in range(sc.repetitions):
            spec = data.CorruptionSpec(sc.node_fraction, 1.0, "RN", seed=derive_seed(seed, n, rep))
            obs = data.corrupt(g, spec).observation
            rng = np.random.default_rng(derive_seed(seed, n, rep, 1))
            t0 = time.perf_counter()
            completion.deepnc_em(obs, params, em_cfg, rng)
            rows.append({"nodes": n, "observed_nodes": obs.observed_count, "repetition": rep,
                         "runtime_s": time.perf_counter() - t0})
    sizes = sorted({r["observed_nodes"] for r in rows})
    means = [np.mean([r["runtime_s"] for r in rows if r["observed_nodes"] == s]) for s in sizes]
    return rows, loglog_slope(sizes, means)


def completion_report(res, cfg_hash: str, seed: int, method: str, config: dict) -> dict:
    doc = {"method": method, "config_hash": cfg_hash, "seed": seed, "config": config}
    if res is None:
        return doc
    doc.update({
        "ordering": list(res.ordering.order),
        "edges": [list(e) for e in res.graph.sorted_edges()],
        "decisions": [d.to_json() for d in res.decisions],
        "em_trace": res.em_trace,
    })
    return doc

