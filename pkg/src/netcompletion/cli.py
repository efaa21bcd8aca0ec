"""Command-line entry point: ``netcompletion {train,complete,evaluate,scale-bench,generate}``.

Output files:
  train        model.ckpt.json, train_report.json
  complete     completion_<method>.json, completed_<method>.edges
  evaluate     metrics.csv (repetition,graph,method,cost,normalized,runtime_s),
               summary.csv (method,mean,sd,count), summary.json,
               em_iterations.csv (repetition,graph,iteration,cost,normalized) if recorded
  scale-bench  scale.csv (nodes,observed_nodes,repetition,runtime_s), scale.json
  generate     <role>_NNNN.edges, manifest.json
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import data, experiments as ex, grnn
from .graph import Graph, PartialObservation, read_edge_list, write_edge_list

log = logging.getLogger("netcompletion")

CHECKPOINT_NAME = "model.ckpt.json"


def _out(cfg: ex.ExperimentConfig) -> Path:
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _manifest(cfg: ex.ExperimentConfig) -> data.DatasetManifest:
    if cfg.manifest is None:
        raise ValueError("config has no manifest")
    return data.DatasetManifest.load(cfg.manifest)


def _checkpoint_path(cfg: ex.ExperimentConfig) -> Path:
    return Path(cfg.checkpoint) if cfg.checkpoint else Path(cfg.output_dir) / CHECKPOINT_NAME


def _stamp(cfg: ex.ExperimentConfig) -> dict:
    return {"config_hash": cfg.config_hash(), "seed": cfg.seed,
            "train_seed": cfg.train.seed, "corruption_seed": cfg.corruption.seed,
            "em_seed": cfg.em.seed}


def cmd_train(cfg: ex.ExperimentConfig) -> Path:
    cfg.validate_files()
    graphs = _manifest(cfg).load_graphs("train")
    if not graphs:
        raise ValueError("manifest lists no training graphs")
    result = grnn.train(graphs, cfg.train)
    out = _out(cfg)
    ckpt = out / CHECKPOINT_NAME
    grnn.save_model(ckpt, result.params, cfg.train)
    grnn.write_train_report(out / "train_report.json", result,
                            {**_stamp(cfg), "train_mean_degree": ex.mean_degree(graphs)})
    return ckpt


def cmd_complete(cfg: ex.ExperimentConfig, checkpoint: str | None, graph_path: str,
                 missing: int) -> list[Path]:
    """Complete an observed edge list with ``missing`` extra nodes, per configured method."""
    if missing < 0:
        raise ValueError("missing node count must be non-negative")
    observed = read_edge_list(graph_path)
    obs = PartialObservation(observed, missing)
    params = None
    if any(m != "random-attach" for m in cfg.methods):
        params, _ = grnn.load_model(checkpoint or _checkpoint_path(cfg))
    if "random-attach" in cfg.methods:
        if cfg.manifest is None:
            raise ValueError("random-attach needs a manifest with training graphs")
        deg = ex.mean_degree(_manifest(cfg).load_graphs("train"))
    else:
        deg = 0.0
    labels = list(observed.labels or [str(i) for i in range(observed.node_count)])
    labels += [f"missing{k}" for k in range(missing)]
    out = _out(cfg)
    written = []
    stamp = _stamp(cfg)
    for method in cfg.methods:
        rng = np.random.default_rng(ex.derive_seed(cfg.seed, 1 + ex.METHODS.index(method)))
        g, res = ex.run_method(method, obs, params, cfg.em, deg, rng)
        report = ex.completion_report(res, stamp["config_hash"], cfg.seed, method, cfg.to_dict())
        if res is None:
            report["edges"] = [list(e) for e in g.sorted_edges()]
        report["labels"] = labels
        ex.write_json(out / f"completion_{method}.json", report)
        edges = out / f"completed_{method}.edges"
        write_edge_list(Graph(g.node_count, g.edges, labels), edges)
        written.append(edges)
    return written


def _load_truth(cfg: ex.ExperimentConfig) -> tuple[Graph, list[Graph]]:
    manifest = _manifest(cfg)
    manifest.validate()
    tests = manifest.paths("test")
    if not 0 <= cfg.test_index < len(tests):
        raise ValueError(f"test_index {cfg.test_index} out of range ({len(tests)} test graphs)")
    truth = read_edge_list(tests[cfg.test_index]).largest_component()
    return Graph(truth.node_count, truth.edges), manifest.load_graphs("train")


def cmd_evaluate(cfg: ex.ExperimentConfig) -> list[dict]:
    cfg.validate_files()
    truth, train_graphs = _load_truth(cfg)
    params = None
    if any(m != "random-attach" for m in cfg.methods):
        ckpt = _checkpoint_path(cfg)
        if not ckpt.is_file():
            raise FileNotFoundError(f"no checkpoint at {ckpt}; run train first")
        params, _ = grnn.load_model(ckpt)
    deg = ex.mean_degree(train_graphs) if train_graphs else 2.0 * truth.edge_count / truth.node_count
    rows, em_rows = ex.run_repetitions(cfg, params, truth, deg, f"test_{cfg.test_index:04d}")
    out = _out(cfg)
    ex.write_csv(out / "metrics.csv", ex.METRIC_COLUMNS, rows)
    summary = ex.summarize(rows)
    ex.write_csv(out / "summary.csv", ex.SUMMARY_COLUMNS, summary)
    doc = {**_stamp(cfg), "summary": summary}
    if em_rows:
        ex.write_csv(out / "em_iterations.csv", ex.EM_COLUMNS, em_rows)
        doc["em_iterations"] = ex.summarize(em_rows, key="iteration")
    ex.write_json(out / "summary.json", doc)
    print(ex.format_table(summary))
    return summary


def cmd_scale_bench(cfg: ex.ExperimentConfig) -> float:
    sc = cfg.scale
    ckpt = _checkpoint_path(cfg)
    if cfg.checkpoint:
        params, _ = grnn.load_model(ckpt)
    else:
        params = ex.scale_training_model(sc, cfg.seed)
    rows, slope = ex.run_scale_bench(sc, params, cfg.em, cfg.seed)
    out = _out(cfg)
    ex.write_csv(out / "scale.csv", ex.SCALE_COLUMNS, rows)
    ex.write_json(out / "scale.json", {**_stamp(cfg), "slope": slope, "sizes": sc.sizes,
                                       "attach_count": sc.attach_count})
    print(f"log-log slope: {slope:.3f}")
    return slope


def cmd_generate(kind: str, out_dir: str, train_count: int, test_count: int, n_min: int,
                 n_max: int, seed: int, attach_count: int = 4, communities: int = 4,
                 p_in: float = 0.3, p_out: float = 0.01) -> data.DatasetManifest:
    if train_count < 0 or test_count < 1:
        raise ValueError("need train_count >= 0 and test_count >= 1")
    if not 0 < n_min <= n_max:
        raise ValueError("need 0 < n_min <= n_max")
    rng = np.random.default_rng(seed)

    def one() -> Graph:
        n = int(rng.integers(n_min, n_max + 1))
        if kind == "ba":
            return data.generate_ba(n, attach_count, rng)
        return data.generate_planted_partition(n, communities, p_in, p_out, rng)

    graphs = [one() for _ in range(train_count + test_count)]
    gen = {"kind": kind, "n_min": n_min, "n_max": n_max}
    if kind == "ba":
        gen["attach_count"] = attach_count
    else:
        gen.update(communities=communities, p_in=p_in, p_out=p_out)
    return data.write_corpus(out_dir, graphs[:train_count], graphs[train_count:], gen,
                             {"generate": seed})


# ---------------------------------------------------------------------------
# argument parsing


def _config(args) -> ex.ExperimentConfig:
    cfg = ex.ExperimentConfig.load(args.config) if args.config else ex.ExperimentConfig()
    doc = cfg.to_dict()
    for key in ("manifest", "checkpoint", "output_dir", "seed", "repetitions"):
        v = getattr(args, key, None)
        if v is not None:
            doc[key] = v
    if getattr(args, "methods", None):
        doc["methods"] = args.methods.split(",")
    for flag, (section, key) in {
        "total_batches": ("train", "total_batches"), "batch_size": ("train", "batch_size"),
        "hidden_dim": ("train", "hidden_dim"), "layer_count": ("train", "layer_count"),
        "train_seed": ("train", "seed"),
        "node_fraction": ("corruption", "node_fraction"),
        "edge_fraction": ("corruption", "edge_fraction"), "sampler": ("corruption", "sampler"),
        "em_samples": ("em", "sample_count"), "em_iterations": ("em", "max_iterations"),
    }.items():
        v = getattr(args, flag, None)
        if v is not None:
            doc[section][key] = v
    if getattr(args, "sizes", None):
        doc["scale"]["sizes"] = [int(s) for s in args.sizes.split(",")]
    if getattr(args, "attach_count", None) is not None and args.command == "scale-bench":
        doc["scale"]["attach_count"] = args.attach_count
    return ex.ExperimentConfig.from_dict(doc)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="netcompletion", description=__doc__,
                                formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", help="experiment config JSON")
        sp.add_argument("--manifest")
        sp.add_argument("--checkpoint")
        sp.add_argument("--output-dir", dest="output_dir")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--methods", help="comma-separated subset of " + ",".join(ex.METHODS))

    t = sub.add_parser("train", help="train the sequence model on the manifest's train graphs")
    common(t)
    for flag in ("total-batches", "batch-size", "hidden-dim", "layer-count", "train-seed"):
        t.add_argument("--" + flag, dest=flag.replace("-", "_"), type=int)

    c = sub.add_parser("complete", help="complete an observed edge list")
    common(c)
    c.add_argument("--graph", required=True, help="observed edge list")
    c.add_argument("--missing", type=int, required=True, help="number of missing nodes")
    c.add_argument("--em-samples", type=int)
    c.add_argument("--em-iterations", type=int)

    e = sub.add_parser("evaluate", help="corrupt the test graph and score every method")
    common(e)
    e.add_argument("--repetitions", type=int)
    e.add_argument("--node-fraction", type=float)
    e.add_argument("--edge-fraction", type=float)
    e.add_argument("--sampler", choices=data.SAMPLERS)
    e.add_argument("--em-samples", type=int)
    e.add_argument("--em-iterations", type=int)

    s = sub.add_parser("scale-bench", help="time DeepNC-EM over growing B-A graphs")
    common(s)
    s.add_argument("--sizes", help="comma-separated node counts")
    s.add_argument("--attach-count", type=int)
    s.add_argument("--em-samples", type=int)
    s.add_argument("--em-iterations", type=int)

    g = sub.add_parser("generate", help="write a synthetic corpus and manifest")
    g.add_argument("--kind", choices=("ba", "planted"), default="ba")
    g.add_argument("--out", required=True)
    g.add_argument("--train", type=int, default=150)
    g.add_argument("--test", type=int, default=1)
    g.add_argument("--n-min", type=int, default=100)
    g.add_argument("--n-max", type=int, default=200)
    g.add_argument("--attach-count", type=int, default=4)
    g.add_argument("--communities", type=int, default=4)
    g.add_argument("--p-in", type=float, default=0.3)
    g.add_argument("--p-out", type=float, default=0.01)
    g.add_argument("--seed", type=int, default=0)
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "generate":
            m = cmd_generate(args.kind, args.out, args.train, args.test, args.n_min, args.n_max,
                             args.seed, args.attach_count, args.communities, args.p_in, args.p_out)
            print(f"wrote {len(m.graphs)} graphs to {args.out}")
            return 0
        cfg = _config(args)
        if args.command == "train":
            print(f"checkpoint: {cmd_train(cfg)}")
        elif args.command == "complete":
            for path in cmd_complete(cfg, args.checkpoint, args.graph, args.missing):
                print(f"wrote {path}")
        elif args.command == "evaluate":
            cmd_evaluate(cfg)
        elif args.command == "scale-bench":
            cmd_scale_bench(cfg)
    except (ValueError, FileNotFoundError, KeyError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
