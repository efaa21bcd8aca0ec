import hashlib
import json
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from netcompletion import data, grnn  # noqa: E402

DESK_CORPUS_SEED = 2024
DESK_TRAIN_COUNT = 150
DESK_TRAIN = grnn.TrainConfig(total_batches=2000, layer_count=2, hidden_dim=64, seed=7,
                              log_every=0)


def desk_corpus(seed: int = DESK_CORPUS_SEED, train_count: int = DESK_TRAIN_COUNT,
                test_count: int = 3):
    rng = np.random.default_rng(seed)
    graphs = [data.generate_ba(int(rng.integers(100, 201)), 4, rng)
              for _ in range(train_count + test_count)]
    return graphs[:train_count], graphs[train_count:]


def _source_digest() -> str:
    pkg = Path(grnn.__file__).parent
    h = hashlib.sha256()
    for name in ("nn.py", "grnn.py", "graph.py", "data.py"):
        h.update((pkg / name).read_bytes())
    h.update(json.dumps(asdict(DESK_TRAIN), sort_keys=True).encode())
    return h.hexdigest()[:16]


@pytest.fixture(scope="session")
def desk_corpus_graphs():
    return desk_corpus()


@pytest.fixture(scope="session")
def desk_model(request, desk_corpus_graphs):
    """Desk-scale model trained on the B-A corpus.

    Cached under pytest's cache directory keyed by the training code and
    config, so a rerun reuses the deterministic result. ``--cache-clear``
    forces retraining.
    """
    cache = Path(request.config.cache.mkdir("netcompletion"))
    path = cache / f"desk_{_source_digest()}.json"
    if not path.exists():
        result = grnn.train(desk_corpus_graphs[0], DESK_TRAIN)
        grnn.save_model(path, result.params, DESK_TRAIN)
        (cache / f"desk_{_source_digest()}.losses.json").write_text(json.dumps(result.losses))
    params, _ = grnn.load_model(path)
    return params


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(results):
        terminalreporter.write_line(results[k])
