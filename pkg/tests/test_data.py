import json

import numpy as np
import pytest

from netcompletion import data
from netcompletion.graph import Graph


def ba(n=100, c=4, seed=0):
    return data.generate_ba(n, c, np.random.default_rng(seed))


class TestRandomNode:
    def test_full_fraction_is_identity(self):
        g = ba()
        sub, kept = data.rn_sample(g, 1.0, np.random.default_rng(0))
        assert kept == list(range(100)) and sub == g

    def test_count(self):
        sub, kept = data.rn_sample(ba(), 0.7, np.random.default_rng(0))
        assert sub.node_count == 70 and len(kept) == 70

    def test_inclusion_frequency(self):
        g = Graph(20)
        rng = np.random.default_rng(1)
        hits = np.zeros(20)
        for _ in range(5000):
            _, kept = data.rn_sample(g, 0.7, rng)
            hits[kept] += 1
        np.testing.assert_allclose(hits / 5000, 0.7, atol=0.02)

    @pytest.mark.parametrize("f", [0.0, -0.1, 1.5])
    def test_fraction_range(self, f):
        with pytest.raises(ValueError):
            data.rn_sample(ba(), f, np.random.default_rng(0))


class TestForestFire:
    def test_full_fraction(self):
        sub, kept = data.ff_sample(ba(), 1.0, 0.7, np.random.default_rng(0))
        assert len(kept) == 100

    def test_exact_count(self):
        for seed in range(10):
            sub, kept = data.ff_sample(ba(seed=seed), 0.37, 0.7, np.random.default_rng(seed))
            assert len(kept) == 37 and len(set(kept)) == 37

    def test_zero_burn_reseeds(self):
        sub, kept = data.ff_sample(ba(), 0.5, 0.0, np.random.default_rng(2))
        assert len(kept) == 50

    def test_preserves_connectivity_better_than_rn(self):
        rng = np.random.default_rng(3)
        ff_lcc, rn_lcc = [], []
        for seed in range(20):
            g = data.generate_ba(200, 2, rng)
            k = 60
            sub, _ = data.ff_sample(g, 0.3, 0.7, rng)
            ff_lcc.append(sub.largest_component().node_count)
            assert ff_lcc[-1] >= 0.5 * k
            sub, _ = data.rn_sample(g, 0.3, rng)
            rn_lcc.append(sub.largest_component().node_count)
        assert np.mean(ff_lcc) > np.mean(rn_lcc)

    def test_burn_prob_range(self):
        with pytest.raises(ValueError):
            data.ff_sample(ba(), 0.5, 1.0, np.random.default_rng(0))


class TestDeleteEdges:
    def test_identity(self):
        g = ba()
        assert data.delete_edges(g, 1.0, np.random.default_rng(0)) == g

    def test_count(self):
        g = Graph(201, [(0, v) for v in range(1, 201)])
        out = data.delete_edges(g, 0.9, np.random.default_rng(0))
        assert out.edge_count == 180 and out.node_count == 201
        assert out.edges <= g.edges

    def test_retention_frequency(self):
        g = Graph(11, [(0, v) for v in range(1, 11)])
        rng = np.random.default_rng(4)
        hits = {e: 0 for e in g.edges}
        for _ in range(3000):
            for e in data.delete_edges(g, 0.9, rng).edges:
                hits[e] += 1
        np.testing.assert_allclose(np.array(list(hits.values())) / 3000, 0.9, atol=0.02)

    def test_range(self):
        with pytest.raises(ValueError):
            data.delete_edges(ba(), 0.0, np.random.default_rng(0))


class TestCorrupt:
    def test_identity_spec(self):
        g = ba()
        c = data.corrupt(g, data.CorruptionSpec(1.0, 1.0))
        assert c.observation.observed == g and c.observation.missing_node_count == 0

    def test_missing_count(self):
        g = ba(n=153)
        c = data.corrupt(g, data.CorruptionSpec(0.7, 0.9, seed=3))
        assert c.observation.missing_node_count == 153 - 108

    def test_fringe_setting(self):
        c = data.corrupt(ba(), data.CorruptionSpec(0.3, 1.0, "FF", seed=1))
        assert c.observation.observed_count == 30

    @pytest.mark.parametrize("sampler", data.SAMPLERS)
    def test_alignment_maps_edges(self, sampler):
        g = ba(seed=5)
        c = data.corrupt(g, data.CorruptionSpec(0.7, 0.9, sampler, seed=5))
        for u, v in c.observation.observed.edges:
            assert g.has_edge(c.alignment[u], c.alignment[v])

    def test_deterministic(self):
        g = ba()
        spec = data.CorruptionSpec(0.6, 0.8, "FF", seed=9)
        a, b = data.corrupt(g, spec), data.corrupt(g, spec)
        assert a.observation == b.observation and a.alignment == b.alignment

    def test_spec_validation(self):
        with pytest.raises(ValueError):
            data.CorruptionSpec(sampler="XX")
        with pytest.raises(ValueError):
            data.CorruptionSpec(node_fraction=0.0)


class TestGenerators:
    def test_ba_smallest_is_clique(self):
        g = data.generate_ba(5, 4, np.random.default_rng(0))
        assert g.edge_count == 10

    @pytest.mark.parametrize("n,c", [(50, 2), (120, 4), (300, 8)])
    def test_ba_edge_count(self, n, c):
        g = data.generate_ba(n, c, np.random.default_rng(n))
        assert g.edge_count == c * (n - c) + c * (c - 1) // 2

    def test_ba_rejects_small_n(self):
        with pytest.raises(ValueError):
            data.generate_ba(4, 4, np.random.default_rng(0))

    def test_ba_power_law_tail(self):
        rng = np.random.default_rng(7)
        degs = np.concatenate([data.generate_ba(1000, 4, rng).degrees() for _ in range(50)])
        # tail window, clear of the curvature near the minimum degree
        ks = np.arange(10, 100)
        ccdf = np.array([(degs >= k).mean() for k in ks])
        slope = np.polyfit(np.log(ks), np.log(ccdf), 1)[0]
        assert -3.5 <= slope <= -2.0

    def test_ba_deterministic(self):
        assert ba(seed=3) == ba(seed=3)

    def test_planted_equal_probs_is_er(self):
        rng = np.random.default_rng(0)
        counts = []
        for _ in range(50):
            g = data.generate_planted_partition(60, 3, 0.1, 0.1, rng)
            counts.append(g.edge_count if g.node_count == 60 else np.nan)
        assert abs(np.nanmean(counts) - 0.1 * 60 * 59 / 2) < 0.05 * 177

    def test_planted_expected_edges(self):
        n, k, p_in, p_out = 120, 4, 0.3, 0.02
        rng = np.random.default_rng(1)
        counts = [data.generate_planted_partition(n, k, p_in, p_out, rng).edge_count
                  for _ in range(30)]
        within = k * (n // k) * (n // k - 1) / 2
        expected = within * p_in + (n * (n - 1) / 2 - within) * p_out
        assert abs(np.mean(counts) - expected) < 0.05 * expected

    def test_planted_modularity_beats_random_partition(self):
        nx = pytest.importorskip("networkx")
        n, k = 120, 4
        g = data.generate_planted_partition(n, k, 0.3, 0.01, np.random.default_rng(2))
        assert g.node_count == n
        blocks = data.planted_blocks(n, k)
        planted = [set(np.flatnonzero(blocks == b).tolist()) for b in range(k)]
        shuffled = np.random.default_rng(3).permutation(blocks)
        rand = [set(np.flatnonzero(shuffled == b).tolist()) for b in range(k)]
        G = g.to_networkx()
        assert nx.community.modularity(G, planted) > nx.community.modularity(G, rand)

    def test_planted_validation(self):
        with pytest.raises(ValueError):
            data.generate_planted_partition(10, 2, 0.1, 0.3, np.random.default_rng(0))


class TestManifest:
    def test_write_and_load(self, tmp_path):
        train = [ba(30, 2, s) for s in range(3)]
        test = [ba(40, 2, 9)]
        data.write_corpus(tmp_path, train, test, {"kind": "ba"}, {"corpus": 1})
        m = data.DatasetManifest.load(tmp_path / "manifest.json")
        assert len(m.paths("train")) == 3 and len(m.paths("test")) == 1
        loaded = m.load_graphs("train")
        assert [g.edge_count for g in loaded] == [g.edge_count for g in train]
        assert m.seeds == {"corpus": 1}

    def test_requires_test_graph(self, tmp_path):
        data.write_corpus(tmp_path, [ba(30, 2)], [])
        with pytest.raises(ValueError, match="test graph"):
            data.DatasetManifest.load(tmp_path / "manifest.json").validate()

    def test_bad_role(self, tmp_path):
        (tmp_path / "manifest.json").write_text(json.dumps({"graphs": [{"path": "x",
                                                                       "role": "dev"}]}))
        with pytest.raises(ValueError, match="role"):
            data.DatasetManifest.load(tmp_path / "manifest.json")

    def test_loader_keeps_largest_component(self, tmp_path):
        g = Graph(7, [(0, 1), (1, 2), (3, 4)])
        data.write_corpus(tmp_path, [g], [g])
        (loaded,) = data.DatasetManifest.load(tmp_path / "manifest.json").load_graphs("train")
        assert loaded.node_count == 3
