from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from netcompletion import completion as C, grnn
from netcompletion.graph import Graph, PartialObservation
from netcompletion.nn import PROB_CLAMP

A, B, Cn, D, E, F, G, H = range(8)
M1, M2, M3 = 8, 9, 10


def fig3_observation():
    # observed A, B, C with edges A-B and B-C, plus two missing nodes
    return PartialObservation(Graph(3, [(0, 1), (1, 2)]), 2)


def fig4_state(window=10):
    edges = [(A, B), (B, Cn), (E, F), (Cn, D), (F, G), (G, H)]
    state = C.CompletionState.start(PartialObservation(Graph(8, edges), 3), window)
    for v in (M1, A, B, E):
        state.place(v)
    return state


def positional_to_lookback(phi):
    return np.asarray(phi, dtype=float)[::-1]


def brute_frontier(state):
    g = state.obs.observed
    return {v for v in state.remaining_observed
            if any(u in state.position for u in g.neighbors(v))}


def random_state(rng, max_nodes=50):
    n_obs = int(rng.integers(2, max_nodes))
    missing = int(rng.integers(0, max(1, max_nodes - n_obs)))
    p = rng.uniform(0.02, 0.3)
    iu, ju = np.triu_indices(n_obs, 1)
    keep = rng.random(iu.size) < p
    g = Graph(n_obs, zip(iu[keep].tolist(), ju[keep].tolist()))
    obs = PartialObservation(g, missing)
    window = int(rng.integers(1, obs.total_nodes + 1))
    state = C.CompletionState.start(obs, window)
    placed = int(rng.integers(0, obs.total_nodes))
    for v in rng.permutation(obs.total_nodes)[:placed]:
        state.place(int(v))
    phi = rng.uniform(0.01, 0.99, window)
    return state, phi


class TestNodeType:
    def test_no_missing_left(self):
        state = C.CompletionState.start(PartialObservation(Graph(3), 0), 4)
        rng = np.random.default_rng(0)
        assert {C.select_node_type(state, rng) for _ in range(50)} == {C.OBSERVABLE}

    def test_only_missing_left(self):
        state = C.CompletionState.start(PartialObservation(Graph(1), 3), 4)
        state.place(0)
        rng = np.random.default_rng(0)
        assert {C.select_node_type(state, rng) for _ in range(50)} == {C.MISSING}

    def test_missing_frequency(self):
        state = C.CompletionState.start(PartialObservation(Graph(7), 3), 4)
        rng = np.random.default_rng(1)
        draws = [C.select_node_type(state, rng) == C.MISSING for _ in range(10_000)]
        assert abs(np.mean(draws) - 0.3) < 0.02

    def test_empty_pool(self):
        state = C.CompletionState.start(PartialObservation(Graph(1), 0), 2)
        state.place(0)
        with pytest.raises(ValueError):
            C.select_node_type(state, np.random.default_rng(0))


class TestWorkedExamples:
    def test_example1_likelihoods_and_choice(self):
        state = C.CompletionState.start(fig3_observation(), 4)
        state.place(3)  # M1
        state.place(A)
        phi = positional_to_lookback([0.75, 0.2])
        assert C.observable_likelihood(state, phi, B) == pytest.approx(0.2, abs=1e-12)
        assert C.observable_likelihood(state, phi, Cn) == pytest.approx(0.8, abs=1e-12)
        scores = C.score_candidates(state, phi)
        rng = np.random.default_rng(0)
        picks = {C.select_observable_node(state, scores, rng)[0] for _ in range(20)}
        assert picks == {Cn}

    def test_example1_imputation(self):
        state = C.CompletionState.start(fig3_observation(), 4)
        state.place(3)
        # phi_2 = [0.9]; a draw below 0.9 imputes the entry to 1
        ones = [C.impute_row(state, A, np.array([0.9, 0, 0, 0]), np.random.default_rng(s))[0]
                for s in range(200)]
        assert 0.8 < np.mean(ones) < 0.97
        state.place(A)
        row = C.impute_row(state, Cn, positional_to_lookback([0.75, 0.2]),
                           np.random.default_rng(0))
        # lookback entry 0 is A (observed, not adjacent to C)
        assert row[0] == 0.0

    def test_example2_scores(self):
        state = fig4_state()
        assert state.frontier == {Cn, F}
        phi = positional_to_lookback([0.9, 0.1, 0.1, 0.2])
        scores = C.score_candidates(state, phi)
        assert set(scores) == {Cn, F}
        assert abs(scores[Cn] - float(Fraction(1, 9))) < 1e-12
        assert abs(scores[F] - float(Fraction(1, 4))) < 1e-12

    def test_example2_uniform_fallback(self):
        state = fig4_state()
        phi = positional_to_lookback([0.9, 0.1, 0.1, 0.2])
        scores = C.score_candidates(state, phi)
        rng = np.random.default_rng(3)
        picks = [C.select_observable_node(state, scores, rng) for _ in range(3000)]
        assert all(fallback for _, fallback in picks)
        counts = np.bincount([v for v, _ in picks], minlength=8)
        assert set(np.flatnonzero(counts)) == {D, G, H}
        assert counts[[D, G, H]].min() > 900

    def test_full_frontier_argmax_wins(self):
        # frontier equals the whole pool: argmax even though one score is below 1
        obs = PartialObservation(Graph(3, [(0, 1), (0, 2)]), 0)
        state = C.CompletionState.start(obs, 4)
        state.place(0)
        rng = np.random.default_rng(0)
        v, fallback = C.select_observable_node(state, {1: 0.5, 2: 3.0}, rng)
        assert (v, fallback) == (2, False)

    def test_ties_broken_uniformly(self):
        obs = PartialObservation(Graph(3, [(0, 1), (0, 2)]), 0)
        state = C.CompletionState.start(obs, 4)
        state.place(0)
        rng = np.random.default_rng(0)
        picks = [C.select_observable_node(state, {1: 2.0, 2: 2.0}, rng)[0] for _ in range(400)]
        assert 150 < picks.count(1) < 250


class TestFrontier:
    def test_fig4_frontier(self):
        assert fig4_state().frontier == {Cn, F}

    def test_missing_choice_only_shrinks(self):
        state = fig4_state()
        before = set(state.frontier)
        state.place(M2)
        assert state.frontier == before

    def test_observed_choice_adds_neighbors(self):
        state = fig4_state()
        state.place(Cn)
        assert state.frontier == {F, D}

    def test_out_of_window_neighbors_do_not_score(self):
        state = fig4_state(window=1)
        phi = np.array([0.3])
        scores = C.score_candidates(state, phi)
        assert scores[Cn] == 1.0  # B is two positions back
        assert scores[F] == pytest.approx(0.3 / 0.7)

    @settings(max_examples=150, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_matches_brute_force(self, seed):
        state, _ = random_state(np.random.default_rng(seed), max_nodes=25)
        assert state.frontier == brute_frontier(state)


class TestLemmaAndArgmax:
    @settings(max_examples=150, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_outside_frontier_likelihoods_identical(self, seed):
        state, phi = random_state(np.random.default_rng(seed), max_nodes=25)
        outside = state.remaining_observed - state.frontier
        values = {C.observable_likelihood(state, phi, u) for u in outside}
        assert len(values) <= 1

    @settings(max_examples=150, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_score_argmax_equals_likelihood_argmax(self, seed):
        state, phi = random_state(np.random.default_rng(seed), max_nodes=25)
        if not state.remaining_observed:
            return
        scores = C.score_candidates(state, phi)
        extended = {u: 1.0 for u in state.remaining_observed - state.frontier}
        extended.update(scores)
        best = max(extended.values())
        by_score = {v for v, d in extended.items() if d == best}
        like = {v: C.observable_likelihood(state, phi, v) for v in state.remaining_observed}
        top = max(like.values())
        by_like = {v for v, x in like.items() if x == top}
        assert by_score == by_like
        chosen, _ = C.select_observable_node(state, scores, np.random.default_rng(seed))
        assert chosen in by_like

    @settings(max_examples=150, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_scores_match_neighbor_loop(self, seed):
        state, phi = random_state(np.random.default_rng(seed), max_nodes=25)
        odds = phi / (1 - phi)
        i, g = state.step, state.obs.observed
        expected = {}
        for v in state.frontier:
            d = 1.0
            for p in sorted(state.position[u] for u in g.neighbors(v) if u in state.position):
                if i - p <= state.window_m:
                    d *= odds[i - 1 - p]
            expected[v] = d
        got = C.score_candidates(state, phi)
        assert got.keys() == expected.keys()
        for v in got:
            assert got[v] == pytest.approx(expected[v], rel=1e-12)

    def test_no_observed_placed_gives_empty_product(self):
        state = C.CompletionState.start(fig3_observation(), 3)
        state.place(3)
        assert C.observable_likelihood(state, np.array([0.4, 0.4, 0.4]), A) == 1.0


class TestImputation:
    def test_observed_pairs_copied(self):
        state = fig4_state()
        phi = np.full(10, 1 - PROB_CLAMP)
        row = C.impute_row(state, Cn, phi, np.random.default_rng(0))
        # lookback: E, B, A, M1
        np.testing.assert_array_equal(row[:4], [0, 1, 0, 1])
        np.testing.assert_array_equal(row[4:], 0)

    def test_floor_probability_rarely_imputes(self):
        state = C.CompletionState.start(PartialObservation(Graph(1), 1), 1)
        state.place(0)
        rng = np.random.default_rng(0)
        ones = sum(C.impute_row(state, 1, np.array([PROB_CLAMP]), rng)[0] for _ in range(10_000))
        assert ones / 10_000 < 1e-3

    def test_first_row_empty(self):
        state = C.CompletionState.start(fig3_observation(), 3)
        np.testing.assert_array_equal(C.impute_row(state, 0, np.full(3, 0.5),
                                                   np.random.default_rng(0)), 0)


def model(M=6, seed=0, hidden=8):
    return grnn.ModelParams.init(M, np.random.default_rng(seed), hidden_dim=hidden,
                                 layer_count=2, mlp_hidden=8)


class TestDeepncL:
    def test_no_missing_returns_observed(self):
        g = Graph(6, [(0, 1), (1, 2), (2, 3), (3, 4), (1, 5)])
        res = C.deepnc_l(PartialObservation(g, 0), model(), np.random.default_rng(0))
        assert res.graph == g

    def test_fig3_scale_output(self):
        res = C.deepnc_l(fig3_observation(), model(M=4), np.random.default_rng(1))
        assert res.graph.node_count == 5
        assert {(0, 1), (1, 2)} <= res.graph.edges
        assert sorted(res.ordering.order) == list(range(5))
        assert len(res.decisions) == 5
        assert sum(d.node_type == C.MISSING for d in res.decisions) == 2

    def test_deterministic(self):
        obs = PartialObservation(Graph(8, [(0, 1), (1, 2), (3, 4), (5, 6)]), 4)
        a = C.deepnc_l(obs, model(), np.random.default_rng(5))
        b = C.deepnc_l(obs, model(), np.random.default_rng(5))
        assert a.graph == b.graph and a.ordering == b.ordering
        np.testing.assert_array_equal(a.phi, b.phi)

    def test_requires_params(self):
        with pytest.raises(ValueError):
            C.deepnc_l(fig3_observation(), None, np.random.default_rng(0))

    def test_requires_observed_nodes(self):
        with pytest.raises(ValueError):
            C.deepnc_l(PartialObservation(Graph(0), 3), model(), np.random.default_rng(0))

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_containment_and_budget(self, seed):
        rng = np.random.default_rng(seed)
        state, _ = random_state(rng, max_nodes=20)
        obs = state.obs
        res = C.deepnc_l(obs, model(M=5, seed=seed % 7), rng)
        assert res.graph.node_count == obs.total_nodes
        assert obs.observed.edges <= res.graph.edges
        missing_edges = {e for e in res.graph.edges - obs.observed.edges}
        assert all(max(e) >= obs.observed_count for e in missing_edges)

    def test_phi_row_positional(self):
        res = C.deepnc_l(fig3_observation(), model(M=2), np.random.default_rng(1))
        row = res.phi_row(4)
        assert np.isnan(row[:2]).all()
        np.testing.assert_array_equal(row[2:], res.phi[4, :2][::-1])


class TestFilter:
    def test_hand_trace(self):
        # positions A=0, B=1, C=2; phi_3 = [0.75, 0.2] positional
        phi = np.zeros((3, 2))
        phi[2] = positional_to_lookback([0.75, 0.2])
        pairs = C.observed_non_edges(Graph(3, [(0, 1), (1, 2)]))
        pz = C.filter_pair_probs(C.NodeOrdering([0, 1, 2]), phi, pairs)
        assert pz.as_dict() == {(0, 2): 0.75}

    def test_complete_graph_has_no_pairs(self):
        g = Graph(3, [(0, 1), (1, 2), (0, 2)])
        assert len(C.observed_non_edges(g)) == 0

    def test_keys_are_non_edges(self):
        g = Graph(6, [(0, 1), (2, 3), (1, 4)])
        pairs = C.observed_non_edges(g)
        assert [tuple(p) for p in pairs.tolist()] == list(g.non_edges())

    def test_out_of_window_rules(self):
        phi = np.zeros((4, 1))
        phi[1:, 0] = [0.4, 0.6, 0.8]
        order = C.NodeOrdering([0, 1, 2, 3])
        pairs = np.array([[0, 3], [2, 3]])
        half = C.filter_pair_probs(order, phi, pairs, "half-row-mean")
        np.testing.assert_allclose(half.values, [0.4, 0.8])
        floor = C.filter_pair_probs(order, phi, pairs, "floor")
        np.testing.assert_allclose(floor.values, [PROB_CLAMP, 0.8])

    def test_order_insensitive_to_pair_orientation(self):
        phi = np.full((3, 2), 0.3)
        phi[2] = [0.9, 0.1]
        order = C.NodeOrdering([2, 0, 1])  # node 1 at position 2
        pz = C.filter_pair_probs(order, phi, np.array([[1, 2]]))
        assert pz[(2, 1)] == pytest.approx(0.1)

    def test_bad_rule(self):
        with pytest.raises(ValueError):
            C.filter_pair_probs(C.NodeOrdering([0]), np.zeros((1, 1)), np.zeros((0, 2)), "x")


class TestSampleMissingEdges:
    def test_extremes(self):
        pairs = np.array([[0, 1], [0, 2]])
        pz = C.PairProbabilities(pairs, [PROB_CLAMP, 1 - PROB_CLAMP])
        rng = np.random.default_rng(0)
        draws = [C.sample_missing_edges(pz, rng) for _ in range(200)]
        assert all(d == [(0, 2)] for d in draws)

    def test_expected_count(self):
        rng = np.random.default_rng(1)
        vals = rng.uniform(0, 0.5, 40)
        pz = C.PairProbabilities(np.stack([np.zeros(40), np.arange(1, 41)], 1), vals)
        counts = [len(C.sample_missing_edges(pz, rng)) for _ in range(5000)]
        assert abs(np.mean(counts) - vals.sum()) < 0.05 * vals.sum()


class TestEmConfig:
    def test_defaults(self):
        cfg = C.EmConfig()
        assert (cfg.sample_count, cfg.threshold, cfg.max_iterations) == (10, 1e-3, 6)

    @pytest.mark.parametrize("kw", [{"sample_count": 0}, {"threshold": 0.0},
                                    {"max_iterations": -1}, {"out_of_window": "x"}])
    def test_validation(self, kw):
        with pytest.raises(ValueError):
            C.EmConfig(**kw)


class TestDeepncEm:
    def test_no_pairs_equals_single_greedy_run(self):
        g = Graph(4, [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)])
        obs = PartialObservation(g, 2)
        em = C.deepnc_em(obs, model(), C.EmConfig(), np.random.default_rng(4))
        single = C.deepnc_l(obs, model(), np.random.default_rng(4))
        assert em.graph == single.graph and em.em_trace == []

    def test_zero_iterations(self):
        obs = PartialObservation(Graph(6, [(0, 1), (2, 3), (4, 5)]), 2)
        res = C.deepnc_em(obs, model(), C.EmConfig(max_iterations=0), np.random.default_rng(2))
        assert res.em_trace == []
        assert obs.observed.edges <= res.graph.edges

    def test_trace_and_snapshots(self):
        obs = PartialObservation(Graph(8, [(0, 1), (1, 2), (3, 4), (5, 6)]), 3)
        cfg = C.EmConfig(sample_count=3, max_iterations=4)
        res = C.deepnc_em(obs, model(), cfg, np.random.default_rng(0), record_iterations=True)
        assert 1 <= len(res.em_trace) <= 4
        assert len(res.iteration_graphs) == len(res.em_trace) + 1
        for snap in res.iteration_graphs + [res.graph]:
            assert obs.observed.edges <= snap.edges

    def test_recording_does_not_change_result(self):
        obs = PartialObservation(Graph(8, [(0, 1), (1, 2), (3, 4), (5, 6)]), 3)
        cfg = C.EmConfig(sample_count=2, max_iterations=2)
        a = C.deepnc_em(obs, model(), cfg, np.random.default_rng(9))
        b = C.deepnc_em(obs, model(), cfg, np.random.default_rng(9), record_iterations=True)
        assert a.graph == b.graph and a.em_trace == b.em_trace

    def test_converges_when_threshold_large(self):
        obs = PartialObservation(Graph(6, [(0, 1), (2, 3)]), 1)
        cfg = C.EmConfig(sample_count=2, threshold=1e6)
        res = C.deepnc_em(obs, model(), cfg, np.random.default_rng(0))
        assert len(res.em_trace) == 1
