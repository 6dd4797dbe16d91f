import numpy as np
import pytest

from loopstage.compat import INCOMPATIBLE, PairCompatibility
from loopstage.engine import (CompatLookup, LayerSynth, RequestTrack,
                              SynthesisEngine, SynthesisParams, action_cost,
                              compress_synthesize, ramp_requests, row_energy,
                              smooth_step, synthesize_row, timeline_energy,
                              transition_cost)
from loopstage.metric import build_jump_graph
from conftest import (circle_field, circle_metric, dense_pairwise,
                      dense_unary, make_pair, oracle_row, random_instance)


def make_layer(matrix, field, graph=None, **kw):
    return LayerSynth("a", field, matrix, graph=graph, **kw)


class TestCostTerms:
    def test_action_cost_zero_on_match(self):
        assert action_cost([0.3, 0.7], [0.3, 0.7], 0.5) == 0.0

    def test_action_cost_orthogonal(self):
        assert action_cost([1, 0], [0, 1], 1.0) == pytest.approx(1.0)

    def test_action_cost_soft(self):
        assert action_cost([0.5, 0.5], [1, 0], 1.0) == pytest.approx(0.25)

    def test_action_cost_length_mismatch(self):
        with pytest.raises(ValueError):
            action_cost([1, 0], [1, 0, 0], 1.0)

    def test_transition_natural_successor_is_one(self):
        m = circle_metric(20)
        assert transition_cost(4, 5, m, sigma_t=2.0) == pytest.approx(1.0)

    def test_transition_at_sigma_squared(self):
        m = circle_metric(20)
        d = float(m.values[6, 9])
        assert transition_cost(5, 9, m, sigma_t=np.sqrt(d)) == pytest.approx(
            np.e, rel=1e-6)

    def test_transition_literal_flag(self):
        m = circle_metric(20)
        # literal mode compares t_prev itself, so repeating a frame is free
        assert transition_cost(4, 4, m, 2.0, literal=True) == 1.0
        assert transition_cost(4, 4, m, 2.0, literal=False) > 1.0

    def test_transition_sentinel_forbids(self):
        m = circle_metric(20)
        m.values[5, 12] = m.values[12, 5] = 1e4
        assert transition_cost(4, 12, m, sigma_t=1.0) > 1e100


class TestRamps:
    def test_smooth_step_endpoints(self):
        assert smooth_step(np.array([0.0]))[0] == 0.0
        assert smooth_step(np.array([1.0]))[0] == 1.0

    def test_smooth_step_midpoint(self):
        assert smooth_step(np.array([0.5]))[0] == pytest.approx(0.5)

    def test_ramp_endpoints(self):
        ramp = ramp_requests(np.array([1.0, 0.0]), 1, 8)
        assert ramp.shape == (9, 2)
        assert np.allclose(ramp[0], [1, 0])
        assert np.allclose(ramp[-1], [0, 1])
        assert np.allclose(ramp.sum(axis=1), 1.0)

    def test_ramp_monotone(self):
        ramp = ramp_requests(np.array([1.0, 0.0]), 1, 8)
        assert np.all(np.diff(ramp[:, 1]) >= 0)

    def test_track_initial_hold(self):
        track = RequestTrack(3, initial=2)
        assert np.allclose(track.window(0, 4),
                           np.tile([0, 0, 1.0], (4, 1)))

    def test_track_trigger_ramp(self):
        track = RequestTrack(2, initial=0)
        track.trigger(5, 1, ramp_len=4)
        win = track.window(0, 12)
        assert np.allclose(win[4], [1, 0])
        assert np.allclose(win[5], [1, 0])  # ramp starts at the trigger column
        assert np.allclose(win[9], [0, 1])
        assert np.allclose(win[11], [0, 1])  # holds after the ramp

    def test_retrigger_restarts_from_mix(self):
        track = RequestTrack(2, initial=0)
        track.trigger(0, 1, ramp_len=8)
        mid = track.vector_at(4)
        assert 0 < mid[1] < 1
        track.trigger(4, 0, ramp_len=8)
        assert np.allclose(track.vector_at(4), mid)
        assert np.allclose(track.vector_at(12), [1, 0])


def layer_from_instance(matrix, field):
    return make_layer(matrix, field)


class TestDPOracle:
    def test_matches_exhaustive_search(self):
        rng = np.random.default_rng(42)
        params = SynthesisParams(synth_alpha=0.5, beta=0.5, sigma_a=0.5)
        for case in range(40):
            matrix, field, requests = random_instance(rng)
            layer = layer_from_instance(matrix, field)
            anchor = int(rng.integers(0, layer.n_frames)) \
                if case % 2 else None
            got, objective = synthesize_row(layer, requests, params,
                                            anchor=anchor)
            unary = dense_unary(layer, requests, params)
            pairwise = dense_pairwise(layer, params)
            first = pairwise[anchor] if anchor is not None else None
            want, want_e = oracle_row(unary, pairwise, first)
            assert np.array_equal(got, want), f"case {case}"
            assert objective == pytest.approx(want_e, rel=1e-12)

    def test_energy_identity(self):
        rng = np.random.default_rng(3)
        params = SynthesisParams()
        for _ in range(20):
            matrix, field, requests = random_instance(rng)
            layer = layer_from_instance(matrix, field)
            got, objective = synthesize_row(layer, requests, params)
            resummed = row_energy(layer, got, requests, params)
            assert objective == pytest.approx(resummed, rel=1e-9)

    def test_deterministic(self):
        rng = np.random.default_rng(5)
        matrix, field, requests = random_instance(rng)
        layer = layer_from_instance(matrix, field)
        params = SynthesisParams()
        a = synthesize_row(layer, requests, params)
        b = synthesize_row(layer, requests, params)
        assert np.array_equal(a[0], b[0]) and a[1] == b[1]

    def test_alpha_one_tracks_requests(self):
        # with pure binary labels and alpha=1, output frames match argmax
        matrix = circle_metric(12, period=12)
        field = np.zeros((12, 2))
        field[:6, 0] = 1.0
        field[6:, 1] = 1.0
        layer = make_layer(matrix, field)
        params = SynthesisParams(synth_alpha=1.0)
        requests = np.zeros((6, 2))
        requests[:3, 0] = 1.0
        requests[3:, 1] = 1.0
        got, _ = synthesize_row(layer, requests, params)
        assert np.all(field[got[:3], 0] == 1.0)
        assert np.all(field[got[3:], 1] == 1.0)

    def test_jump_graph_restricts_edges(self):
        matrix = circle_metric(30, period=10)
        graph = build_jump_graph(matrix, 3)
        field = circle_field(30, period=10, n_actions=2)
        layer = make_layer(matrix, field, graph=graph)
        params = SynthesisParams()
        requests = np.tile([0.5, 0.5], (12, 1))
        got, _ = synthesize_row(layer, requests, params, anchor=0)
        allowed = {(int(t), int(e)) for t in range(30)
                   for e in graph.out_edges(t)}
        prev = 0
        for t in got:
            assert (prev, int(t)) in allowed
            prev = int(t)


class TestCompatInUnary:
    def make_tagged_pair(self):
        # digger frames 0-1 incompatible with truck frames 0-1
        b = np.ones((2, 2))
        b[0, 0] = INCOMPATIBLE
        mem = np.zeros((4, 2))
        mem[:2, 0] = 1.0
        mem[2:, 1] = 1.0
        return make_pair(mem, mem, b, actor_i="digger", actor_j="truck")

    def test_second_row_avoids_tagged_frames(self):
        rng = np.random.default_rng(0)
        values = rng.uniform(1, 2, (4, 4))
        values = (values + values.T) / 2
        np.fill_diagonal(values, 0)
        from loopstage.metric import DistanceMatrix
        matrix = DistanceMatrix("x", values.astype(np.float32))
        field = np.tile([0.5, 0.5], (4, 1))
        digger = LayerSynth("digger", field, matrix, sigma_t=10.0)
        truck = LayerSynth("truck", field, matrix, sigma_t=10.0)
        compat = CompatLookup([self.make_tagged_pair()])
        engine = SynthesisEngine([digger, truck],
                                 SynthesisParams(beta=0.9), compat)
        requests = [np.tile([0.5, 0.5], (6, 1))] * 2
        rows = engine.synthesize_block(requests)
        for k in range(6):
            chi = compat.chi("digger", int(rows[0, k]),
                             "truck", int(rows[1, k]))
            assert chi == pytest.approx(1.0)

    def test_two_row_oracle(self):
        """Row 2's DP with row 1 fixed matches brute force on its energy."""
        rng = np.random.default_rng(9)
        matrix, field, requests = random_instance(rng, t_max=4, k_max=4)
        pair = self.make_tagged_pair()
        t = len(matrix)
        mem = np.abs(np.asarray(pair.side_i.memberships[:t]))
        pair.side_i.memberships = mem
        pair.side_j.memberships = mem
        layer1 = LayerSynth("digger", field, matrix)
        layer2 = LayerSynth("truck", field, matrix)
        compat = CompatLookup([pair])
        params = SynthesisParams(beta=0.7)
        row1, _ = synthesize_row(layer1, requests, params)
        k_count = len(requests)
        compat_unary = np.empty((k_count, t))
        for k in range(k_count):
            compat_unary[k] = compat.chi_column("truck", "digger",
                                                int(row1[k]))
        got, objective = synthesize_row(layer2, requests, params,
                                        compat_unary=compat_unary)
        unary = dense_unary(layer2, requests, params, compat_unary)
        pairwise = dense_pairwise(layer2, params)
        want, want_e = oracle_row(unary, pairwise)
        assert np.array_equal(got, want)
        assert objective == pytest.approx(want_e, rel=1e-12)

    def test_chi_orientation_symmetric(self):
        pair = self.make_tagged_pair()
        compat = CompatLookup([pair])
        for ti in range(4):
            for tj in range(4):
                assert compat.chi("digger", ti, "truck", tj) == \
                    compat.chi("truck", tj, "digger", ti)
        col = compat.chi_column("truck", "digger", 1)
        for tj in range(4):
            assert col[tj] == pytest.approx(compat.chi("truck", tj,
                                                       "digger", 1))

    def test_unknown_pair_is_compatible(self):
        compat = CompatLookup()
        assert compat.chi("a", 0, "b", 3) == 1.0
        assert compat.chi_column("a", "b", 3) is None


class TestCompression:
    def test_c1_is_plain_dp(self):
        rng = np.random.default_rng(1)
        matrix, field, requests = random_instance(rng)
        layer = layer_from_instance(matrix, field)
        plain = synthesize_row(layer, requests, SynthesisParams())
        comp = compress_synthesize(layer, requests,
                                   SynthesisParams(compression=1))
        assert np.array_equal(plain[0], comp[0])

    def test_c4_anchors_match_subsampled_oracle(self):
        matrix = circle_metric(32, period=16)
        field = circle_field(32, period=16, n_actions=2)
        layer = make_layer(matrix, field)
        params = SynthesisParams(compression=4)
        requests = np.tile([1.0, 0.0], (16, 1))
        requests[8:] = [0.0, 1.0]
        got, objective = compress_synthesize(layer, requests, params)

        # oracle: DP over columns 0,4,8,12 with frames 0,4,...,28
        sub_frames = np.arange(0, 32, 4)
        succ_pow = np.arange(32)
        for _ in range(4):
            succ_pow = layer.succ[succ_pow]
        d = layer.matrix.values.astype(np.float64)
        w = (1 - params.synth_alpha) * (1 - params.beta)
        pairwise = w * np.exp(d[np.ix_(succ_pow[sub_frames], sub_frames)]
                              / layer.sigma_t ** 2)
        unary = np.empty((4, len(sub_frames)))
        for i, k in enumerate([0, 4, 8, 12]):
            for si, t in enumerate(sub_frames):
                diff = layer.field[t] - requests[k]
                unary[i, si] = params.synth_alpha * (diff @ diff) / (
                    2 * params.sigma_a ** 2)
        want, want_e = oracle_row(unary, pairwise)
        assert np.array_equal(got[::4], sub_frames[want])
        assert objective == pytest.approx(want_e, rel=1e-9)

    def test_fills_follow_successor_chain(self):
        matrix = circle_metric(32, period=16)
        field = circle_field(32, period=16, n_actions=2)
        layer = make_layer(matrix, field)
        got, _ = compress_synthesize(layer, np.tile([1.0, 0.0], (16, 1)),
                                     SynthesisParams(compression=4))
        for k in range(16):
            if k % 4:
                assert got[k] == layer.succ[got[k - 1]]


class TestEngine:
    def test_block_shape_and_continuity(self):
        matrix = circle_metric(24, period=12)
        field = circle_field(24, period=12, n_actions=2)
        layers = [make_layer(matrix, field) for _ in range(3)]
        engine = SynthesisEngine(layers, SynthesisParams())
        requests = [np.tile([1.0, 0.0], (8, 1))] * 3
        block1 = engine.synthesize_block(requests)
        assert block1.shape == (3, 8)
        for d in range(3):
            assert layers[d].current_frame == block1[d, -1]
        # the next block is anchored on the previous block's last frames
        block2 = engine.synthesize_block(requests)
        for d in range(3):
            allowed = set(int(e) for e in layers[d].edges[block1[d, -1]])
            assert int(block2[d, 0]) in allowed

    def test_request_count_checked(self):
        matrix = circle_metric(10)
        field = circle_field(10, n_actions=2)
        engine = SynthesisEngine([make_layer(matrix, field)],
                                 SynthesisParams())
        with pytest.raises(ValueError):
            engine.synthesize_block([np.ones((4, 2))] * 2)

    def test_timeline_energy_counts_pairs_twice(self):
        matrix = circle_metric(8, period=8)
        field = circle_field(8, period=8, n_actions=2)
        layers = [LayerSynth("digger", field, matrix),
                  LayerSynth("truck", field, matrix)]
        rows = np.array([[0, 1], [2, 3]])
        requests = [np.tile([1.0, 0.0], (2, 1))] * 2
        params = SynthesisParams()
        base = timeline_energy(layers, rows, requests, params)
        b = np.full((2, 2), 5.0)
        mem = np.eye(2)[[0, 0, 1, 1, 0, 0, 1, 1]]
        pair = make_pair(mem, mem, b, actor_i="digger", actor_j="truck")
        with_chi = timeline_energy(layers, rows, requests, params,
                                   CompatLookup([pair]))
        # chi=5 per (row, column, partner): 2 columns x 2 rows x weight
        w = (1 - params.synth_alpha) * params.beta
        assert with_chi - base == pytest.approx(w * 5.0 * 4 - w * 1.0 * 4)


class TestParams:
    def test_alpha_range(self):
        with pytest.raises(ValueError):
            SynthesisParams(synth_alpha=1.5)

    def test_beta_range(self):
        with pytest.raises(ValueError):
            SynthesisParams(beta=-0.1)

    def test_compression_range(self):
        with pytest.raises(ValueError):
            SynthesisParams(compression=0)
