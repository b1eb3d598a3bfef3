"""Depth-masked attention aggregation into per-line exposure rankings."""

import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from gridcascade import (
    CascadeSample,
    GruGatModel,
    InvalidSampleError,
    aggregate_exposure,
    build_line_graph,
    cascade_depth,
    cascade_weight,
    generate_synthetic_grid,
    simulate_cascade,
)
from gridcascade.grid import LineGraph
from gridcascade.exposure import (
    ExposureRanking,
    aggregate_contributions,
    load_ranking,
    mask_edges,
    masked_incoming_attention,
    per_sample_exposure,
    rank_scores,
    save_ranking,
)
from gridcascade.model import ForwardTrace, ModelConfig

from tests.test_model import small_config


def make_trace(grid_name, labels, attention_steps):
    """Hand-built trace with explicit head-averaged attention per step."""
    per_head = tuple(np.stack([a, a]) for a in attention_steps)
    return ForwardTrace(
        grid_name=grid_name,
        labels=np.asarray(labels),
        step_count=len(attention_steps),
        attention_per_head=per_head,
        attention_mean=tuple(np.asarray(a, dtype=np.float64) for a in attention_steps),
        hidden_states=(),
    )


class TestMaskEdges:
    # Triangle line-graph edges, sorted by (dst, src):
    #   (0,0) (1,0) (2,0) | (0,1) (1,1) (2,1) | (0,2) (1,2) (2,2)
    def test_step_zero_admits_only_initial_sources(self, triangle):
        lg = build_line_graph(triangle)
        depths = cascade_depth(lg, [0])
        admitted = mask_edges(lg, depths, 0)
        assert_array_equal(
            admitted, [True, False, False, True, False, False, True, False, False]
        )

    def test_step_one_admits_everything_on_the_triangle(self, triangle):
        lg = build_line_graph(triangle)
        depths = cascade_depth(lg, [0])
        assert mask_edges(lg, depths, 1).all()

    def test_masks_nest_monotonically(self):
        grid = generate_synthetic_grid(20, "ring-mesh", 1.2, seed=8, name="g")
        lg = build_line_graph(grid)
        depths = cascade_depth(lg, [int(lg.line_ids[0])])
        previous = mask_edges(lg, depths, 0)
        for t in range(1, 6):
            current = mask_edges(lg, depths, t)
            assert (previous <= current).all()
            previous = current

    def test_unreachable_source_never_admitted(self):
        # Isolated line-graph node: reachable=False must veto its edges even
        # though the -1 depth sentinel satisfies "depth <= t" numerically.
        lg = LineGraph(
            node_count=2,
            src=np.array([0, 1], dtype=np.int64),
            dst=np.array([0, 1], dtype=np.int64),
            shared_bus=np.array([-1, -1], dtype=np.int64),
            line_ids=np.array([0, 1], dtype=np.int64),
        )
        depths = cascade_depth(lg, [0])
        for t in range(4):
            admitted = mask_edges(lg, depths, t)
            assert not admitted[1]

    def test_self_loops_follow_depth_rule_by_default(self, triangle):
        lg = build_line_graph(triangle)
        depths = cascade_depth(lg, [0])
        admitted = mask_edges(lg, depths, 0)
        assert admitted[0]  # node 0's self-loop: depth 0 <= 0

    def test_self_loops_dropped_when_disabled(self, triangle):
        lg = build_line_graph(triangle)
        depths = cascade_depth(lg, [0])
        admitted = mask_edges(lg, depths, 1, mask_self_loops=False)
        assert not admitted[lg.self_loop_mask].any()
        assert admitted[~lg.self_loop_mask].all()

    def test_negative_step_rejected(self, triangle):
        lg = build_line_graph(triangle)
        depths = cascade_depth(lg, [0])
        with pytest.raises(InvalidSampleError):
            mask_edges(lg, depths, -1)


class TestMaskedIncomingAttention:
    def test_single_step_hand_sum(self, triangle):
        lg = build_line_graph(triangle)
        labels = [1, 2, 2]
        att = np.arange(1.0, 10.0) / 10.0  # 0.1 .. 0.9 over the nine edges
        trace = make_trace("triangle", labels, [att])
        sample = CascadeSample("triangle", 0, np.array(labels))
        depths = cascade_depth(lg, [0])
        scores = masked_incoming_attention(trace, lg, depths, sample)
        # Step 0 admits only edges whose source is node 0 (depth 0):
        # (0,0) -> node 0, (0,1) -> node 1, (0,2) -> node 2.
        assert_allclose(scores, [att[0], att[3], att[6]], atol=1e-15)

    def test_two_step_hand_sum(self, triangle):
        lg = build_line_graph(triangle)
        labels = [1, 2, 3]
        att0 = np.linspace(0.1, 0.9, 9)
        att1 = np.linspace(0.05, 0.45, 9)
        trace = make_trace("triangle", labels, [att0, att1])
        sample = CascadeSample("triangle", 0, np.array(labels))
        depths = cascade_depth(lg, [0])
        scores = masked_incoming_attention(trace, lg, depths, sample)
        expected = np.array(
            [
                att0[0] + att1[0] + att1[1] + att1[2],
                att0[3] + att1[3] + att1[4] + att1[5],
                att0[6] + att1[6] + att1[7] + att1[8],
            ]
        )
        assert_allclose(scores, expected, atol=1e-15)

    def test_self_loop_exclusion_changes_the_sum(self, triangle):
        lg = build_line_graph(triangle)
        labels = [1, 2, 2]
        att = np.linspace(0.1, 0.9, 9)
        trace = make_trace("triangle", labels, [att])
        sample = CascadeSample("triangle", 0, np.array(labels))
        depths = cascade_depth(lg, [0])
        scores = masked_incoming_attention(
            trace, lg, depths, sample, mask_self_loops=False
        )
        # Without self-loops, node 0 keeps nothing at step 0 (its only
        # admitted incoming edge was the self-loop).
        assert_allclose(scores, [0.0, att[3], att[6]], atol=1e-15)

    def test_trace_sample_mismatch_rejected(self, triangle):
        lg = build_line_graph(triangle)
        trace = make_trace("triangle", [1, 2, 2], [np.zeros(9)])
        other = CascadeSample("other-grid", 0, np.array([1, 2, 2]))
        depths = cascade_depth(lg, [0])
        with pytest.raises(InvalidSampleError):
            masked_incoming_attention(trace, lg, depths, other)

    def test_real_trace_scores_are_finite_and_nonnegative(self, triangle):
        model = GruGatModel(small_config())
        lg = build_line_graph(triangle)
        sample = simulate_cascade(triangle, [0])
        _, trace = model.forward(sample, lg)
        depths = cascade_depth(lg, [0])
        scores = masked_incoming_attention(trace, lg, depths, sample)
        assert (scores >= 0).all()
        assert np.isfinite(scores).all()


class TestCascadeWeight:
    @pytest.mark.parametrize(
        "labels,expected",
        [
            ([1, 1, 2, 3, 0], 2),
            ([1, 2, 2], 2),
            ([1, 1, 1], 0),
            ([1, 2, 3, 4], 3),
        ],
    )
    def test_counts_lines_beyond_initial(self, labels, expected):
        assert cascade_weight(CascadeSample("g", 0, np.array(labels))) == expected


class TestAggregation:
    def test_single_sample_aggregate_equals_its_contribution(self):
        scores = np.array([0.3, 0.9, 0.1])
        ranking = aggregate_contributions([(scores, 2)], np.array([0, 1, 2]))
        assert_allclose(ranking.scores, scores)
        assert ranking.sample_count == 1

    def test_weighted_mean_of_two_samples(self):
        a = np.array([1.0, 0.0])
        b = np.array([0.0, 1.0])
        ranking = aggregate_contributions([(a, 1), (b, 3)], np.array([0, 1]))
        assert_allclose(ranking.scores, [0.25, 0.75], atol=1e-15)

    def test_zero_weight_samples_dropped_from_the_mean(self):
        a = np.array([1.0, 0.0])
        b = np.array([0.0, 1.0])
        ranking = aggregate_contributions([(a, 2), (b, 0)], np.array([0, 1]))
        assert_allclose(ranking.scores, [1.0, 0.0], atol=1e-15)

    def test_all_zero_weights_rejected(self):
        with pytest.raises(InvalidSampleError, match="no propagating samples"):
            aggregate_contributions([(np.zeros(2), 0)], np.array([0, 1]))

    def test_empty_contributions_rejected(self):
        with pytest.raises(InvalidSampleError):
            aggregate_contributions([], np.array([0, 1]))

    def test_order_invariance(self):
        rng = np.random.default_rng(0)
        contributions = [(rng.random(5), w) for w in (1, 2, 3, 4)]
        ids = np.arange(5)
        forward = aggregate_contributions(contributions, ids)
        reverse = aggregate_contributions(contributions[::-1], ids)
        assert_allclose(forward.scores, reverse.scores, atol=1e-12)

    def test_aggregate_exposure_end_to_end(self, triangle):
        model = GruGatModel(small_config())
        lg = build_line_graph(triangle)
        samples = [simulate_cascade(triangle, [0]), simulate_cascade(triangle, [2])]
        ranking = aggregate_exposure(model, samples, lg)
        assert ranking.sample_count == 2
        assert sorted(ranking.ranks.tolist()) == [1, 2, 3]
        manual = per_sample_exposure(model, samples, lg)
        total_w = sum(w for _, w in manual)
        expected = sum(w * s for s, w in manual) / total_w
        assert_allclose(ranking.scores, expected, atol=1e-15)

    def test_precomputed_depths_match_derived(self, triangle):
        model = GruGatModel(small_config())
        lg = build_line_graph(triangle)
        samples = [simulate_cascade(triangle, [0])]
        depths = [cascade_depth(lg, [0])]
        a = per_sample_exposure(model, samples, lg)
        b = per_sample_exposure(model, samples, lg, depths=depths)
        assert_allclose(a[0][0], b[0][0], atol=0)

    def test_sample_length_mismatch_rejected(self, triangle, chain4):
        model = GruGatModel(small_config())
        lg = build_line_graph(triangle)
        sample = simulate_cascade(chain4, [0])
        with pytest.raises(InvalidSampleError):
            aggregate_exposure(model, [sample], lg)


class TestRanking:
    def test_descending_with_ties_by_line_id(self):
        ids = np.array([10, 11, 12, 13])
        scores = np.array([0.5, 0.9, 0.5, 0.1])
        assert_array_equal(rank_scores(ids, scores), [2, 1, 3, 4])

    def test_rank_one_is_best(self):
        ids = np.arange(3)
        scores = np.array([0.1, 0.9, 0.5])
        ranks = rank_scores(ids, scores)
        assert ranks[np.argmax(scores)] == 1

    def test_order_property_walks_best_to_worst(self):
        ids = np.arange(4)
        scores = np.array([0.2, 0.8, 0.4, 0.6])
        ranking = ExposureRanking(
            line_ids=ids, scores=scores, ranks=rank_scores(ids, scores), sample_count=1
        )
        assert_array_equal(ranking.order, [1, 3, 2, 0])

    def test_csv_round_trip(self, tmp_path):
        ids = np.array([4, 7, 9])
        scores = np.array([0.25, 0.5, 0.125])
        ranks = rank_scores(ids, scores)
        path = tmp_path / "ranking.csv"
        save_ranking(path, ids, scores, ranks)
        loaded = load_ranking(path)
        assert loaded == {4: (0.25, 2), 7: (0.5, 1), 9: (0.125, 3)}

    def test_csv_rows_are_rank_ordered(self, tmp_path):
        ids = np.array([4, 7, 9])
        scores = np.array([0.25, 0.5, 0.125])
        path = tmp_path / "ranking.csv"
        save_ranking(path, ids, scores, rank_scores(ids, scores))
        lines = path.read_text().strip().splitlines()
        assert lines[0] == "line_id,exposure_score,rank"
        first = [row.split(",")[0] for row in lines[1:]]
        assert first == ["7", "4", "9"]

    def test_csv_method_column(self, tmp_path):
        ids = np.array([0, 1])
        scores = np.array([1.0, 2.0])
        path = tmp_path / "ranking.csv"
        save_ranking(path, ids, scores, rank_scores(ids, scores), method="eb")
        lines = path.read_text().strip().splitlines()
        assert lines[0] == "method,line_id,exposure_score,rank"
        assert lines[1].startswith("eb,")
