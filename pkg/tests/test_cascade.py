"""Cascade simulation, sample pools, oversampling, and JSONL round-trips."""

import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_array_equal

from gridcascade import (
    CascadeSample,
    Dataset,
    InvalidSampleError,
    build_holdout_pool,
    build_training_dataset,
    generate_synthetic_grid,
    simulate_cascade,
)
from gridcascade.cascade import (
    draw_initial_failures,
    load_dataset,
    pool_statistics,
    save_dataset,
)


class TestSimulateCascade:
    def test_triangle_total_collapse(self, triangle):
        # Intact flows are 2/3 and 1/3 against 0.7 capacities. Tripping the
        # heavy line forces 1 MW onto both survivors: they fail together.
        sample = simulate_cascade(triangle, [0])
        assert_array_equal(sample.labels, [1, 2, 2])
        assert sample.max_iteration == 2

    def test_light_line_outage_does_not_propagate(self, triangle):
        # Tripping a 1/3-loaded line reroutes to 1 MW on the direct line?
        # No: the direct line then carries the full transfer only if the
        # network becomes a single path. Removing line 1 leaves 0-1 direct
        # and 0-2 dangling: bus 2 has no injection, so line 2 carries 0 and
        # line 0 carries 1.0 > 0.7 and trips; then the grid splits.
        sample = simulate_cascade(triangle, [1])
        assert sample.labels[1] == 1
        assert sample.labels[0] == 2

    def test_no_propagation_when_capacities_are_huge(self):
        grid = generate_synthetic_grid(20, "ring-mesh", 50.0, seed=1, name="g")
        sample = simulate_cascade(grid, [int(grid.line_ids[0])])
        assert sample.max_iteration == 1
        assert (sample.labels <= 1).all()

    def test_all_lines_initially_failed_terminates_immediately(self, triangle):
        sample = simulate_cascade(triangle, [0, 1, 2])
        assert_array_equal(sample.labels, [1, 1, 1])
        assert sample.max_iteration == 1

    def test_duplicate_initial_ids_deduplicated(self, triangle):
        sample = simulate_cascade(triangle, [0, 0, 0])
        assert_array_equal(sample.labels, [1, 2, 2])

    def test_empty_initial_set_rejected(self, triangle):
        with pytest.raises(InvalidSampleError):
            simulate_cascade(triangle, [])

    def test_unknown_line_id_rejected(self, triangle):
        with pytest.raises(InvalidSampleError):
            simulate_cascade(triangle, [99])

    def test_deterministic(self):
        grid = generate_synthetic_grid(24, "ring-mesh", 1.2, seed=3, name="g")
        a = simulate_cascade(grid, [int(grid.line_ids[4])])
        b = simulate_cascade(grid, [int(grid.line_ids[4])])
        assert_array_equal(a.labels, b.labels)

    @settings(deadline=None, max_examples=25)
    @given(seed=st.integers(0, 10_000), start=st.integers(0, 10_000))
    def test_labels_are_well_formed(self, seed, start):
        grid = generate_synthetic_grid(18, "ring-mesh", 1.15, seed=seed, name="g")
        rng = np.random.default_rng(start)
        ids = draw_initial_failures(grid, rng, (1, 3))
        sample = simulate_cascade(grid, ids)
        labels = sample.labels
        # Initial failures are exactly the drawn set.
        assert_array_equal(np.sort(grid.line_ids[labels == 1]), np.sort(ids))
        # Labels are contiguous 1..G with no gaps, 0 elsewhere.
        present = np.unique(labels[labels > 0])
        assert_array_equal(present, np.arange(1, labels.max() + 1))
        # Iterations after the first must each fail at least one line.
        for g in range(2, labels.max() + 1):
            assert (labels == g).sum() >= 1


class TestCascadeSample:
    def test_label_vector_validation(self):
        with pytest.raises(InvalidSampleError):
            CascadeSample("g", 0, np.array([0, 2, 2]))  # no initial iteration
        with pytest.raises(InvalidSampleError):
            CascadeSample("g", 0, np.array([1, 3, 0]))  # gap: no iteration 2
        with pytest.raises(InvalidSampleError):
            CascadeSample("g", 0, np.array([-1, 1, 0]))
        with pytest.raises(InvalidSampleError):
            CascadeSample("g", 0, np.array([], dtype=np.int64))

    def test_positions_properties(self):
        sample = CascadeSample("g", 0, np.array([0, 1, 2, 1, 2]))
        assert_array_equal(sample.initial_positions, [1, 3])
        assert_array_equal(sample.failed_positions, [1, 2, 3, 4])
        assert sample.max_iteration == 2


class TestDrawInitialFailures:
    def test_sizes_cover_the_range(self, triangle):
        rng = np.random.default_rng(0)
        sizes = {len(draw_initial_failures(triangle, rng, (1, 3))) for _ in range(100)}
        assert sizes == {1, 2, 3}

    def test_no_replacement(self):
        grid = generate_synthetic_grid(12, "ring-mesh", 1.3, seed=0, name="g")
        rng = np.random.default_rng(1)
        for _ in range(50):
            ids = draw_initial_failures(grid, rng, (3, 3))
            assert len(ids) == len(set(ids)) == 3

    def test_size_capped_at_line_count(self, single_line):
        rng = np.random.default_rng(0)
        assert draw_initial_failures(single_line, rng, (1, 5)) == [0]

    def test_bad_range_rejected(self, triangle):
        rng = np.random.default_rng(0)
        with pytest.raises(InvalidSampleError):
            draw_initial_failures(triangle, rng, (0, 2))
        with pytest.raises(InvalidSampleError):
            draw_initial_failures(triangle, rng, (3, 1))


class TestTrainingDataset:
    @pytest.fixture()
    def grids(self):
        return [
            generate_synthetic_grid(18, "ring-mesh", 1.12, seed=s, name=f"g{s}")
            for s in (0, 1)
        ]

    def test_pool_size_and_roles(self, grids):
        ds = build_training_dataset(grids, pool_per_grid=60, cap=40, k_range=(1, 3), seed=5)
        assert ds.role == "training"
        assert len(ds) == 80  # cap per grid, two grids
        names = {s.grid_name for s in ds.samples}
        assert names == {"g0", "g1"}

    def test_non_propagating_samples_discarded(self, grids):
        ds = build_training_dataset(grids, pool_per_grid=60, cap=40, k_range=(1, 3), seed=5)
        for s in ds.samples:
            assert s.max_iteration >= 2

    def test_deterministic(self, grids):
        a = build_training_dataset(grids, pool_per_grid=30, cap=20, k_range=(1, 3), seed=9)
        b = build_training_dataset(grids, pool_per_grid=30, cap=20, k_range=(1, 3), seed=9)
        for sa, sb in zip(a.samples, b.samples):
            assert sa.grid_name == sb.grid_name
            assert sa.seed == sb.seed
            assert_array_equal(sa.labels, sb.labels)

    def test_different_seed_changes_pool(self, grids):
        a = build_training_dataset(grids, pool_per_grid=30, cap=20, k_range=(1, 3), seed=9)
        b = build_training_dataset(grids, pool_per_grid=30, cap=20, k_range=(1, 3), seed=10)
        assert any(
            not np.array_equal(sa.labels, sb.labels)
            for sa, sb in zip(a.samples, b.samples)
        )

    def test_no_propagation_error_when_capacities_huge(self):
        grid = generate_synthetic_grid(12, "ring-mesh", 50.0, seed=0, name="g")
        with pytest.raises(InvalidSampleError, match="lower capacity_factor"):
            build_training_dataset([grid], pool_per_grid=20, cap=10, k_range=(1, 1), seed=0)

    def test_depth_weighted_oversampling_ratio(self):
        # A two-sample pool with depths 2 and 4 must be re-drawn 1:2. Checked
        # against the binomial three-sigma band over 10,000 draws.
        samples = [
            CascadeSample("g", 0, np.array([1, 2, 0, 0])),
            CascadeSample("g", 1, np.array([1, 2, 3, 4])),
        ]
        weights = np.array([2.0, 4.0])
        p_deep = weights[1] / weights.sum()
        rng = np.random.default_rng(123)
        draws = rng.choice(2, size=10_000, p=weights / weights.sum())
        observed = (draws == 1).mean()
        sigma = np.sqrt(p_deep * (1 - p_deep) / 10_000)
        assert abs(observed - p_deep) < 3 * sigma

    def test_selection_matches_declared_weighting(self):
        # The dataset builder's own draw: deeper cascades appear more often,
        # in proportion to their final iteration count.
        grid = generate_synthetic_grid(18, "ring-mesh", 1.1, seed=7, name="g")
        ds = build_training_dataset([grid], pool_per_grid=200, cap=2000, k_range=(1, 3), seed=3)
        depths = np.array([s.max_iteration for s in ds.samples])
        provenance = ds.provenance["per_grid"]["g"]
        assert provenance["retained"] >= 1
        assert len(ds) == 2000
        # Mean selected depth must exceed the retained pool's unweighted mean
        # (weighting by depth biases the draw upward).
        assert depths.mean() > provenance["retained_mean_depth"] - 1e-9

    def test_max_label_filter(self):
        grid = generate_synthetic_grid(18, "ring-mesh", 1.1, seed=7, name="g")
        ds = build_training_dataset(
            [grid], pool_per_grid=100, cap=50, k_range=(1, 3), seed=3, max_label=3
        )
        for s in ds.samples:
            assert s.max_iteration <= 3


class TestHoldoutPool:
    def test_exact_size_all_propagating(self):
        grid = generate_synthetic_grid(18, "ring-mesh", 1.12, seed=2, name="g")
        pool = build_holdout_pool(grid, 25, (1, 3), seed=4)
        assert pool.role == "heldout"
        assert len(pool) == 25
        for s in pool.samples:
            assert s.max_iteration >= 2

    def test_deterministic_and_seed_sensitive(self):
        grid = generate_synthetic_grid(18, "ring-mesh", 1.12, seed=2, name="g")
        a = build_holdout_pool(grid, 10, (1, 3), seed=4)
        b = build_holdout_pool(grid, 10, (1, 3), seed=4)
        c = build_holdout_pool(grid, 10, (1, 3), seed=5)
        for sa, sb in zip(a.samples, b.samples):
            assert_array_equal(sa.labels, sb.labels)
        assert any(
            not np.array_equal(sa.labels, sc.labels)
            for sa, sc in zip(a.samples, c.samples)
        )

    def test_gives_up_when_nothing_propagates(self):
        grid = generate_synthetic_grid(12, "ring-mesh", 50.0, seed=0, name="g")
        with pytest.raises(InvalidSampleError, match="lower capacity_factor"):
            build_holdout_pool(grid, 5, (1, 1), seed=0)


class TestPoolStatistics:
    def test_counts_and_means(self):
        # Scale counts only lines failing beyond the initial iteration.
        samples = (
            CascadeSample("g", 0, np.array([1, 2, 0, 0])),   # scale 1/4, depth 2
            CascadeSample("g", 1, np.array([1, 2, 3, 4])),   # scale 3/4, depth 4
        )
        stats = pool_statistics(Dataset(samples=samples, role="heldout"))
        assert stats["sample_count"] == 2
        assert stats["mean_depth"] == pytest.approx(3.0)
        assert stats["mean_scale"] == pytest.approx((0.25 + 0.75) / 2)


class TestDatasetIo:
    def test_jsonl_round_trip(self, tmp_path):
        grid = generate_synthetic_grid(18, "ring-mesh", 1.12, seed=2, name="g")
        ds = build_holdout_pool(grid, 8, (1, 3), seed=4)
        save_dataset(ds, tmp_path / "pool")
        loaded = load_dataset(tmp_path / "pool")
        assert loaded.role == ds.role
        assert len(loaded) == len(ds)
        for sa, sb in zip(ds.samples, loaded.samples):
            assert sa.grid_name == sb.grid_name
            assert sa.seed == sb.seed
            assert_array_equal(sa.labels, sb.labels)

    def test_jsonl_row_schema(self, tmp_path, triangle):
        sample = simulate_cascade(triangle, [0], seed=77)
        ds = Dataset(samples=(sample,), role="heldout")
        save_dataset(ds, tmp_path / "pool")
        row = json.loads((tmp_path / "pool" / "samples.jsonl").read_text().splitlines()[0])
        assert row == {"grid": "triangle", "seed": 77, "labels": [1, 2, 2]}

    def test_manifest_describes_pool(self, tmp_path):
        grid = generate_synthetic_grid(18, "ring-mesh", 1.12, seed=2, name="g")
        ds = build_holdout_pool(grid, 8, (1, 3), seed=4)
        save_dataset(ds, tmp_path / "pool")
        manifest = json.loads((tmp_path / "pool" / "manifest.json").read_text())
        assert manifest["role"] == "heldout"
        assert manifest["sample_count"] == 8

    def test_training_dataset_rejects_non_propagating_samples(self):
        flat = CascadeSample("g", 0, np.array([1, 0, 0]))
        with pytest.raises(InvalidSampleError):
            Dataset(samples=(flat,), role="training")
