"""Grid model, validation, line-graph construction, depth BFS, and CSV I/O."""

import numpy as np
import pytest
from numpy.testing import assert_array_equal

from gridcascade import (
    UNREACHABLE,
    GridFormatError,
    GridValidationError,
    InvalidSampleError,
    LineGraph,
    build_line_graph,
    cascade_depth,
    generate_synthetic_grid,
    load_grid,
    save_grid,
)
from tests.conftest import make_grid


class TestValidation:
    def test_duplicate_bus_id_rejected(self):
        with pytest.raises(GridValidationError, match="duplicate bus id"):
            make_grid("bad", [(0, 1.0, 0.0), (0, 0.0, 1.0)], [(0, 0, 0, 1.0, 1.0)])

    def test_duplicate_line_id_rejected(self):
        with pytest.raises(GridValidationError, match="duplicate line id"):
            make_grid(
                "bad",
                [(0, 1.0, 0.0), (1, 0.0, 1.0), (2, 0.0, 0.0)],
                [(0, 0, 1, 1.0, 1.0), (0, 1, 2, 1.0, 1.0), (1, 0, 2, 1.0, 1.0)],
            )

    def test_unknown_endpoint_rejected(self):
        with pytest.raises(GridValidationError, match="unknown bus"):
            make_grid("bad", [(0, 1.0, 0.0), (1, 0.0, 1.0)], [(0, 0, 9, 1.0, 1.0)])

    def test_self_loop_line_rejected(self):
        with pytest.raises(GridValidationError, match="from_bus equals to_bus"):
            make_grid(
                "bad",
                [(0, 1.0, 0.0), (1, 0.0, 1.0)],
                [(0, 0, 0, 1.0, 1.0), (1, 0, 1, 1.0, 1.0)],
            )

    def test_parallel_lines_rejected(self):
        with pytest.raises(GridValidationError, match="parallel"):
            make_grid(
                "bad",
                [(0, 1.0, 0.0), (1, 0.0, 1.0)],
                [(0, 0, 1, 1.0, 1.0), (1, 1, 0, 1.0, 1.0)],
            )

    @pytest.mark.parametrize("susceptance", [0.0, -1.0, float("nan"), float("inf")])
    def test_bad_susceptance_rejected(self, susceptance):
        with pytest.raises(GridValidationError):
            make_grid(
                "bad",
                [(0, 1.0, 0.0), (1, 0.0, 1.0)],
                [(0, 0, 1, susceptance, 1.0)],
            )

    def test_negative_load_rejected(self):
        with pytest.raises(GridValidationError):
            make_grid("bad", [(0, 1.0, 0.0), (1, 0.0, -1.0)], [(0, 0, 1, 1.0, 1.0)])

    def test_imbalanced_injections_rejected(self):
        with pytest.raises(GridValidationError, match="balance"):
            make_grid("bad", [(0, 1.0, 0.0), (1, 0.0, 0.5)], [(0, 0, 1, 1.0, 1.0)])

    def test_disconnected_grid_rejected(self):
        with pytest.raises(GridValidationError, match="connected"):
            make_grid(
                "bad",
                [(0, 1.0, 0.0), (1, 0.0, 1.0), (2, 1.0, 0.0), (3, 0.0, 1.0)],
                [(0, 0, 1, 1.0, 1.0), (1, 2, 3, 1.0, 1.0)],
            )

    def test_no_lines_rejected(self):
        with pytest.raises(GridValidationError, match="no lines"):
            make_grid("bad", [(0, 0.0, 0.0)], [])

    def test_arrays_are_immutable(self, triangle):
        for arr in (triangle.susceptances, triangle.capacities, triangle.injections):
            with pytest.raises(ValueError):
                arr[0] = 99.0

    def test_injections_are_gen_minus_load(self, triangle):
        assert_array_equal(triangle.injections, [1.0, -1.0, 0.0])


class TestLineGraph:
    def test_triangle_line_graph(self, triangle):
        lg = build_line_graph(triangle)
        assert lg.node_count == 3
        # Every line pair shares exactly one bus: both directed edges per
        # pair plus one self-loop per node, sorted by (dst, src).
        assert_array_equal(lg.src, [0, 1, 2, 0, 1, 2, 0, 1, 2])
        assert_array_equal(lg.dst, [0, 0, 0, 1, 1, 1, 2, 2, 2])
        assert_array_equal(lg.shared_bus, [-1, 1, 0, 1, -1, 2, 0, 2, -1])
        assert_array_equal(lg.line_ids, [0, 1, 2])

    def test_star_line_graph_is_clique_at_hub(self, star3):
        lg = build_line_graph(star3)
        assert lg.node_count == 3
        assert lg.edge_count == 9
        off_loop = lg.shared_bus[~lg.self_loop_mask]
        assert_array_equal(off_loop, np.zeros(6, dtype=np.int64))

    def test_single_line_graph_is_one_self_loop(self, single_line):
        lg = build_line_graph(single_line)
        assert lg.node_count == 1
        assert_array_equal(lg.src, [0])
        assert_array_equal(lg.dst, [0])
        assert_array_equal(lg.shared_bus, [-1])

    def test_every_node_has_exactly_one_self_loop(self, bridged_triangles):
        lg = build_line_graph(bridged_triangles)
        loops = lg.src[lg.self_loop_mask]
        assert_array_equal(np.sort(loops), np.arange(lg.node_count))

    def test_edges_are_symmetric_off_loop(self, bridged_triangles):
        lg = build_line_graph(bridged_triangles)
        off = ~lg.self_loop_mask
        forward = set(zip(lg.src[off].tolist(), lg.dst[off].tolist()))
        assert forward == {(d, s) for s, d in forward}

    def test_edge_order_is_sorted_by_destination_then_source(self, bridged_triangles):
        lg = build_line_graph(bridged_triangles)
        keys = list(zip(lg.dst.tolist(), lg.src.tolist()))
        assert keys == sorted(keys)

    def test_deterministic(self, bridged_triangles):
        a = build_line_graph(bridged_triangles)
        b = build_line_graph(bridged_triangles)
        assert_array_equal(a.src, b.src)
        assert_array_equal(a.dst, b.dst)
        assert_array_equal(a.shared_bus, b.shared_bus)


class TestCascadeDepth:
    def test_single_source_triangle(self, triangle):
        lg = build_line_graph(triangle)
        depths = cascade_depth(lg, [0])
        assert_array_equal(depths.depth, [0, 1, 1])
        assert depths.reachable.all()

    def test_multi_source_takes_nearest(self, chain4):
        lg = build_line_graph(chain4)
        depths = cascade_depth(lg, [0, 2])
        assert_array_equal(depths.depth, [0, 1, 0])

    def test_unreachable_gets_sentinel(self):
        # Two isolated line-graph nodes (self-loops only); BFS must ignore
        # self-loops, so node 1 is unreachable from node 0.
        lg = LineGraph(
            node_count=2,
            src=np.array([0, 1], dtype=np.int64),
            dst=np.array([0, 1], dtype=np.int64),
            shared_bus=np.array([-1, -1], dtype=np.int64),
            line_ids=np.array([0, 1], dtype=np.int64),
        )
        depths = cascade_depth(lg, [0])
        assert depths.depth[0] == 0
        assert depths.depth[1] == UNREACHABLE
        assert not depths.reachable[1]
        assert depths.reachable[0]

    def test_empty_sources_rejected(self, triangle):
        lg = build_line_graph(triangle)
        with pytest.raises(InvalidSampleError):
            cascade_depth(lg, [])

    def test_depths_grow_along_chain(self, chain4):
        lg = build_line_graph(chain4)
        depths = cascade_depth(lg, [0])
        assert_array_equal(depths.depth, [0, 1, 2])


class TestSyntheticGrids:
    @pytest.mark.parametrize("family", ["ring-mesh", "hub-spoke"])
    def test_generated_grids_validate_and_are_deterministic(self, family):
        a = generate_synthetic_grid(24, family, 1.3, seed=11, name="g")
        b = generate_synthetic_grid(24, family, 1.3, seed=11, name="g")
        assert a.bus_count == 24
        assert_array_equal(a.susceptances, b.susceptances)
        assert_array_equal(a.capacities, b.capacities)
        assert_array_equal(a.injections, b.injections)
        assert_array_equal(a.line_endpoints, b.line_endpoints)

    def test_different_seeds_differ(self):
        a = generate_synthetic_grid(24, "ring-mesh", 1.3, seed=1, name="a")
        b = generate_synthetic_grid(24, "ring-mesh", 1.3, seed=2, name="b")
        assert (
            a.line_count != b.line_count
            or not np.array_equal(a.line_endpoints, b.line_endpoints)
            or not np.allclose(a.susceptances, b.susceptances)
        )

    def test_capacities_exceed_intact_flows(self):
        from gridcascade import solve_dc

        grid = generate_synthetic_grid(30, "hub-spoke", 1.2, seed=3, name="g")
        flow = solve_dc(grid).flow
        assert (grid.capacities >= np.abs(flow)).all()

    def test_injections_balance(self):
        grid = generate_synthetic_grid(20, "ring-mesh", 1.5, seed=5, name="g")
        assert abs(grid.injections.sum()) < 1e-9

    def test_unknown_family_rejected(self):
        with pytest.raises(GridValidationError, match="family"):
            generate_synthetic_grid(10, "lattice", 1.3, seed=0, name="g")

    def test_capacity_factor_must_exceed_one(self):
        with pytest.raises(GridValidationError, match="capacity_factor"):
            generate_synthetic_grid(10, "ring-mesh", 1.0, seed=0, name="g")

    def test_too_few_buses_rejected(self):
        with pytest.raises(GridValidationError):
            generate_synthetic_grid(2, "ring-mesh", 1.3, seed=0, name="g")


class TestGridCsv:
    def test_round_trip(self, tmp_path, bridged_triangles):
        save_grid(bridged_triangles, tmp_path / "g")
        loaded = load_grid(tmp_path / "g", name=bridged_triangles.name)
        assert loaded.name == bridged_triangles.name
        assert_array_equal(loaded.line_endpoints, bridged_triangles.line_endpoints)
        assert_array_equal(loaded.susceptances, bridged_triangles.susceptances)
        assert_array_equal(loaded.capacities, bridged_triangles.capacities)
        assert_array_equal(loaded.injections, bridged_triangles.injections)

    def test_round_trip_preserves_floats_exactly(self, tmp_path):
        grid = generate_synthetic_grid(18, "ring-mesh", 1.37, seed=9, name="g")
        save_grid(grid, tmp_path / "g")
        loaded = load_grid(tmp_path / "g", name="g")
        assert_array_equal(loaded.susceptances, grid.susceptances)
        assert_array_equal(loaded.capacities, grid.capacities)
        assert_array_equal(loaded.injections, grid.injections)

    def test_unknown_bus_reference_reported(self, tmp_path):
        d = tmp_path / "g"
        d.mkdir()
        (d / "buses.csv").write_text("id,generation,load\n0,1.0,0.0\n1,0.0,1.0\n")
        (d / "lines.csv").write_text(
            "id,from_bus,to_bus,susceptance,capacity\n0,0,99,1.0,1.0\n"
        )
        with pytest.raises(GridFormatError, match="unknown bus 99"):
            load_grid(d)

    def test_empty_lines_file_reported(self, tmp_path):
        d = tmp_path / "g"
        d.mkdir()
        (d / "buses.csv").write_text("id,generation,load\n0,0.0,0.0\n")
        (d / "lines.csv").write_text("id,from_bus,to_bus,susceptance,capacity\n")
        with pytest.raises(GridFormatError, match="no lines"):
            load_grid(d)

    def test_bad_header_reported(self, tmp_path):
        d = tmp_path / "g"
        d.mkdir()
        (d / "buses.csv").write_text("bus,generation,load\n0,1.0,0.0\n")
        (d / "lines.csv").write_text("id,from_bus,to_bus,susceptance,capacity\n")
        with pytest.raises(GridFormatError, match="header"):
            load_grid(d)

    def test_non_numeric_cell_reported_with_row(self, tmp_path):
        d = tmp_path / "g"
        d.mkdir()
        (d / "buses.csv").write_text("id,generation,load\n0,abc,0.0\n")
        (d / "lines.csv").write_text("id,from_bus,to_bus,susceptance,capacity\n")
        with pytest.raises(GridFormatError, match="buses.csv"):
            load_grid(d)

    def test_comments_and_blank_lines_skipped(self, tmp_path):
        d = tmp_path / "g"
        d.mkdir()
        (d / "buses.csv").write_text(
            "id,generation,load\n# comment\n0,1.0,0.0\n\n1,0.0,1.0\n"
        )
        (d / "lines.csv").write_text(
            "id,from_bus,to_bus,susceptance,capacity\n0,0,1,1.0,2.0\n"
        )
        grid = load_grid(d)
        assert grid.bus_count == 2
        assert grid.line_count == 1

    def test_missing_file_reported(self, tmp_path):
        with pytest.raises(GridFormatError, match="buses.csv"):
            load_grid(tmp_path / "nope")
