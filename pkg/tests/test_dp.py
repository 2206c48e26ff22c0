"""Tests for the combinatorial family solver and LP point translation."""

import time

import numpy as np
import pytest

from steiner_laminar.dp import (
    ProvenanceError,
    induced_lp_point,
    lp_point_to_solution,
    solve_family,
)
from steiner_laminar.formulation import build_lp, row_residuals
from steiner_laminar.graph import DistanceOracle, bidirect, random_instance
from steiner_laminar.laminar import enumerate_families, family_by_id
from steiner_laminar.simplex import max_integrality_violation, solve
from tests.conftest import random_battery


def oracle_for(g) -> DistanceOracle:
    return DistanceOracle(bidirect(g))


class TestSolveFamily:
    """Tests for solve_family()."""

    def test_single_commodity_is_shortest_path(self, path_graph):
        sol = solve_family(path_graph, oracle_for(path_graph), 0, next(enumerate_families(1)))
        assert sol.objective == 5
        assert sol.split_nodes == ()
        assert sol.set_arcs == ((0, 2),)

    def test_star_splits_at_center(self, star_graph):
        sol = solve_family(star_graph, oracle_for(star_graph), 1, family_by_id(2, 0))
        assert sol.objective == 3
        assert sol.split_nodes == (0,)
        assert sol.set_starts == (1, 0, 0)
        assert sol.set_ends == (0, 2, 3)

    def test_star_split_matches_enumeration(self, star_graph):
        oracle = oracle_for(star_graph)
        by_hand = min(
            oracle.distance(1, j) + oracle.distance(j, 2) + oracle.distance(j, 3)
            for j in range(star_graph.node_count)
        )
        sol = solve_family(star_graph, oracle, 1, family_by_id(2, 0))
        assert sol.objective == by_hand

    def test_shared_subpath_family_is_cheaper(self, split_graph):
        oracle = oracle_for(split_graph)
        objectives = [
            solve_family(split_graph, oracle, 0, family).objective
            for family in enumerate_families(3)
        ]
        assert objectives == [6, 6, 5]

    def test_tie_break_lowest_node(self, split_graph):
        # K can split at a or at b for the same cost; a has the lower id
        sol = solve_family(split_graph, oracle_for(split_graph), 0, family_by_id(3, 0))
        assert sol.split_nodes == (1, 1)

    def test_table_invariants(self, make_random):
        g = make_random(n=9, extra=6, terminals=4, seed=3)
        oracle = oracle_for(g)
        dist = oracle.matrix()
        root = g.terminals[0]
        family = family_by_id(3, 1)
        sol = solve_family(g, oracle, root, family)
        table = sol.table
        sinks = [t for t in g.terminals if t != root]
        for index, node in enumerate(family.nodes):
            if node.is_leaf:
                assert np.array_equal(table.cost[index], dist[:, sinks[node.mask.bit_length() - 1]])
                continue
            below = sum(table.cost[child] for child in node.children)
            for i in range(g.node_count):
                assert table.cost[index, i] == min(dist[i, j] + below[j] for j in range(g.node_count))

    def test_objective_counts_shared_arcs_per_set(self, split_graph):
        sol = solve_family(split_graph, oracle_for(split_graph), 0, family_by_id(3, 0))
        view = bidirect(split_graph)
        assert sol.objective == sum(view.costs[a] for arcs in sol.set_arcs for a in arcs)
        assert len(sol.used_arcs) < sum(len(arcs) for arcs in sol.set_arcs)

    def test_wrong_commodity_count(self, split_graph):
        with pytest.raises(ProvenanceError, match="does not match"):
            solve_family(split_graph, oracle_for(split_graph), 0, family_by_id(2, 0))

    @pytest.mark.slow
    def test_desk_scale_timing(self):
        g = random_instance(320, 320, 8, seed=42)
        oracle = oracle_for(g)
        oracle.matrix()
        family = family_by_id(7, 10394)
        started = time.perf_counter()
        solve_family(g, oracle, g.terminals[0], family)
        assert time.perf_counter() - started < 1.0


class TestInducedLpPoint:
    """Tests for induced_lp_point()."""

    def test_single_commodity_is_path_indicator(self, path_graph):
        family = next(enumerate_families(1))
        sol = solve_family(path_graph, oracle_for(path_graph), 0, family)
        model = build_lp(path_graph, 0, family)
        x = induced_lp_point(sol, model)
        assert list(x[: model.m]) == [1, 0, 1, 0]
        assert model.objective(x) == sol.objective

    def test_star_split_columns(self, star_graph):
        family = family_by_id(2, 0)
        sol = solve_family(star_graph, oracle_for(star_graph), 1, family)
        model = build_lp(star_graph, 1, family)
        x = induced_lp_point(sol, model)
        assert x[model.column_names.index("w_0_0")] == 1
        assert x[model.column_names.index("yb_0_0")] == 1
        assert x[model.column_names.index("yh_1_0")] == 1
        assert x[model.column_names.index("yh_2_0")] == 1
        assert row_residuals(model, x) == (0.0, 0.0)

    def test_residuals_zero_on_random_instances(self):
        for g in random_battery(10, seed=9):
            root = g.terminals[0]
            oracle = oracle_for(g)
            for family in enumerate_families(len(g.terminals) - 1):
                sol = solve_family(g, oracle, root, family)
                model = build_lp(g, root, family)
                x = induced_lp_point(sol, model)
                assert row_residuals(model, x) == (0.0, 0.0)
                assert set(np.unique(x)) <= {0.0, 1.0}
                assert model.objective(x) == sol.objective

    def test_provenance_mismatch(self, split_graph):
        oracle = oracle_for(split_graph)
        sol = solve_family(split_graph, oracle, 0, family_by_id(3, 0))
        model = build_lp(split_graph, 0, family_by_id(3, 2))
        with pytest.raises(ProvenanceError, match="built for family"):
            induced_lp_point(sol, model)

    def test_root_mismatch(self, split_graph):
        oracle = oracle_for(split_graph)
        family = family_by_id(3, 0)
        sol = solve_family(split_graph, oracle, 0, family)
        model = build_lp(split_graph, 3, family)
        with pytest.raises(ProvenanceError, match="does not match"):
            induced_lp_point(sol, model)


class TestLpPointToSolution:
    """Tests for lp_point_to_solution()."""

    def test_decodes_induced_point(self, split_graph):
        family = family_by_id(3, 2)
        sol = solve_family(split_graph, oracle_for(split_graph), 0, family)
        model = build_lp(split_graph, 0, family)
        decoded = lp_point_to_solution(model, induced_lp_point(sol, model), family)
        assert decoded.objective == sol.objective
        assert decoded.split_nodes == sol.split_nodes
        assert decoded.set_starts == sol.set_starts
        assert decoded.used_arcs == sol.used_arcs

    def test_rejects_non_solution(self, split_graph):
        family = family_by_id(3, 0)
        model = build_lp(split_graph, 0, family)
        with pytest.raises(ProvenanceError, match="starts at 0"):
            lp_point_to_solution(model, np.zeros(model.num_variables), family)


@pytest.mark.slow
class TestIntegralityBattery:
    """Simplex optimum of every family is 0/1 and equals the combinatorial value."""

    def test_random_battery(self):
        for g in random_battery(100, seed=1):
            root = g.terminals[0]
            view = bidirect(g)
            oracle = DistanceOracle(view)
            for family in enumerate_families(len(g.terminals) - 1):
                result = solve(build_lp(g, root, family, view=view))
                assert max_integrality_violation(result.values) <= 1e-6
                expected = solve_family(g, oracle, root, family).objective
                assert abs(result.objective - expected) <= 1e-6
