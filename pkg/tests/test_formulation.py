"""Tests for building, scaling and exporting the family LP."""

import random

import numpy as np
import pytest

from steiner_laminar.formulation import (
    END,
    FLOW,
    SPLIT,
    START,
    FormulationError,
    VariableKey,
    build_lp,
    closed_form_size,
    export_lp,
    read_lp,
    row_residuals,
    scale_rhs,
)
from steiner_laminar.graph import bidirect, random_instance
from steiner_laminar.laminar import LaminarFamily, enumerate_families, family_by_id


class TestModelSize:
    """Tests for emitted sizes against the closed forms."""

    def test_closed_form_example(self):
        assert closed_form_size(4, 8, 2) == (52, 37, 12)

    def test_cycle_graph_b2(self, cycle_graph):
        model = build_lp(cycle_graph, 0, family_by_id(2, 0))
        assert model.num_variables == 52
        assert model.num_constraints == 37
        assert model.num_fixings == 12
        assert model.num_rows == 25

    def test_lin01_variable_count(self, steinlib):
        g = steinlib("lin01")
        for family in enumerate_families(3):
            assert build_lp(g, g.terminals[0], family).num_variables == 1436

    def test_randomized_sweep(self):
        rng = random.Random(11)
        for _ in range(40):
            n = rng.randint(3, 30)
            b = rng.randint(1, min(5, n - 1))
            g = random_instance(n, rng.randint(0, n), b + 1, seed=rng.randrange(10**6))
            family = next(enumerate_families(b))
            model = build_lp(g, g.terminals[0], family)
            assert model.size == closed_form_size(n, 2 * g.edge_count, b)

    def test_single_commodity_has_no_split_columns(self, path_graph):
        model = build_lp(path_graph, 0, next(enumerate_families(1)))
        assert not any(name.startswith("w_") for name in model.column_names)
        assert all(name.startswith("flow_") for name in model.row_names)

    def test_family_mismatch(self, split_graph):
        with pytest.raises(FormulationError, match="does not match"):
            build_lp(split_graph, 0, family_by_id(2, 0))


class TestModelLayout:
    """Tests for column keys, fixings and objective."""

    def test_column_bijection(self, split_graph):
        model = build_lp(split_graph, 0, family_by_id(3, 0))
        seen = set()
        for s in range(model.set_count):
            for a in range(model.m):
                seen.add(model.column(VariableKey(FLOW, a, s)))
            for i in range(model.n):
                seen.add(model.column(VariableKey(START, i, s)))
                seen.add(model.column(VariableKey(END, i, s)))
        for p in range(model.partition_count):
            for i in range(model.n):
                seen.add(model.column(VariableKey(SPLIT, i, p)))
        assert seen == set(range(model.num_variables))

    def test_column_names_match_keys(self, split_graph):
        model = build_lp(split_graph, 0, family_by_id(3, 0))
        key = VariableKey(SPLIT, 1, 0)
        assert model.column_names[model.column(key)] == key.name == "w_0_1"

    def test_unknown_key(self, split_graph):
        model = build_lp(split_graph, 0, family_by_id(3, 0))
        with pytest.raises(FormulationError, match="not in the model"):
            model.column(VariableKey(SPLIT, 0, 5))

    def test_fixings(self, split_graph):
        model = build_lp(split_graph, 0, family_by_id(3, 0))
        root_start = model.column(VariableKey(START, 0, 0))
        assert model.lower[root_start] == model.upper[root_start] == 1
        other_start = model.column(VariableKey(START, 1, 0))
        assert model.lower[other_start] == model.upper[other_start] == 0
        # leaf {k3} is node 4 and ends at t3 (node index 5)
        sink_end = model.column(VariableKey(END, 5, 4))
        assert model.lower[sink_end] == model.upper[sink_end] == 1

    def test_objective_counts_every_set(self, path_graph):
        model = build_lp(path_graph, 0, next(enumerate_families(1)))
        view = bidirect(path_graph)
        assert np.array_equal(model.cost, np.concatenate([view.costs, np.zeros(6)]))


class TestScaleRhs:
    """Tests for scale_rhs()."""

    def test_unit_scale_is_identity(self, star_graph):
        model = build_lp(star_graph, 1, family_by_id(2, 0))
        scaled = scale_rhs(model, 1.0)
        assert np.array_equal(scaled.rhs, model.rhs)
        assert np.array_equal(scaled.upper, model.upper)

    def test_half_scale(self, star_graph):
        model = build_lp(star_graph, 1, family_by_id(2, 0))
        scaled = scale_rhs(model, 0.5)
        assert scaled.scale == 0.5
        assert scaled.upper.max() == 0.5
        assert scaled.rhs.max() == 0.5

    @pytest.mark.parametrize("lam", [0.0, -0.5, 1.5])
    def test_out_of_range(self, star_graph, lam):
        model = build_lp(star_graph, 1, family_by_id(2, 0))
        with pytest.raises(FormulationError, match="Scale"):
            scale_rhs(model, lam)


class TestExportLp:
    """Tests for export_lp() and read_lp()."""

    def test_sections_in_order(self, star_graph):
        text = export_lp(build_lp(star_graph, 1, family_by_id(2, 0)))
        lines = text.splitlines()
        assert lines[0].startswith("\\")
        positions = [lines.index(h) for h in ("Minimize", "Subject To", "Bounds", "End")]
        assert positions == sorted(positions)

    def test_integer_coefficients_without_decimal_point(self, split_graph):
        text = export_lp(build_lp(split_graph, 0, family_by_id(3, 0)))
        objective = text.split("Subject To")[0]
        assert "5 f_0_10" in objective
        assert "5.0" not in text

    def test_single_commodity_has_no_split_variables(self, path_graph):
        text = export_lp(build_lp(path_graph, 0, next(enumerate_families(1))))
        assert " w_" not in text

    def test_byte_stable(self, split_graph):
        family = family_by_id(3, 1)
        assert export_lp(build_lp(split_graph, 0, family)) == export_lp(
            build_lp(split_graph, 0, family)
        )

    def test_read_back_counts(self, split_graph):
        for family in enumerate_families(3):
            model = build_lp(split_graph, 0, family)
            parsed = read_lp(export_lp(model))
            assert parsed.num_variables == model.num_variables
            assert parsed.num_rows == model.num_rows
            assert parsed.num_fixings == model.num_fixings
            assert set(parsed.column_names) == set(model.column_names)
            assert parsed.matrix.nnz == model.matrix.nnz
            parsed_cost = dict(zip(parsed.column_names, parsed.cost))
            assert all(parsed_cost[name] == c for name, c in zip(model.column_names, model.cost))

    def test_read_rejects_inequalities(self):
        text = "Minimize\n obj: x\nSubject To\n c: x <= 1\nBounds\n 0 <= x <= 1\nEnd\n"
        with pytest.raises(FormulationError, match="equality"):
            read_lp(text)


class TestRowResiduals:
    """Tests for row_residuals()."""

    def test_zero_vector_violates_fixings(self, path_graph):
        model = build_lp(path_graph, 0, next(enumerate_families(1)))
        row, bound = row_residuals(model, np.zeros(model.num_variables))
        assert row == 0.0
        assert bound == 1.0

    def test_non_binary_family_builds(self, split_graph):
        flat = LaminarFamily.from_nested(3, (0, 1, 2), family_id=3)
        model = build_lp(split_graph, 0, flat)
        # one partition with three children: 3n begin rows
        assert sum(name.startswith("begin_") for name in model.row_names) == 3 * 7
        assert model.partition_count == 1
