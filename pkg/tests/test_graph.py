"""Tests for STP ingestion, the bidirected view and the distance oracle."""

import networkx as nx
import numpy as np
import pytest

from steiner_laminar.graph import (
    DistanceOracle,
    Instance,
    InstanceError,
    StpFormatError,
    bidirect,
    commodity_sinks,
    load_instance,
    parse_stp,
    random_instance,
    serialize_stp,
    shortest_path,
)
from tests.conftest import make_instance

MINIMAL_STP = """\
33D32945 STP File, STP Format Version 1.0

SECTION Comment
Name    "minimal"
END

SECTION Graph
Nodes 2
Edges 1
E 1 2 5
END

SECTION Terminals
Terminals 2
T 1
T 2
END

EOF
"""


class TestParseStp:
    """Tests for parse_stp()."""

    def test_minimal_instance(self):
        g = parse_stp(MINIMAL_STP)
        assert g.node_count == 2
        assert g.edges == ((0, 1, 5.0),)
        assert g.terminals == (0, 1)
        assert g.name == "minimal"
        assert g.integral

    def test_accepts_bytes(self):
        assert parse_stp(MINIMAL_STP.encode()).node_count == 2

    def test_keywords_case_insensitive_and_comments(self):
        text = MINIMAL_STP.replace("SECTION Graph", "section GRAPH\n# a comment")
        text = text.replace("E 1 2 5", "e 1 2 5")
        assert parse_stp(text).edge_count == 1

    def test_edge_count_mismatch(self):
        text = MINIMAL_STP.replace("Nodes 2\nEdges 1", "Nodes 3\nEdges 3").replace(
            "E 1 2 5", "E 1 2 5\nE 2 3 1"
        )
        with pytest.raises(StpFormatError, match="Declared 3 edges but listed 2"):
            parse_stp(text)

    def test_terminal_count_mismatch(self):
        with pytest.raises(StpFormatError, match="terminals"):
            parse_stp(MINIMAL_STP.replace("Terminals 2", "Terminals 3"))

    def test_node_out_of_range(self):
        with pytest.raises(StpFormatError) as excinfo:
            parse_stp(MINIMAL_STP.replace("E 1 2 5", "E 1 7 5"))
        assert excinfo.value.line == 10

    def test_negative_cost(self):
        with pytest.raises(StpFormatError, match="Negative edge cost"):
            parse_stp(MINIMAL_STP.replace("E 1 2 5", "E 1 2 -5"))

    def test_malformed_section_header(self):
        with pytest.raises(StpFormatError, match="SECTION header"):
            parse_stp(MINIMAL_STP.replace("SECTION Graph", "SECTON Graph"))

    def test_missing_eof(self):
        with pytest.raises(StpFormatError, match="EOF"):
            parse_stp(MINIMAL_STP.replace("EOF", ""))

    def test_arcs_rejected(self):
        with pytest.raises(StpFormatError, match="directed"):
            parse_stp(MINIMAL_STP.replace("E 1 2 5", "A 1 2 5"))

    def test_disconnected_terminals(self):
        text = MINIMAL_STP.replace("Nodes 2\nEdges 1", "Nodes 3\nEdges 1").replace(
            "Terminals 2\nT 1\nT 2", "Terminals 2\nT 1\nT 3"
        )
        with pytest.raises(InstanceError, match="not connected"):
            parse_stp(text)

    def test_load_instance_uses_file_stem(self, tmp_path):
        path = tmp_path / "two.stp"
        path.write_text(MINIMAL_STP.replace('Name    "minimal"\n', ""))
        assert load_instance(path).name == "two"

    def test_lin01_sizes(self, steinlib):
        g = steinlib("lin01")
        assert g.node_count == 53
        assert bidirect(g).arc_count == 160
        assert len(g.terminals) == 4


class TestInstance:
    """Tests for Instance validation and helpers."""

    def test_self_loop_rejected(self):
        with pytest.raises(InstanceError, match="self-loop"):
            make_instance(2, [(1, 1, 1)], [1])

    def test_duplicate_terminals_rejected(self):
        with pytest.raises(InstanceError, match="duplicates"):
            make_instance(2, [(1, 2, 1)], [1, 1])

    def test_cost_value_integral(self, path_graph):
        assert path_graph.cost_value(5.0) == 5
        assert isinstance(path_graph.cost_value(5.0), int)

    def test_cost_value_fractional(self):
        g = make_instance(2, [(1, 2, 1.5)], [1, 2])
        assert not g.integral
        assert g.cost_value(1.5) == 1.5

    def test_to_networkx_keeps_cheapest_parallel_edge(self):
        g = make_instance(2, [(1, 2, 4), (2, 1, 3)], [1, 2])
        graph = g.to_networkx()
        assert graph[0][1]["cost"] == 3
        assert graph[0][1]["index"] == 1

    def test_commodity_sinks(self, split_graph):
        assert commodity_sinks(split_graph, 0) == (3, 4, 5)
        assert commodity_sinks(split_graph, 4) == (0, 3, 5)

    def test_commodity_sinks_requires_terminal_root(self, split_graph):
        with pytest.raises(InstanceError, match="not a terminal"):
            commodity_sinks(split_graph, 1)

    def test_serialize_round_trip(self):
        for seed in range(5):
            g = random_instance(9, 6, 4, seed=seed)
            assert parse_stp(serialize_stp(g)) == g

    def test_serialize_round_trip_fractional(self):
        g = make_instance(3, [(1, 2, 0.1), (2, 3, 2.25)], [1, 3], name="frac")
        assert parse_stp(serialize_stp(g)) == g


class TestBidirect:
    """Tests for bidirect()."""

    def test_two_arcs_per_edge(self):
        view = bidirect(make_instance(2, [(1, 2, 5)], [1, 2]))
        assert view.arc_count == 2
        assert list(view.costs) == [5.0, 5.0]
        assert (view.tails[0], view.heads[0]) == (0, 1)
        assert (view.tails[1], view.heads[1]) == (1, 0)
        assert list(view.arc_edge) == [0, 0]

    def test_empty_edge_list(self):
        view = bidirect(Instance(node_count=1, edges=(), terminals=(0,)))
        assert view.arc_count == 0

    def test_incidence_lists(self, star_graph):
        view = bidirect(star_graph)
        assert view.out_arcs[0] == (0, 2, 4)
        assert view.in_arcs[0] == (1, 3, 5)


class TestDistanceOracle:
    """Tests for DistanceOracle and shortest_path()."""

    def test_same_node(self, path_graph):
        oracle = DistanceOracle(bidirect(path_graph))
        assert shortest_path(oracle, 1, 1) == (0.0, ())

    def test_unique_path(self):
        g = make_instance(3, [(1, 2, 1), (2, 3, 2)], [1, 3])
        oracle = DistanceOracle(bidirect(g))
        assert shortest_path(oracle, 0, 2) == (3.0, (0, 2))
        assert oracle.distance(2, 0) == 3.0

    def test_unreachable_node(self):
        g = make_instance(3, [(1, 2, 1)], [1, 2])
        oracle = DistanceOracle(bidirect(g))
        with pytest.raises(InstanceError, match="unreachable"):
            oracle.shortest_path(0, 2)

    def test_cache_fills_once(self, star_graph):
        oracle = DistanceOracle(bidirect(star_graph))
        first = oracle.tree(1)
        assert oracle.tree(1) is first
        assert oracle.cached_sources == 1

    def test_matches_floyd_warshall(self):
        for seed in range(10):
            g = random_instance(10, 10, 3, seed=seed)
            oracle = DistanceOracle(bidirect(g))
            expected = nx.floyd_warshall_numpy(g.to_networkx(), weight="cost")
            assert np.array_equal(oracle.matrix(), expected)

    def test_path_reproduces_distance(self, make_random):
        g = make_random(n=12, extra=10, seed=7)
        view = bidirect(g)
        oracle = DistanceOracle(view)
        for u in range(g.node_count):
            for v in range(g.node_count):
                cost, arcs = oracle.shortest_path(u, v)
                assert cost == sum(view.costs[a] for a in arcs)
                assert cost == oracle.distance(v, u)
                if arcs:
                    assert view.tails[arcs[0]] == u
                    assert view.heads[arcs[-1]] == v
