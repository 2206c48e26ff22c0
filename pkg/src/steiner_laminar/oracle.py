"""Independent exact solvers used for verification only."""

import itertools
import logging
from dataclasses import dataclass, field

import networkx as nx
import numpy as np

from steiner_laminar.config import Tolerances
from steiner_laminar.driver import (
    DriverError,
    SteinerTree,
    extract_steiner_tree,
    solve_instance,
)
from steiner_laminar.graph import Instance

logger = logging.getLogger(__name__)

MAX_ORACLE_TERMINALS = 12
MAX_STEINER_NODES = 16


class OracleError(Exception):
    """Exception raised when an instance is too large for an oracle."""

    pass


@dataclass(frozen=True)
class OracleResult:
    cost: int | float
    tree: SteinerTree | None = None


def _weighted_graph(g: Instance) -> nx.Graph:
    """Cheapest simple graph restricted to the component holding the terminals."""
    graph = g.to_networkx()
    if g.integral:
        for _, _, data in graph.edges(data=True):
            data["cost"] = int(data["cost"])
    component = nx.node_connected_component(graph, g.terminals[0])
    return graph.subgraph(component).copy()


def dreyfus_wagner(g: Instance) -> OracleResult:
    """Optimal Steiner tree cost by dynamic programming over terminal subsets.

    Table entry (S, v) is the cheapest tree connecting the terminal subset S
    and node v. Costs stay in int64 for integral instances, so the result is
    exact there.

    Raises:
        OracleError: If the instance has more than MAX_ORACLE_TERMINALS terminals.
    """
    terminals = list(g.terminals)
    if len(terminals) > MAX_ORACLE_TERMINALS:
        raise OracleError(
            f"Dreyfus-Wagner is capped at {MAX_ORACLE_TERMINALS} terminals, got {len(terminals)}"
        )
    if len(terminals) == 1:
        return OracleResult(g.cost_value(0))

    graph = _weighted_graph(g)
    nodes = sorted(graph)
    position = {v: i for i, v in enumerate(nodes)}
    dtype = np.int64 if g.integral else np.float64
    lengths = dict(nx.all_pairs_dijkstra_path_length(graph, weight="cost"))
    dist = np.array([[lengths[u][v] for v in nodes] for u in nodes], dtype=dtype)

    *rest, last = terminals
    k = len(rest)
    table: dict[int, np.ndarray] = {}
    for i, t in enumerate(rest):
        table[1 << i] = dist[position[t]].copy()
    for size in range(2, k + 1):
        for members in itertools.combinations(range(k), size):
            subset = sum(1 << i for i in members)
            lowest = subset & -subset
            merged = None
            # proper subsets holding the lowest member, each split counted once
            part = (subset - 1) & subset
            while part:
                if part & lowest:
                    candidate = table[part] + table[subset ^ part]
                    merged = candidate if merged is None else np.minimum(merged, candidate)
                part = (part - 1) & subset
            table[subset] = (merged[:, None] + dist).min(axis=0)
    cost = table[(1 << k) - 1][position[last]]
    logger.debug("Dreyfus-Wagner over %d terminals: %s", len(terminals), cost)
    return OracleResult(g.cost_value(cost.item()))


def brute_force_subset_mst(g: Instance) -> OracleResult:
    """Optimal Steiner tree by trying every set W of Steiner nodes.

    For each W, the minimum spanning tree of the metric closure on R plus W
    is expanded back into shortest paths of g, reduced to a spanning tree
    and pruned; the cheapest such witness wins.

    Raises:
        OracleError: If the instance has more than MAX_STEINER_NODES Steiner nodes.
    """
    steiner = g.steiner_nodes
    if len(steiner) > MAX_STEINER_NODES:
        raise OracleError(
            f"Brute force is capped at {MAX_STEINER_NODES} Steiner nodes, got {len(steiner)}"
        )
    if len(g.terminals) == 1:
        return OracleResult(g.cost_value(0), SteinerTree(edges=(), cost=0.0, steiner_nodes=()))

    graph = _weighted_graph(g)
    candidates = [v for v in steiner if v in graph]
    paths = dict(nx.all_pairs_dijkstra_path(graph, weight="cost"))
    lengths = dict(nx.all_pairs_dijkstra_path_length(graph, weight="cost"))

    best: SteinerTree | None = None
    for size in range(len(candidates) + 1):
        for chosen in itertools.combinations(candidates, size):
            spanned = list(g.terminals) + list(chosen)
            closure = nx.Graph()
            closure.add_nodes_from(spanned)
            for u, v in itertools.combinations(spanned, 2):
                closure.add_edge(u, v, cost=lengths[u][v])
            chi = np.zeros(g.edge_count, dtype=np.int8)
            for u, v in nx.minimum_spanning_tree(closure, weight="cost").edges():
                path = paths[u][v]
                for a, z in zip(path, path[1:]):
                    chi[graph[a][z]["index"]] = 1
            tree = extract_steiner_tree(chi, g)
            if best is None or tree.cost < best.cost:
                best = tree
    assert best is not None
    logger.debug("Brute force over %d Steiner nodes: %s", len(candidates), best.cost)
    return OracleResult(g.cost_value(best.cost), best)


@dataclass
class CrossCheck:
    """Costs from every solver that ran, plus the pairs that disagree."""

    costs: dict[str, int | float] = field(default_factory=dict)
    errors: dict[str, str] = field(default_factory=dict)
    integrality_violation: float = 0.0
    mismatches: list[tuple[str, str]] = field(default_factory=list)

    @property
    def agreed(self) -> bool:
        return not self.mismatches and not self.errors


def _same_cost(a: float, b: float) -> bool:
    return abs(a - b) <= 1e-6 * (1 + abs(a))


def cross_check(
    g: Instance,
    root: int | None = None,
    workers: int = 1,
    tolerances: Tolerances | None = None,
) -> CrossCheck:
    """Run both driver backends and both oracles on g and compare their costs.

    The brute force is skipped when g has more than MAX_STEINER_NODES Steiner
    nodes and Dreyfus-Wagner when it has more than MAX_ORACLE_TERMINALS terminals.
    """
    check = CrossCheck()
    for backend in ("dp", "lp"):
        try:
            report = solve_instance(
                g, root=root, backend=backend, workers=workers, tolerances=tolerances
            )
        except DriverError as e:
            check.errors[backend] = str(e)
            continue
        check.costs[backend] = g.cost_value(report.optimal_cost)
        if backend == "lp":
            check.integrality_violation = report.integrality_violation
    if len(g.terminals) <= MAX_ORACLE_TERMINALS:
        check.costs["dreyfus_wagner"] = dreyfus_wagner(g).cost
    if len(g.steiner_nodes) <= MAX_STEINER_NODES:
        check.costs["brute_force"] = brute_force_subset_mst(g).cost

    for first, second in itertools.combinations(check.costs, 2):
        if not _same_cost(check.costs[first], check.costs[second]):
            check.mismatches.append((first, second))
    if check.mismatches:
        logger.warning("Solvers disagree on %s: %s", g.name, check.mismatches)
    return check
