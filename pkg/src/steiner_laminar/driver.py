"""Decomposition driver: solve every laminar family, keep the best, map it to a Steiner tree."""

import logging
import statistics
import time
from collections.abc import Iterable
from dataclasses import dataclass, field
from typing import Any, NamedTuple

import networkx as nx
import numpy as np
from joblib import Parallel, delayed

from steiner_laminar.config import Tolerances
from steiner_laminar.dp import SubproblemSolution, lp_point_to_solution, solve_family
from steiner_laminar.formulation import build_lp
from steiner_laminar.graph import (
    BidirectedView,
    DistanceOracle,
    Instance,
    bidirect,
    commodity_sinks,
)
from steiner_laminar.laminar import (
    MAX_COMMODITIES,
    LaminarFamily,
    Nested,
    count_families,
    enumerate_families,
)
from steiner_laminar.simplex import max_integrality_violation
from steiner_laminar.simplex import solve as simplex_solve

logger = logging.getLogger(__name__)

BACKENDS = ("dp", "lp")


class ExtractionError(Exception):
    """Exception raised when an edge support does not connect the terminals."""

    pass


class DriverError(Exception):
    """Exception raised when a family cannot be solved or the instance is out of range."""

    pass


@dataclass(frozen=True)
class SteinerTree:
    """Edge subset of an instance forming a pruned tree over the terminals."""

    edges: tuple[int, ...]
    cost: float
    steiner_nodes: tuple[int, ...]

    def edge_list(self, g: Instance) -> list[tuple[int, int, float]]:
        """(u, v, cost) triples with 1-based endpoints, in edge index order."""
        return [(g.edges[e].u + 1, g.edges[e].v + 1, g.edges[e].cost) for e in self.edges]

    def to_networkx(self, g: Instance) -> nx.Graph:
        tree = nx.Graph()
        tree.add_nodes_from(g.terminals)
        for e in self.edges:
            u, v, cost = g.edges[e]
            tree.add_edge(u, v, cost=cost, index=e)
        return tree


class FamilyResult(NamedTuple):
    """What a worker hands back for one family."""

    family_id: int
    objective: float
    elapsed: float
    solution: SubproblemSolution
    integrality_violation: float = 0.0


@dataclass
class SolveReport:
    """Outcome of solve_instance."""

    instance: str
    root: int
    backend: str
    terminals: int
    families_solved: int
    best_family: int
    best_expression: str
    best_objective: float
    tree: SteinerTree
    family_times: list[float] = field(default_factory=list)
    total_time: float = 0.0
    objectives: dict[int, float] | None = None
    integrality_violation: float = 0.0

    @property
    def optimal_cost(self) -> float:
        return self.tree.cost

    def time_stats(self) -> dict[str, float]:
        if not self.family_times:
            return {"mean": 0.0, "max": 0.0}
        return {"mean": statistics.fmean(self.family_times), "max": max(self.family_times)}

    def to_dict(self, g: Instance) -> dict[str, Any]:
        """JSON-ready report with 1-based node ids and exact integer costs when possible."""
        data: dict[str, Any] = {
            "instance": self.instance,
            "root": self.root + 1,
            "backend": self.backend,
            "terminals": self.terminals,
            "families_solved": self.families_solved,
            "best_family": self.best_family,
            "optimal_cost": g.cost_value(self.tree.cost),
            "tree_edges": [
                [u, v, g.cost_value(cost)] for u, v, cost in self.tree.edge_list(g)
            ],
            "per_family_time_stats": self.time_stats(),
            "total_time": self.total_time,
        }
        if self.objectives is not None:
            data["objectives"] = {
                str(fid): g.cost_value(value) for fid, value in sorted(self.objectives.items())
            }
        return data


def phi(sol: SubproblemSolution, g: Instance) -> np.ndarray:
    """Edge indicator of every edge carrying flow of any set, in either direction."""
    chi = np.zeros(g.edge_count, dtype=np.int8)
    arcs = np.fromiter(sol.used_arcs, dtype=np.int64)
    # arc 2e and 2e+1 both belong to edge e
    chi[arcs // 2] = 1
    return chi


def tree_cost(chi: np.ndarray, g: Instance) -> float:
    return float(sum(g.edges[e].cost for e in np.flatnonzero(chi)))


def prune_leaves(tree: nx.Graph, keep: Iterable[int]) -> nx.Graph:
    """Repeatedly remove leaves (and isolated nodes) that are not in `keep`."""
    keep = set(keep)
    tree = nx.Graph(tree)
    pending = [v for v in tree if v not in keep and tree.degree(v) <= 1]
    while pending:
        v = pending.pop()
        if v not in tree:
            continue
        neighbors = list(tree.neighbors(v))
        tree.remove_node(v)
        pending.extend(u for u in neighbors if u not in keep and tree.degree(u) <= 1)
    return tree


def _as_steiner_tree(tree: nx.Graph, g: Instance) -> SteinerTree:
    edges = tuple(sorted(data["index"] for _, _, data in tree.edges(data=True)))
    terminal_set = set(g.terminals)
    return SteinerTree(
        edges=edges,
        cost=float(sum(g.edges[e].cost for e in edges)),
        steiner_nodes=tuple(sorted(v for v in tree if v not in terminal_set)),
    )


def extract_steiner_tree(chi: np.ndarray, g: Instance) -> SteinerTree:
    """Spanning tree of the support component holding the terminals, leaves pruned.

    Raises:
        ExtractionError: If the support does not connect all terminals.
    """
    support = nx.Graph()
    support.add_nodes_from(g.terminals)
    for e in np.flatnonzero(chi):
        u, v, cost = g.edges[e]
        if support.has_edge(u, v) and support[u][v]["cost"] <= cost:
            continue
        support.add_edge(u, v, cost=cost, index=int(e))
    component = nx.node_connected_component(support, g.terminals[0])
    missing = [t + 1 for t in g.terminals if t not in component]
    if missing:
        raise ExtractionError(f"Support does not reach terminals {missing}")
    spanning = nx.minimum_spanning_tree(support.subgraph(component), weight="cost")
    return _as_steiner_tree(prune_leaves(spanning, g.terminals), g)


def structure_of(tree: SteinerTree, g: Instance, root: int) -> LaminarFamily:
    """Recognize the (root, family) structure of a Steiner tree.

    Rooted at `root`, the commodities below each node either all leave it
    along one edge (the path continues) or split there. The result can be
    non-binary.

    Raises:
        ExtractionError: If the tree does not contain every terminal.
    """
    sinks = commodity_sinks(g, root)
    commodity = {t: k for k, t in enumerate(sinks)}
    graph = tree.to_networkx(g)
    reached = nx.node_connected_component(graph, root)
    if any(t not in reached for t in g.terminals):
        raise ExtractionError("Tree does not connect every terminal")

    hanging: dict[int, list[Nested]] = {}
    parents = nx.dfs_predecessors(graph, root)
    for v in nx.dfs_postorder_nodes(graph, root):
        items = hanging.pop(v, [])
        if v in commodity:
            items.insert(0, commodity[v])
        if v == root:
            break
        if not items:
            continue
        item: Nested = items[0] if len(items) == 1 else tuple(items)
        hanging.setdefault(parents[v], []).append(item)
    top: Nested = items[0] if len(items) == 1 else tuple(items)
    return LaminarFamily.from_nested(len(sinks), top)


def _solve_one(
    g: Instance,
    view: BidirectedView,
    oracle: DistanceOracle,
    root: int,
    family: LaminarFamily,
    backend: str,
    tolerances: Tolerances,
) -> FamilyResult:
    started = time.perf_counter()
    violation = 0.0
    if backend == "dp":
        solution = solve_family(g, oracle, root, family)
    else:
        model = build_lp(g, root, family, view=view)
        result = simplex_solve(model, tolerances)
        if not result.is_optimal:
            raise DriverError(
                f"LP for family {family.family_id} {family.expression()} is {result.status}"
            )
        violation = max_integrality_violation(result.values)
        if violation > tolerances.integrality:
            raise DriverError(
                f"LP optimum for family {family.family_id} is fractional "
                f"(violation {violation:.3e})"
            )
        solution = lp_point_to_solution(model, result.values, family)
    elapsed = time.perf_counter() - started
    return FamilyResult(family.family_id, solution.objective, elapsed, solution, violation)


def solve_instance(
    g: Instance,
    root: int | None = None,
    backend: str = "dp",
    workers: int = 1,
    keep_all: bool = False,
    tolerances: Tolerances | None = None,
    families: Iterable[LaminarFamily] | None = None,
) -> SolveReport:
    """Solve the Steiner tree problem on g exactly by family decomposition.

    Args:
        g: The instance.
        root: 0-based root terminal; defaults to the first terminal.
        backend: "dp" (combinatorial) or "lp" (simplex on the family LP).
        workers: Number of worker threads.
        keep_all: Keep every family's objective in the report.
        tolerances: Simplex tolerances for the lp backend.
        families: Explicit families to solve instead of all full binary ones.

    Returns:
        SolveReport with the lowest-objective family (lowest id on ties).

    Raises:
        DriverError: On an unknown backend, a root that is not a terminal, too
            many commodities, or a family that cannot be solved.
    """
    if backend not in BACKENDS:
        raise DriverError(f"Unknown backend {backend!r}; choose from {', '.join(BACKENDS)}")
    if root is None:
        root = g.terminals[0]
    if root not in g.terminals:
        raise DriverError(f"Root {root + 1} is not a terminal")
    tolerances = tolerances or Tolerances()
    b = len(g.terminals) - 1
    started = time.perf_counter()

    if b == 0:
        tree = SteinerTree(edges=(), cost=0.0, steiner_nodes=())
        return SolveReport(
            instance=g.name,
            root=root,
            backend=backend,
            terminals=1,
            families_solved=0,
            best_family=-1,
            best_expression="",
            best_objective=0.0,
            tree=tree,
            total_time=time.perf_counter() - started,
            objectives={} if keep_all else None,
        )
    if families is None:
        if b > MAX_COMMODITIES:
            raise DriverError(
                f"{b} commodities exceed the enumeration cap of {MAX_COMMODITIES}"
            )
        families = enumerate_families(b)
        logger.info("Solving %d families with backend %s", count_families(b), backend)

    view = bidirect(g)
    oracle = DistanceOracle(view)
    if backend == "dp":
        oracle.matrix()

    best: FamilyResult | None = None
    times: list[float] = []
    violation = 0.0
    objectives: dict[int, float] | None = {} if keep_all else None
    jobs = (
        delayed(_solve_one)(g, view, oracle, root, family, backend, tolerances)
        for family in families
    )
    for result in Parallel(n_jobs=workers, prefer="threads", return_as="generator_unordered")(jobs):
        times.append(result.elapsed)
        violation = max(violation, result.integrality_violation)
        if objectives is not None:
            objectives[result.family_id] = result.objective
        if best is None or (result.objective, result.family_id) < (best.objective, best.family_id):
            best = result
            logger.debug("New best family %d with objective %s", best.family_id, best.objective)

    if best is None:
        raise DriverError("No family was solved")
    tree = extract_steiner_tree(phi(best.solution, g), g)
    return SolveReport(
        instance=g.name,
        root=root,
        backend=backend,
        terminals=len(g.terminals),
        families_solved=len(times),
        best_family=best.family_id,
        best_expression=best.solution.family.expression(),
        best_objective=best.objective,
        tree=tree,
        family_times=times,
        total_time=time.perf_counter() - started,
        objectives=objectives,
        integrality_violation=violation,
    )
