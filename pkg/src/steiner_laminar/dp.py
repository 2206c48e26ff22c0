"""Combinatorial solver for one laminar family.

Each set of the family starts sharing at some node, walks a shortest path to
the node where it splits (or, for a singleton, to its sink) and hands over
to its children there. Evaluated bottom-up over the family tree, every
level is a min-plus product of the distance matrix with the summed child
costs.
"""

import logging
from dataclasses import dataclass

import numpy as np

from steiner_laminar.formulation import END, FLOW, SPLIT, START, LpModel, VariableKey
from steiner_laminar.graph import DistanceOracle, Instance, commodity_sinks
from steiner_laminar.laminar import LaminarFamily

logger = logging.getLogger(__name__)


class ProvenanceError(Exception):
    """Exception raised when a solution, model and family do not belong together."""

    pass


@dataclass(frozen=True, eq=False)
class DpTable:
    """cost[s, i]: cheapest service of set node s starting at node i.

    choice[s, i] is the split node for internal sets and the sink for leaves.
    """

    cost: np.ndarray
    choice: np.ndarray


@dataclass(frozen=True, eq=False)
class SubproblemSolution:
    """0/1 solution of one family's subproblem, indexed by family node."""

    family_id: int
    root: int
    family: LaminarFamily
    objective: float
    split_nodes: tuple[int, ...]
    set_starts: tuple[int, ...]
    set_ends: tuple[int, ...]
    set_arcs: tuple[tuple[int, ...], ...]
    table: DpTable | None = None

    @property
    def used_arcs(self) -> frozenset[int]:
        return frozenset(a for arcs in self.set_arcs for a in arcs)


def solve_family(
    g: Instance, dist: DistanceOracle, root: int, family: LaminarFamily
) -> SubproblemSolution:
    """Solve the subproblem of `family` rooted at `root` exactly.

    Ties between equally cheap split nodes go to the lowest node id.

    Raises:
        ProvenanceError: If the family is not over K = R minus root.
    """
    sinks = commodity_sinks(g, root)
    if family.b != len(sinks):
        raise ProvenanceError(
            f"Family over {family.b} commodities does not match |K|={len(sinks)}"
        )
    distances = dist.matrix()
    n = g.node_count
    sets = len(family.nodes)
    cost = np.empty((sets, n), dtype=np.float64)
    choice = np.empty((sets, n), dtype=np.int64)
    rows = np.arange(n)

    # children always follow their parent in node order
    for index in reversed(range(sets)):
        node = family.nodes[index]
        if node.is_leaf:
            sink = sinks[node.mask.bit_length() - 1]
            cost[index] = distances[:, sink]
            choice[index] = sink
            continue
        below = np.sum([cost[child] for child in node.children], axis=0)
        total = distances + below[None, :]
        choice[index] = np.argmin(total, axis=1)
        cost[index] = total[rows, choice[index]]

    starts = [0] * sets
    ends = [0] * sets
    arcs: list[tuple[int, ...]] = [()] * sets
    starts[0] = root
    for index, node in enumerate(family.nodes):
        start = starts[index]
        end = int(choice[index, start])
        ends[index] = end
        _, arcs[index] = dist.shortest_path(start, end)
        for child in node.children:
            starts[child] = end

    split_nodes = tuple(ends[p.parent] for p in family.partitions)
    table = DpTable(cost=cost, choice=choice)
    objective = float(cost[0, root])
    logger.debug(
        "Family %d %s: objective %s, splits %s",
        family.family_id,
        family.expression(),
        objective,
        [v + 1 for v in split_nodes],
    )
    return SubproblemSolution(
        family_id=family.family_id,
        root=root,
        family=family,
        objective=objective,
        split_nodes=split_nodes,
        set_starts=tuple(starts),
        set_ends=tuple(ends),
        set_arcs=tuple(arcs),
        table=table,
    )


def _check_provenance(model: LpModel, family_id: int, root: int, family: LaminarFamily) -> None:
    if model.family_code != family.expression():
        raise ProvenanceError(
            f"Model was built for family {model.family_code}, not {family.expression()}"
        )
    if model.family_id != family_id or model.root != root:
        raise ProvenanceError(
            f"Model (family {model.family_id}, root {model.root + 1}) does not match "
            f"solution (family {family_id}, root {root + 1})"
        )


def induced_lp_point(sol: SubproblemSolution, model: LpModel) -> np.ndarray:
    """Return the 0/1 column vector of the family LP induced by a subproblem solution.

    Raises:
        ProvenanceError: If model and solution come from different (root, family) pairs.
    """
    _check_provenance(model, sol.family_id, sol.root, sol.family)
    x = np.zeros(model.num_variables)
    for s, arcs in enumerate(sol.set_arcs):
        for a in arcs:
            x[model.column(VariableKey(FLOW, a, s))] = 1.0
        x[model.column(VariableKey(START, sol.set_starts[s], s))] = 1.0
        x[model.column(VariableKey(END, sol.set_ends[s], s))] = 1.0
    for p, node in enumerate(sol.split_nodes):
        x[model.column(VariableKey(SPLIT, node, p))] = 1.0
    return x


def lp_point_to_solution(
    model: LpModel, x: np.ndarray, family: LaminarFamily
) -> SubproblemSolution:
    """Decode an integral family LP point into per-set arc supports and split nodes.

    Components are rounded to {0, 1}; the caller checks integrality first.
    Arc supports are sorted by arc index, not in path order, and may carry
    zero-cost cycles.

    Raises:
        ProvenanceError: If the model is not for `family`, or some set does
            not start and end at exactly one node.
    """
    _check_provenance(model, family.family_id, model.root, family)
    rounded = np.rint(x)
    n, m = model.n, model.m

    def block(kind: str, second: int, width: int) -> np.ndarray:
        first = model.column(VariableKey(kind, 0, second))
        return rounded[first:first + width]

    starts, ends, supports = [], [], []
    for s in range(len(family.nodes)):
        start_nodes = np.flatnonzero(block(START, s, n))
        end_nodes = np.flatnonzero(block(END, s, n))
        if len(start_nodes) != 1 or len(end_nodes) != 1:
            raise ProvenanceError(
                f"Set node {s} starts at {len(start_nodes)} and ends at {len(end_nodes)} nodes"
            )
        starts.append(int(start_nodes[0]))
        ends.append(int(end_nodes[0]))
        supports.append(tuple(int(a) for a in np.flatnonzero(block(FLOW, s, m))))
    split_nodes = []
    for p in range(len(family.partitions)):
        nodes = np.flatnonzero(block(SPLIT, p, n))
        if len(nodes) != 1:
            raise ProvenanceError(f"Partition {p} splits at {len(nodes)} nodes")
        split_nodes.append(int(nodes[0]))

    return SubproblemSolution(
        family_id=family.family_id,
        root=model.root,
        family=family,
        objective=model.objective(rounded),
        split_nodes=tuple(split_nodes),
        set_starts=tuple(starts),
        set_ends=tuple(ends),
        set_arcs=tuple(supports),
    )
