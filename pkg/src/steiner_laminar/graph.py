"""Steiner instances: SteinLib STP ingestion, bidirected view and shortest paths."""

import heapq
import logging
import random
import re
import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple

import networkx as nx
import numpy as np

logger = logging.getLogger(__name__)

STP_MAGIC = "33D32945 STP File, STP Format Version 1.0"


class InstanceError(Exception):
    """Exception raised for invalid Steiner instances."""

    pass


class StpFormatError(InstanceError):
    """Exception raised for malformed STP text."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


class Edge(NamedTuple):
    """Undirected edge with 0-based endpoints."""

    u: int
    v: int
    cost: float


@dataclass(frozen=True)
class Instance:
    """Undirected weighted graph plus an ordered terminal set.

    Nodes are 0-based internally; STP files and reports use 1-based ids.
    """

    node_count: int
    edges: tuple[Edge, ...]
    terminals: tuple[int, ...]
    name: str = "instance"
    integral: bool = field(init=False)

    def __post_init__(self) -> None:
        object.__setattr__(
            self, "integral", all(float(e.cost).is_integer() for e in self.edges)
        )
        validate_instance(self)

    @property
    def edge_count(self) -> int:
        return len(self.edges)

    @property
    def steiner_nodes(self) -> tuple[int, ...]:
        """Non-terminal nodes in ascending order."""
        terminal_set = set(self.terminals)
        return tuple(v for v in range(self.node_count) if v not in terminal_set)

    def cost_value(self, value: float) -> int | float:
        """Return value as an int for integral instances, float otherwise."""
        if self.integral and float(value).is_integer():
            return int(value)
        return float(value)

    def to_networkx(self) -> nx.Graph:
        """Simple graph keeping the cheapest edge between each node pair."""
        graph = nx.Graph()
        graph.add_nodes_from(range(self.node_count))
        for index, (u, v, cost) in enumerate(self.edges):
            if graph.has_edge(u, v) and graph[u][v]["cost"] <= cost:
                continue
            graph.add_edge(u, v, cost=cost, index=index)
        return graph


def validate_instance(g: Instance) -> None:
    """Check the structural invariants of an instance.

    Raises:
        InstanceError: On out-of-range ids, self-loops, negative costs,
            a bad terminal set, or terminals that are not connected.
    """
    n = g.node_count
    if n < 1:
        raise InstanceError(f"Instance needs at least one node, got {n}")
    for index, (u, v, cost) in enumerate(g.edges):
        if not (0 <= u < n and 0 <= v < n):
            raise InstanceError(f"Edge {index} has a node id out of range [1, {n}]")
        if u == v:
            raise InstanceError(f"Edge {index} is a self-loop on node {u + 1}")
        if cost < 0:
            raise InstanceError(f"Edge {index} has negative cost {cost}")
    if not g.terminals:
        raise InstanceError("Instance has no terminals")
    if len(set(g.terminals)) != len(g.terminals):
        raise InstanceError("Terminal list contains duplicates")
    for t in g.terminals:
        if not 0 <= t < n:
            raise InstanceError(f"Terminal {t + 1} out of range [1, {n}]")

    graph = nx.Graph()
    graph.add_nodes_from(range(n))
    graph.add_edges_from((u, v) for u, v, _ in g.edges)
    component = nx.node_connected_component(graph, g.terminals[0])
    missing = [t + 1 for t in g.terminals if t not in component]
    if missing:
        raise InstanceError(f"Terminals {missing} are not connected to terminal {g.terminals[0] + 1}")


def commodity_sinks(g: Instance, root: int) -> tuple[int, ...]:
    """Return the sink t_k of every commodity k, in terminal input order.

    Raises:
        InstanceError: If root is not a terminal.
    """
    if root not in g.terminals:
        raise InstanceError(f"Root {root + 1} is not a terminal")
    return tuple(t for t in g.terminals if t != root)


_SECTION_RE = re.compile(r"^section\s+(\w+)$", re.IGNORECASE)


def parse_stp(text: str | bytes, name: str = "instance") -> Instance:
    """Parse SteinLib STP text into an Instance.

    Recognizes the Graph and Terminals sections; other sections (Comment,
    Coordinates, ...) are skipped. Declared counts are cross-checked
    against the listed lines.

    Args:
        text: STP file contents.
        name: Instance name; overridden by a `Name` line in the Comment section.

    Returns:
        Validated Instance.

    Raises:
        StpFormatError: On malformed sections, count mismatches, bad ids or costs.
        InstanceError: If the terminals are not connected.
    """
    if isinstance(text, bytes):
        text = text.decode("utf-8", errors="replace")

    node_count: int | None = None
    declared_edges: int | None = None
    declared_terminals: int | None = None
    edges: list[Edge] = []
    terminals: list[int] = []
    section: str | None = None
    seen_eof = False
    sections_seen: set[str] = set()

    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if lineno == 1 and line.upper().startswith("33D32945"):
            continue
        tokens = line.split()
        keyword = tokens[0].lower()

        if section is None:
            if keyword == "eof":
                seen_eof = True
                break
            match = _SECTION_RE.match(" ".join(tokens))
            if not match:
                raise StpFormatError(f"Expected SECTION header, got {line!r}", lineno)
            section = match.group(1).lower()
            if section in sections_seen:
                raise StpFormatError(f"Duplicate section {match.group(1)!r}", lineno)
            sections_seen.add(section)
            continue

        if keyword == "end":
            section = None
            continue

        if section == "comment":
            if keyword == "name" and len(tokens) > 1:
                name = line.split(None, 1)[1].strip().strip('"')
        elif section == "graph":
            if keyword == "nodes":
                node_count = _parse_int(tokens, 1, lineno)
            elif keyword == "edges":
                declared_edges = _parse_int(tokens, 1, lineno)
            elif keyword == "e":
                if node_count is None:
                    raise StpFormatError("Edge listed before Nodes", lineno)
                if len(tokens) != 4:
                    raise StpFormatError(f"Edge line needs 3 fields, got {line!r}", lineno)
                u = _parse_node(tokens[1], node_count, lineno)
                v = _parse_node(tokens[2], node_count, lineno)
                cost = _parse_cost(tokens[3], lineno)
                if u == v:
                    raise StpFormatError(f"Self-loop on node {u + 1}", lineno)
                edges.append(Edge(u, v, cost))
            elif keyword in ("a", "arcs"):
                raise StpFormatError("Arc-weighted (directed) instances are not supported", lineno)
            else:
                raise StpFormatError(f"Unknown Graph entry {tokens[0]!r}", lineno)
        elif section == "terminals":
            if keyword == "terminals":
                declared_terminals = _parse_int(tokens, 1, lineno)
            elif keyword == "t":
                if node_count is None:
                    raise StpFormatError("Terminals section precedes Graph section", lineno)
                if len(tokens) != 2:
                    raise StpFormatError(f"Terminal line needs 1 field, got {line!r}", lineno)
                terminals.append(_parse_node(tokens[1], node_count, lineno))
            elif keyword == "root":
                logger.debug("Ignoring Root line %d; the root is chosen at solve time", lineno)
            else:
                raise StpFormatError(f"Unknown Terminals entry {tokens[0]!r}", lineno)

    if section is not None:
        raise StpFormatError(f"Section {section!r} is not closed with END")
    if not seen_eof:
        raise StpFormatError("Missing EOF marker")
    if node_count is None or "graph" not in sections_seen:
        raise StpFormatError("Missing Graph section")
    if "terminals" not in sections_seen:
        raise StpFormatError("Missing Terminals section")
    if declared_edges is not None and declared_edges != len(edges):
        raise StpFormatError(f"Declared {declared_edges} edges but listed {len(edges)}")
    if declared_terminals is not None and declared_terminals != len(terminals):
        raise StpFormatError(
            f"Declared {declared_terminals} terminals but listed {len(terminals)}"
        )

    return Instance(
        node_count=node_count,
        edges=tuple(edges),
        terminals=tuple(terminals),
        name=name,
    )


def _parse_int(tokens: list[str], index: int, lineno: int) -> int:
    try:
        value = int(tokens[index])
    except (IndexError, ValueError) as e:
        raise StpFormatError(f"Expected an integer after {tokens[0]!r}", lineno) from e
    if value < 0:
        raise StpFormatError(f"Negative count {value}", lineno)
    return value


def _parse_node(token: str, node_count: int, lineno: int) -> int:
    try:
        node = int(token)
    except ValueError as e:
        raise StpFormatError(f"Bad node id {token!r}", lineno) from e
    if not 1 <= node <= node_count:
        raise StpFormatError(f"Node id {node} out of range [1, {node_count}]", lineno)
    return node - 1


def _parse_cost(token: str, lineno: int) -> float:
    try:
        cost = float(token)
    except ValueError as e:
        raise StpFormatError(f"Bad edge cost {token!r}", lineno) from e
    if cost < 0:
        raise StpFormatError(f"Negative edge cost {cost}", lineno)
    return cost


def load_instance(path: Path) -> Instance:
    """Read and parse an STP file; the instance is named after the file stem."""
    return parse_stp(path.read_bytes(), name=path.stem)


def serialize_stp(g: Instance) -> str:
    """Render an instance as SteinLib STP text (inverse of parse_stp)."""
    from steiner_laminar.utils import format_cost

    lines = [
        STP_MAGIC,
        "",
        "SECTION Comment",
        f'Name    "{g.name}"',
        "END",
        "",
        "SECTION Graph",
        f"Nodes {g.node_count}",
        f"Edges {g.edge_count}",
    ]
    lines.extend(f"E {u + 1} {v + 1} {format_cost(cost)}" for u, v, cost in g.edges)
    lines += ["END", "", "SECTION Terminals", f"Terminals {len(g.terminals)}"]
    lines.extend(f"T {t + 1}" for t in g.terminals)
    lines += ["END", "", "EOF", ""]
    return "\n".join(lines)


def random_instance(
    n: int,
    extra_edges: int,
    terminal_count: int,
    max_cost: int = 10,
    seed: int | None = None,
    name: str | None = None,
) -> Instance:
    """Generate a connected random instance with integer costs in [1, max_cost].

    A random spanning tree guarantees connectivity; extra_edges further
    distinct node pairs are added on top.

    Raises:
        InstanceError: If terminal_count is not in [1, n].
    """
    if not 1 <= terminal_count <= n:
        raise InstanceError(f"terminal_count must be in [1, {n}], got {terminal_count}")
    rng = random.Random(seed)
    order = list(range(n))
    rng.shuffle(order)
    pairs: set[tuple[int, int]] = set()
    edges: list[Edge] = []
    for i in range(1, n):
        u, v = order[i], order[rng.randrange(i)]
        pairs.add((min(u, v), max(u, v)))
        edges.append(Edge(u, v, float(rng.randint(1, max_cost))))
    max_pairs = n * (n - 1) // 2
    while len(pairs) < min(max_pairs, n - 1 + extra_edges):
        u, v = rng.sample(range(n), 2)
        key = (min(u, v), max(u, v))
        if key in pairs:
            continue
        pairs.add(key)
        edges.append(Edge(u, v, float(rng.randint(1, max_cost))))
    terminals = tuple(rng.sample(range(n), terminal_count))
    return Instance(
        node_count=n,
        edges=tuple(edges),
        terminals=terminals,
        name=name or f"random-{n}-{seed}",
    )


@dataclass(frozen=True, eq=False)
class BidirectedView:
    """Two antiparallel arcs per edge: arc 2e is u->v and arc 2e+1 is v->u."""

    node_count: int
    tails: np.ndarray
    heads: np.ndarray
    costs: np.ndarray
    arc_edge: np.ndarray
    out_arcs: tuple[tuple[int, ...], ...]
    in_arcs: tuple[tuple[int, ...], ...]

    @property
    def arc_count(self) -> int:
        return len(self.tails)


def bidirect(g: Instance) -> BidirectedView:
    """Build the bidirected arc view of an instance, copying edge costs to both arcs."""
    m = 2 * g.edge_count
    tails = np.empty(m, dtype=np.int64)
    heads = np.empty(m, dtype=np.int64)
    costs = np.empty(m, dtype=np.float64)
    for e, (u, v, cost) in enumerate(g.edges):
        tails[2 * e], heads[2 * e] = u, v
        tails[2 * e + 1], heads[2 * e + 1] = v, u
        costs[2 * e] = costs[2 * e + 1] = cost
    out_arcs: list[list[int]] = [[] for _ in range(g.node_count)]
    in_arcs: list[list[int]] = [[] for _ in range(g.node_count)]
    for a in range(m):
        out_arcs[tails[a]].append(a)
        in_arcs[heads[a]].append(a)
    return BidirectedView(
        node_count=g.node_count,
        tails=tails,
        heads=heads,
        costs=costs,
        arc_edge=np.arange(m, dtype=np.int64) // 2,
        out_arcs=tuple(tuple(a) for a in out_arcs),
        in_arcs=tuple(tuple(a) for a in in_arcs),
    )


class ShortestPathTree(NamedTuple):
    """Single-source result: distances and the arc entering each node (-1 for none)."""

    source: int
    dist: np.ndarray
    pred_arc: np.ndarray


class DistanceOracle:
    """Lazily cached single-source shortest-path trees over a bidirected view.

    Cache fills are guarded by a lock; two threads filling the same source
    compute the same tree, so the race is harmless.
    """

    def __init__(self, view: BidirectedView):
        self.view = view
        self._trees: dict[int, ShortestPathTree] = {}
        self._lock = threading.Lock()
        self._matrix: np.ndarray | None = None

    def tree(self, source: int) -> ShortestPathTree:
        """Return the shortest-path tree rooted at source, computing it on first use."""
        cached = self._trees.get(source)
        if cached is not None:
            return cached
        computed = _dijkstra(self.view, source)
        with self._lock:
            return self._trees.setdefault(source, computed)

    def distance(self, u: int, v: int) -> float:
        return float(self.tree(u).dist[v])

    def shortest_path(self, u: int, v: int) -> tuple[float, tuple[int, ...]]:
        """Return (cost, arcs) of a shortest directed path from u to v.

        Raises:
            InstanceError: If v is unreachable from u.
        """
        tree = self.tree(u)
        cost = float(tree.dist[v])
        if np.isinf(cost):
            raise InstanceError(f"Node {v + 1} is unreachable from node {u + 1}")
        arcs: list[int] = []
        node = v
        while node != u:
            arc = int(tree.pred_arc[node])
            arcs.append(arc)
            node = int(self.view.tails[arc])
        arcs.reverse()
        return cost, tuple(arcs)

    def matrix(self) -> np.ndarray:
        """All-pairs distance matrix; row i holds distances from node i."""
        if self._matrix is None:
            n = self.view.node_count
            rows = np.empty((n, n), dtype=np.float64)
            for source in range(n):
                rows[source] = self.tree(source).dist
            with self._lock:
                if self._matrix is None:
                    self._matrix = rows
            logger.debug("Filled %dx%d distance matrix", n, n)
        return self._matrix

    @property
    def cached_sources(self) -> int:
        return len(self._trees)


def shortest_path(d: DistanceOracle, u: int, v: int) -> tuple[float, tuple[int, ...]]:
    """Shortest u->v path through the oracle; see DistanceOracle.shortest_path."""
    return d.shortest_path(u, v)


def _dijkstra(view: BidirectedView, source: int) -> ShortestPathTree:
    """Binary-heap Dijkstra recording predecessor arcs.

    Heap entries are (distance, node) so equal distances settle lower ids first.
    """
    n = view.node_count
    dist = np.full(n, np.inf)
    pred_arc = np.full(n, -1, dtype=np.int64)
    dist[source] = 0.0
    settled = np.zeros(n, dtype=bool)
    heads = view.heads
    costs = view.costs
    out_arcs = view.out_arcs
    heap: list[tuple[float, int]] = [(0.0, source)]
    while heap:
        d_u, u = heapq.heappop(heap)
        if settled[u]:
            continue
        settled[u] = True
        for a in out_arcs[u]:
            w = int(heads[a])
            if settled[w]:
                continue
            d_w = d_u + float(costs[a])
            if d_w < dist[w]:
                dist[w] = d_w
                pred_arc[w] = a
                heapq.heappush(heap, (d_w, w))
    return ShortestPathTree(source=source, dist=dist, pred_arc=pred_arc)
