"""Laminar families over the commodity set K and their enumeration.

A family is stored as its tree representation: node 0 is the root (the
set K), nodes follow in pre-order, and the children of every node are
ordered by their lowest commodity. Commodity sets are bitmasks, bit k
standing for commodity k (printed 1-based as k1, k2, ...).
"""

import logging
from collections.abc import Iterator
from dataclasses import dataclass
from typing import NamedTuple, Union

from steiner_laminar.utils import format_duration

logger = logging.getLogger(__name__)

MAX_COMMODITIES = 12

# Nested tuples of commodity indices, e.g. ((0, 1), 2)
Nested = Union[int, tuple["Nested", ...]]


class LaminarError(Exception):
    """Exception raised for invalid laminar families or queries."""

    pass


class FamilyNode(NamedTuple):
    """One set of the family with its position in the tree representation."""

    mask: int
    parent: int | None
    children: tuple[int, ...]

    @property
    def is_leaf(self) -> bool:
        return not self.children

    @property
    def size(self) -> int:
        return bin(self.mask).count("1")


class Partition(NamedTuple):
    """Split of the set at node `parent` into the sets at nodes `children`."""

    parent: int
    children: tuple[int, ...]


@dataclass(frozen=True)
class LaminarFamily:
    """Laminar family over K = {0, ..., b-1} in tree representation."""

    b: int
    nodes: tuple[FamilyNode, ...]
    family_id: int = 0

    def __post_init__(self) -> None:
        self._validate()

    @classmethod
    def from_nested(cls, b: int, nested: Nested, family_id: int = 0) -> "LaminarFamily":
        """Build a family of any arity from nested tuples of commodity indices.

        Example:
            ``LaminarFamily.from_nested(3, ((0, 1), 2))`` is the family
            {K, {k1,k2}, {k1}, {k2}, {k3}}; ``(0, 1, 2)`` is the non-binary one.

        Raises:
            LaminarError: If the leaves are not exactly 0..b-1 or a node has one child.
        """
        nodes: list[FamilyNode] = []

        def place(item: Nested, parent: int | None) -> int:
            index = len(nodes)
            if isinstance(item, int):
                if not 0 <= item < b:
                    raise LaminarError(f"Commodity {item} out of range for b={b}")
                nodes.append(FamilyNode(1 << item, parent, ()))
                return index
            if len(item) < 2:
                raise LaminarError(f"Internal node needs at least 2 children, got {item!r}")
            nodes.append(FamilyNode(0, parent, ()))
            ordered = sorted(item, key=_lowest_leaf)
            children = tuple(place(child, index) for child in ordered)
            mask = 0
            for child in children:
                mask |= nodes[child].mask
            nodes[index] = FamilyNode(mask, parent, children)
            return index

        place(nested, None)
        return cls(b=b, nodes=tuple(nodes), family_id=family_id)

    def _validate(self) -> None:
        if not 1 <= self.b <= 63:
            raise LaminarError(f"Commodity count must be in [1, 63], got {self.b}")
        full = (1 << self.b) - 1
        if not self.nodes or self.nodes[0].mask != full or self.nodes[0].parent is not None:
            raise LaminarError("Root set must be the full commodity set K")
        leaves = 0
        for index, node in enumerate(self.nodes):
            if node.mask == 0 or node.mask & ~full:
                raise LaminarError(f"Node {index} has an invalid set {node.mask:#b}")
            if node.is_leaf:
                if node.size != 1:
                    raise LaminarError(f"Leaf {index} is not a singleton")
                leaves |= node.mask
                continue
            if len(node.children) < 2:
                raise LaminarError(f"Node {index} has a single child")
            union = 0
            for child in node.children:
                if self.nodes[child].parent != index:
                    raise LaminarError(f"Node {child} does not point back to parent {index}")
                if union & self.nodes[child].mask:
                    raise LaminarError(f"Children of node {index} are not disjoint")
                union |= self.nodes[child].mask
            if union != node.mask:
                raise LaminarError(f"Children of node {index} do not cover its set")
        if leaves != full:
            raise LaminarError("Leaves do not cover every commodity")

    @property
    def is_binary(self) -> bool:
        """True if every non-singleton set has exactly two children."""
        return all(len(node.children) in (0, 2) for node in self.nodes)

    @property
    def partitions(self) -> tuple[Partition, ...]:
        """P(l): one partition per internal node, in node order."""
        return tuple(
            Partition(index, node.children)
            for index, node in enumerate(self.nodes)
            if not node.is_leaf
        )

    def sets(self) -> tuple[int, ...]:
        """S(l): the commodity sets in node order."""
        return tuple(node.mask for node in self.nodes)

    def node_of(self, mask: int) -> int:
        """Node index holding the set `mask`.

        Raises:
            LaminarError: If the set is not in the family.
        """
        for index, node in enumerate(self.nodes):
            if node.mask == mask:
                return index
        raise LaminarError(f"Set {format_set(mask)} is not in family {self.expression()}")

    def children_of(self, p: int) -> tuple[int, ...]:
        """S_l(p): the child sets of partition index p."""
        parts = self.partitions
        if not 0 <= p < len(parts):
            raise LaminarError(f"Partition {p} not in family (has {len(parts)})")
        return tuple(self.nodes[child].mask for child in parts[p].children)

    def partition_of(self, mask: int) -> int:
        """P_l(s): index of the partition splitting set `mask` (|s| >= 2)."""
        index = self.node_of(mask)
        if self.nodes[index].is_leaf:
            raise LaminarError(f"Singleton {format_set(mask)} is never partitioned")
        return self.partition_index(index)

    def partition_index(self, node_index: int) -> int:
        """Partition index of an internal node."""
        count = 0
        for index in range(node_index):
            if not self.nodes[index].is_leaf:
                count += 1
        return count

    def parent_of(self, mask: int) -> int | None:
        """The parent set of `mask`, or None for the root set K."""
        parent = self.nodes[self.node_of(mask)].parent
        return None if parent is None else self.nodes[parent].mask

    def nested(self, index: int = 0) -> Nested:
        """Nested-tuple form of the subtree at node index."""
        node = self.nodes[index]
        if node.is_leaf:
            return node.mask.bit_length() - 1
        return tuple(self.nested(child) for child in node.children)

    def expression(self, index: int = 0) -> str:
        """Nested-set text such as ``((k1,k2),k3)``; also the canonical encoding."""
        node = self.nodes[index]
        if node.is_leaf:
            return f"k{node.mask.bit_length()}"
        return "(" + ",".join(self.expression(child) for child in node.children) + ")"


def _lowest_leaf(item: Nested) -> int:
    if isinstance(item, int):
        return item
    return min(_lowest_leaf(child) for child in item)


def format_set(mask: int) -> str:
    """Render a commodity bitmask as ``{k1,k3}``."""
    members = [f"k{k + 1}" for k in range(mask.bit_length()) if mask >> k & 1]
    return "{" + ",".join(members) + "}"


def count_families(b: int) -> int:
    """Number of full binary laminar families over b commodities: (2b-3)!!.

    Raises:
        LaminarError: If b < 1.
    """
    if b < 1:
        raise LaminarError(f"Commodity count must be >= 1, got {b}")
    count = 1
    for factor in range(3, 2 * b - 2, 2):
        count *= factor
    return count


def enumerate_families(b: int) -> Iterator[LaminarFamily]:
    """Yield every full binary laminar family over b commodities exactly once.

    Leaf insertion: starting from the single leaf k1, commodity j is added by
    subdividing one of the 2j-3 edges of the current tree (the virtual edge
    above the root included) and hanging the new leaf there. Families are
    streamed with consecutive family ids in generation order.

    Raises:
        LaminarError: If b is outside [1, MAX_COMMODITIES].
    """
    if not 1 <= b <= MAX_COMMODITIES:
        raise LaminarError(
            f"Commodity count must be in [1, {MAX_COMMODITIES}], got {b}"
        )
    logger.debug("Enumerating %d families for b=%d", count_families(b), b)
    for family_id, tree in enumerate(_grow(0, 1, b)):
        yield LaminarFamily.from_nested(b, tree, family_id=family_id)


def _grow(tree: Nested, next_leaf: int, b: int) -> Iterator[Nested]:
    if next_leaf == b:
        yield tree
        return
    for grown in _insertions(tree, next_leaf):
        yield from _grow(grown, next_leaf + 1, b)


def _insertions(tree: Nested, leaf: int) -> Iterator[Nested]:
    """Every tree obtained by hanging `leaf` on one edge of `tree`, in pre-order."""
    yield (tree, leaf)
    if isinstance(tree, tuple):
        left, right = tree
        for grown in _insertions(left, leaf):
            yield (grown, right)
        for grown in _insertions(right, leaf):
            yield (left, grown)


def family_by_id(b: int, family_id: int) -> LaminarFamily:
    """Return the family with the given id from the enumeration order.

    Raises:
        LaminarError: If the id is out of range.
    """
    if not 0 <= family_id < count_families(b):
        raise LaminarError(f"Family id {family_id} out of range for b={b}")
    for family in enumerate_families(b):
        if family.family_id == family_id:
            return family
    raise LaminarError(f"Family id {family_id} not generated")  # pragma: no cover


def running_time_table(
    max_terminals: int, seconds_per_subproblem: float = 1.0
) -> list[tuple[int, int, str]]:
    """Rows of (terminals, family count, sequential time) for 3..max_terminals terminals."""
    rows = []
    for terminals in range(3, max_terminals + 1):
        count = count_families(terminals - 1)
        rows.append((terminals, count, format_duration(count * seconds_per_subproblem)))
    return rows
