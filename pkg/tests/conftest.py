"""Shared fixtures: small hand-built instances, seeded random batteries, STP files."""

import os
import random
import tempfile
from collections.abc import Callable, Iterator
from pathlib import Path

import pytest

# The CLI reads ~/.steiner-laminar.yml at import time; keep it out of the real home.
os.environ["HOME"] = tempfile.mkdtemp(prefix="steiner-laminar-home-")

from steiner_laminar.config import clear_config_cache  # noqa: E402
from steiner_laminar.graph import Edge, Instance, random_instance, serialize_stp  # noqa: E402

DATA_DIR = Path(__file__).parent / "data"


@pytest.fixture(autouse=True)
def fresh_config_cache() -> Iterator[None]:
    clear_config_cache()
    yield
    clear_config_cache()


def make_instance(
    node_count: int,
    edges: list[tuple[int, int, float]],
    terminals: list[int],
    name: str = "instance",
) -> Instance:
    """Build an instance from 1-based (u, v, cost) triples and 1-based terminals."""
    return Instance(
        node_count=node_count,
        edges=tuple(Edge(u - 1, v - 1, float(c)) for u, v, c in edges),
        terminals=tuple(t - 1 for t in terminals),
        name=name,
    )


def random_battery(count: int, seed: int, terminal_counts=(3, 4, 5)) -> Iterator[Instance]:
    """Seeded random instances with n <= 12 and integer costs in [1, 10]."""
    rng = random.Random(seed)
    for i in range(count):
        n = rng.randint(6, 12)
        terminals = rng.choice(terminal_counts)
        yield random_instance(
            n, rng.randint(0, n), terminals, max_cost=10, seed=seed * 1000 + i
        )


@pytest.fixture
def path_graph() -> Instance:
    """r - a - t with costs 2 and 3."""
    return make_instance(3, [(1, 2, 2), (2, 3, 3)], [1, 3], name="path")


@pytest.fixture
def star_graph() -> Instance:
    """Center c (node 1) with r, t1, t2 attached at cost 1."""
    return make_instance(4, [(1, 2, 1), (1, 3, 1), (1, 4, 1)], [2, 3, 4], name="star")


@pytest.fixture
def split_graph() -> Instance:
    """Seven nodes where commodities k2, k3 share a cheap subpath below a.

    Nodes: 1=r, 2=a, 3=b, 4=t1, 5=t2, 6=t3, 7=c. The optimal tree
    r-a, a-t1, a-b, b-t2, b-t3 costs 5; the detour r-c-t1 costs 10.
    """
    return make_instance(
        7,
        [(1, 2, 1), (2, 4, 1), (2, 3, 1), (3, 5, 1), (3, 6, 1), (1, 7, 5), (7, 4, 5)],
        [1, 4, 5, 6],
        name="split",
    )


@pytest.fixture
def cycle_graph() -> Instance:
    """Four-node cycle with three terminals (n=4, |E|=4, b=2)."""
    return make_instance(4, [(1, 2, 1), (2, 3, 2), (3, 4, 3), (4, 1, 4)], [1, 2, 3], name="cycle")


@pytest.fixture
def make_random() -> Callable[..., Instance]:
    """Factory for seeded random instances."""

    def factory(n: int = 10, extra: int = 8, terminals: int = 4, seed: int = 0) -> Instance:
        return random_instance(n, extra, terminals, max_cost=10, seed=seed)

    return factory


@pytest.fixture
def write_stp(tmp_path: Path) -> Callable[[Instance], Path]:
    """Write an instance to <tmp>/<name>.stp and return the path."""

    def writer(g: Instance) -> Path:
        path = tmp_path / f"{g.name}.stp"
        path.write_text(serialize_stp(g), encoding="utf-8")
        return path

    return writer


@pytest.fixture
def steinlib() -> Callable[[str], Instance]:
    """Load a SteinLib file from tests/data, skipping when it is not present."""
    from steiner_laminar.graph import load_instance

    def loader(name: str) -> Instance:
        path = DATA_DIR / f"{name}.stp"
        if not path.exists():
            pytest.skip(f"{path.name} not available in tests/data")
        return load_instance(path)

    return loader
