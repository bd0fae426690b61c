"""Graph builders and hypothesis strategies shared by the test modules."""

import numpy as np
from hypothesis import strategies as st

from gsamp.graph import Graph


def path_graph(n: int) -> Graph:
    return Graph.from_edges(n, [(i, i + 1) for i in range(n - 1)])


def cycle_graph(n: int) -> Graph:
    return Graph.from_edges(n, [(i, (i + 1) % n) for i in range(n)])


def star_graph(n: int) -> Graph:
    return Graph.from_edges(n, [(0, i) for i in range(1, n)])


def complete_graph(n: int) -> Graph:
    return Graph.from_edges(n, [(i, j) for i in range(n) for j in range(i + 1, n)])


def random_connected_graph(n: int, rng: np.random.Generator, extra: float = 0.2) -> Graph:
    """Random spanning tree plus each remaining pair with probability ``extra``."""
    edges = set()
    order = rng.permutation(n)
    for i in range(1, n):
        a, b = int(order[i]), int(order[rng.integers(0, i)])
        edges.add((min(a, b), max(a, b)))
    for i in range(n):
        for j in range(i + 1, n):
            if rng.random() < extra:
                edges.add((i, j))
    return Graph.from_edges(n, edges)


@st.composite
def connected_graphs(draw, min_nodes: int = 2, max_nodes: int = 12):
    n = draw(st.integers(min_nodes, max_nodes))
    seed = draw(st.integers(0, 2**32 - 1))
    extra = draw(st.sampled_from([0.0, 0.1, 0.3, 0.6]))
    return random_connected_graph(n, np.random.default_rng(seed), extra)


@st.composite
def graphs(draw, min_nodes: int = 1, max_nodes: int = 12):
    """Arbitrary simple graphs, possibly disconnected or with isolated nodes."""
    n = draw(st.integers(min_nodes, max_nodes))
    pairs = [(i, j) for i in range(n) for j in range(i + 1, n)]
    keep = draw(st.lists(st.booleans(), min_size=len(pairs), max_size=len(pairs)))
    return Graph.from_edges(n, [p for p, k in zip(pairs, keep) if k])


@st.composite
def masks_for(draw, n: int):
    flags = draw(st.lists(st.booleans(), min_size=n, max_size=n))
    if not any(flags):
        flags[draw(st.integers(0, n - 1))] = True
    return np.array(flags)


finite = st.floats(-1e3, 1e3, allow_nan=False, allow_infinity=False)
