"""Undirected unweighted graph topologies and their matrix representations."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import ValidationError

EARTH_RADIUS_KM = 6371.0


def _frozen(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class GeoPoint:
    latitude: float
    longitude: float

    def __post_init__(self):
        if not -90.0 <= self.latitude <= 90.0:
            raise ValidationError(f"latitude {self.latitude} outside [-90, 90]")
        if not -180.0 <= self.longitude <= 180.0:
            raise ValidationError(f"longitude {self.longitude} outside [-180, 180]")


@dataclass(frozen=True, eq=False)
class Graph:
    """Graph with adjacency ``A``, degree vector ``d`` and Laplacian ``L = D - A``.

    Build instances with :meth:`from_edges` or :meth:`from_adjacency`; the raw
    constructor does no checking so that :func:`validate` can inspect broken
    inputs.
    """

    n_nodes: int
    edges: frozenset
    adjacency: np.ndarray
    degrees: np.ndarray
    laplacian: np.ndarray
    _neighbors: tuple = field(repr=False, default=())

    @classmethod
    def unchecked(cls, adjacency) -> "Graph":
        A = np.array(adjacency, dtype=np.int64)
        n = A.shape[0]
        degrees = A.sum(axis=1)
        # integer Laplacian first so that row sums are exactly zero
        L_int = np.diag(degrees) - A
        edges = frozenset(
            (int(i), int(j)) for i, j in zip(*np.nonzero(np.triu(A + A.T, k=1)))
        )
        neighbors = tuple(tuple(int(j) for j in np.flatnonzero(A[i])) for i in range(n))
        return cls(
            n_nodes=n,
            edges=edges,
            adjacency=_frozen(A),
            degrees=_frozen(degrees),
            laplacian=_frozen(L_int.astype(float)),
            _neighbors=neighbors,
        )

    @classmethod
    def from_adjacency(cls, adjacency) -> "Graph":
        g = cls.unchecked(adjacency)
        problems = validate(g)
        if problems:
            raise ValidationError("; ".join(str(p) for p in problems))
        return g

    @classmethod
    def from_edges(cls, n_nodes: int, edges: Iterable[tuple[int, int]]) -> "Graph":
        if n_nodes < 1:
            raise ValidationError("graph needs at least one node")
        A = np.zeros((n_nodes, n_nodes), dtype=np.int64)
        for i, j in edges:
            if not (0 <= i < n_nodes and 0 <= j < n_nodes):
                raise ValidationError(f"edge ({i}, {j}) out of range for {n_nodes} nodes")
            if i == j:
                raise ValidationError(f"self-loop at node {i}")
            A[i, j] = A[j, i] = 1
        return cls.from_adjacency(A)

    def neighbors(self, v: int) -> tuple[int, ...]:
        """1-hop neighbours of ``v`` in ascending index order."""
        return self._neighbors[v]

    def hop_distances(self, sources: Iterable[int]) -> np.ndarray:
        """BFS hop count from the nearest source; ``-1`` where unreachable."""
        dist = np.full(self.n_nodes, -1, dtype=np.int64)
        frontier = sorted(set(int(s) for s in sources))
        dist[frontier] = 0
        hops = 0
        while frontier:
            hops += 1
            nxt = []
            for u in frontier:
                for w in self._neighbors[u]:
                    if dist[w] < 0:
                        dist[w] = hops
                        nxt.append(w)
            frontier = nxt
        return dist

    def is_connected(self) -> bool:
        return bool(np.all(self.hop_distances([0]) >= 0))


@dataclass(frozen=True)
class Violation:
    invariant: str
    indices: tuple
    message: str

    def __str__(self):
        return f"{self.invariant} {self.indices}: {self.message}"


def validate(g: Graph) -> list[Violation]:
    """Check every Graph invariant; never raises."""
    out: list[Violation] = []
    A = np.asarray(g.adjacency)
    if A.ndim != 2 or A.shape[0] != A.shape[1] or A.shape[0] != g.n_nodes:
        return [Violation("shape", tuple(A.shape), f"adjacency is not {g.n_nodes}x{g.n_nodes}")]
    n = g.n_nodes

    bad = np.argwhere((A != 0) & (A != 1))
    for i, j in bad:
        out.append(Violation("binary", (int(i), int(j)), f"adjacency entry {A[i, j]} is not 0/1"))
    for i in np.flatnonzero(np.diag(A)):
        out.append(Violation("no-self-loop", (int(i), int(i)), "nonzero diagonal entry"))
    asym = np.argwhere(np.triu(A != A.T, k=1))
    for i, k in asym:
        out.append(
            Violation(
                "symmetric",
                (int(i), int(k)),
                f"A[{i},{k}]={A[i, k]} but A[{k},{i}]={A[k, i]}",
            )
        )

    deg = np.asarray(g.degrees)
    for i in np.flatnonzero(deg != A.sum(axis=1)):
        out.append(Violation("degree", (int(i),), "degree differs from adjacency row sum"))

    L = np.asarray(g.laplacian)
    expected = np.diag(A.sum(axis=1)) - A
    for i, j in np.argwhere(L != expected):
        out.append(Violation("laplacian", (int(i), int(j)), "L differs from D - A"))
    for i in np.flatnonzero(L.sum(axis=1) != 0):
        out.append(Violation("laplacian-row-sum", (int(i),), "row sum is not zero"))
    if n and np.array_equal(L, L.T):
        lam_min = float(np.linalg.eigvalsh(L)[0])
        if lam_min < -1e-10:
            out.append(Violation("laplacian-psd", (), f"smallest eigenvalue {lam_min:.3e}"))
    return out


def haversine_matrix(lat, lon) -> np.ndarray:
    """Pairwise great-circle distances in km."""
    phi = np.radians(np.asarray(lat, dtype=float))
    lam = np.radians(np.asarray(lon, dtype=float))
    dphi = phi[:, None] - phi[None, :]
    dlam = lam[:, None] - lam[None, :]
    a = np.sin(dphi / 2) ** 2 + np.cos(phi[:, None]) * np.cos(phi[None, :]) * np.sin(dlam / 2) ** 2
    return 2 * EARTH_RADIUS_KM * np.arcsin(np.sqrt(np.clip(a, 0.0, 1.0)))


def _as_points(points) -> tuple[np.ndarray, np.ndarray]:
    if len(points) and isinstance(points[0], GeoPoint):
        lat = np.array([p.latitude for p in points], dtype=float)
        lon = np.array([p.longitude for p in points], dtype=float)
    else:
        arr = np.asarray(points, dtype=float)
        if arr.ndim != 2 or arr.shape[1] != 2:
            raise ValidationError("points must be GeoPoints or an (n, 2) array of (lat, lon)")
        for la, lo in arr:
            GeoPoint(la, lo)
        lat, lon = arr[:, 0], arr[:, 1]
    return lat, lon


def build_knn_graph(points: Sequence, k: int = 5) -> Graph:
    """Connect every station to its ``k`` nearest neighbours (haversine) and
    symmetrise by union."""
    lat, lon = _as_points(points)
    n = lat.size
    if n < 2:
        raise ValidationError("need at least two points")
    if not 1 <= k < n:
        raise ValidationError(f"k={k} must satisfy 1 <= k < {n}")
    coords = np.column_stack([lat, lon])
    _, counts = np.unique(coords, axis=0, return_counts=True)
    if np.any(counts > 1):
        raise ValidationError("duplicate station coordinates")

    D = haversine_matrix(lat, lon)
    A = np.zeros((n, n), dtype=np.int64)
    idx = np.arange(n)
    for i in range(n):
        others = idx[idx != i]
        # lexsort: distance first, node index breaks ties
        order = others[np.lexsort((others, D[i, others]))]
        A[i, order[:k]] = 1
    A = np.maximum(A, A.T)
    return Graph.from_adjacency(A)


@dataclass(frozen=True)
class Neighborhood:
    center: int
    members: tuple[int, ...]
    local_edges: frozenset

    def local_laplacian(self) -> np.ndarray:
        """Laplacian of the induced subgraph, rows in ``members`` order."""
        pos = {v: i for i, v in enumerate(self.members)}
        m = len(self.members)
        A = np.zeros((m, m), dtype=np.int64)
        for a, b in self.local_edges:
            A[pos[a], pos[b]] = A[pos[b], pos[a]] = 1
        return (np.diag(A.sum(axis=1)) - A).astype(float)


def induced_neighborhood(g: Graph, v: int) -> Neighborhood:
    if not 0 <= v < g.n_nodes:
        raise IndexError(f"node {v} out of range for {g.n_nodes} nodes")
    members = (v,) + g.neighbors(v)
    member_set = set(members)
    local = frozenset(e for e in g.edges if e[0] in member_set and e[1] in member_set)
    return Neighborhood(center=v, members=members, local_edges=local)
