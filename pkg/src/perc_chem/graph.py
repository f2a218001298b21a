"""Finite ball-shaped pieces of ℤ^d and of the discrete Heisenberg group.

A :class:`FiniteRegion` is the ball ``B(o, L)`` of the infinite Cayley graph,
stored as a CSR adjacency. Vertex ids are dense and follow BFS order from the
base point, with generators tried in a fixed order; that order is the total
order used for every deterministic tie-break downstream.
"""

from __future__ import annotations

from collections import OrderedDict
from dataclasses import dataclass, field
from math import comb
import os
from typing import Iterable, TextIO

import numpy as np

from . import kernels
from .errors import ConfigError, GeometryError, InvariantViolation, ResourceError

ZD = "zd"
HEISENBERG = "heisenberg"
BOX = "box"

DEFAULT_BUDGET_MB = 2048


def budget_bytes() -> int:
    raw = os.environ.get("PERC_CHEM_BUDGET_MB", str(DEFAULT_BUDGET_MB))
    try:
        return int(float(raw) * 2**20)
    except ValueError:
        raise ConfigError(f"PERC_CHEM_BUDGET_MB must be a number, got {raw!r}") from None


def estimate_bytes(n_vertices: int, coord_dim: int, degree: int) -> int:
    # coords + base distances + CSR (indptr, indices, adj_edge) + edge list
    m = n_vertices * degree // 2
    return n_vertices * (8 * coord_dim + 4 + 4) + 2 * m * 8 + m * 8


def _check_budget(n_vertices: int, coord_dim: int, degree: int, what: str) -> None:
    need = estimate_bytes(n_vertices, coord_dim, degree)
    if need > budget_bytes():
        raise ResourceError(
            f"{what} needs {n_vertices} vertices (~{need / 2**20:.0f} MB), over the "
            f"{budget_bytes() / 2**20:.0f} MB budget (PERC_CHEM_BUDGET_MB)"
        )


class VertexSet:
    """Subset of a region's vertices, held as a boolean mask."""

    __slots__ = ("mask",)

    def __init__(self, mask: np.ndarray):
        self.mask = np.asarray(mask, dtype=bool)

    @classmethod
    def from_ids(cls, n: int, ids: Iterable[int]) -> "VertexSet":
        mask = np.zeros(n, dtype=bool)
        mask[np.fromiter(ids, dtype=np.int64)] = True
        return cls(mask)

    def ids(self) -> np.ndarray:
        return np.flatnonzero(self.mask)

    def __contains__(self, v: int) -> bool:
        return bool(self.mask[v])

    def __len__(self) -> int:
        return int(self.mask.sum())

    def __iter__(self):
        return iter(self.ids().tolist())

    def __or__(self, other: "VertexSet") -> "VertexSet":
        return VertexSet(self.mask | other.mask)

    def __and__(self, other: "VertexSet") -> "VertexSet":
        return VertexSet(self.mask & other.mask)

    def __sub__(self, other: "VertexSet") -> "VertexSet":
        return VertexSet(self.mask & ~other.mask)

    def __le__(self, other: "VertexSet") -> bool:
        return not np.any(self.mask & ~other.mask)

    def __eq__(self, other: object) -> bool:
        return isinstance(other, VertexSet) and np.array_equal(self.mask, other.mask)

    def __repr__(self) -> str:
        return f"VertexSet({len(self)} of {self.mask.size})"


@dataclass(eq=False)
class Graph:
    """Simple undirected graph in CSR form; the host type for chains and BFS."""

    edges: np.ndarray  # (m, 2) int32, rows sorted, u < v
    indptr: np.ndarray  # (n + 1,) int32
    indices: np.ndarray  # neighbour ids, ascending within each row
    adj_edge: np.ndarray  # edge id of each CSR entry
    _edge_ids: dict = field(default=None, repr=False)
    _dcache: OrderedDict = field(default_factory=OrderedDict, repr=False)

    @classmethod
    def from_edges(cls, n: int, edges: np.ndarray) -> "Graph":
        edges = np.asarray(edges, dtype=np.int32).reshape(-1, 2)
        if len(edges):
            edges = np.sort(edges, axis=1)
            if np.any(edges[:, 0] == edges[:, 1]):
                raise InvariantViolation("self-loop in edge list")
            order = np.lexsort((edges[:, 1], edges[:, 0]))
            edges = np.ascontiguousarray(edges[order])
            if np.any(np.all(edges[1:] == edges[:-1], axis=1)):
                raise InvariantViolation("multi-edge in edge list")
        m = len(edges)
        src = np.concatenate([edges[:, 0], edges[:, 1]])
        dst = np.concatenate([edges[:, 1], edges[:, 0]])
        eid = np.concatenate([np.arange(m), np.arange(m)])
        order = np.lexsort((dst, src))
        indptr = np.zeros(n + 1, dtype=np.int32)
        np.cumsum(np.bincount(src, minlength=n), out=indptr[1:])
        return cls(
            edges=edges,
            indptr=indptr,
            indices=np.ascontiguousarray(dst[order], dtype=np.int32),
            adj_edge=np.ascontiguousarray(eid[order], dtype=np.int32),
        )

    @property
    def n_vertices(self) -> int:
        return len(self.indptr) - 1

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    def neighbors(self, v: int) -> np.ndarray:
        return self.indices[self.indptr[v] : self.indptr[v + 1]]

    def degrees(self) -> np.ndarray:
        return np.diff(self.indptr)

    def edge_id(self, u: int, v: int) -> int:
        if self._edge_ids is None:
            self._edge_ids = {(int(a), int(b)): i for i, (a, b) in enumerate(self.edges.tolist())}
        key = (u, v) if u < v else (v, u)
        try:
            return self._edge_ids[key]
        except KeyError:
            raise ConfigError(f"{u} and {v} are not adjacent") from None

    def distances(self, v: int, radius: int = -1) -> np.ndarray:
        """BFS distances from ``v`` (``-1`` beyond ``radius`` or unreachable)."""
        key = (int(v), int(radius))
        hit = self._dcache.get(key)
        if hit is not None:
            self._dcache.move_to_end(key)
            return hit
        _, dist = kernels.bfs(self.indptr, self.indices, int(v), int(radius))
        dist.setflags(write=False)
        self._dcache[key] = dist
        if len(self._dcache) > 256:
            self._dcache.popitem(last=False)
        return dist

    def ball(self, v: int, r: int) -> VertexSet:
        return VertexSet(self.distances(v, r) >= 0) if r >= 0 else VertexSet(np.zeros(self.n_vertices, bool))

    def sphere(self, v: int, r: int) -> VertexSet:
        return VertexSet(self.distances(v, r) == r)

    def distance(self, u: int, v: int) -> int:
        d = int(self.distances(u)[v])
        if d < 0:
            raise InvariantViolation(f"vertices {u} and {v} are not connected in the host graph")
        return d

    def path_edges(self, path: list[int]) -> list[int]:
        return [self.edge_id(a, b) for a, b in zip(path[:-1], path[1:])]


@dataclass(eq=False)
class FiniteRegion(Graph):
    """The ball ``B(base, L)`` of a transitive graph."""

    coords: np.ndarray = None  # (n, k) int64
    family: str = ZD
    dim: int = 0
    radius: int = 0
    base: int = 0
    base_dist: np.ndarray = None
    _index: dict = field(default=None, repr=False)

    @property
    def interior_degree(self) -> int:
        return 2 * self.dim if self.family == ZD else 4

    def vertex(self, coord) -> int:
        if self._index is None:
            self._index = {tuple(c): i for i, c in enumerate(self.coords.tolist())}
        try:
            return self._index[tuple(int(c) for c in coord)]
        except KeyError:
            raise ConfigError(f"{tuple(coord)} is not in the region") from None

    def coord(self, v: int) -> tuple:
        return tuple(int(c) for c in self.coords[v])

    def distance(self, u: int, v: int) -> int:
        if self.family == ZD:
            return int(np.abs(self.coords[u] - self.coords[v]).sum())
        return super().distance(u, v)

    def interior_margin(self, u: int, v: int) -> bool:
        """True when the in-region distance is certified equal to the true one."""
        return int(self.base_dist[u]) + self.distance(u, v) <= self.radius

    def within(self, v: int, margin: int) -> bool:
        """``B(v, margin)`` lies inside the region with unclipped distances."""
        return int(self.base_dist[v]) + margin <= self.radius

    def header(self) -> dict:
        return {"family": self.family, "dim": self.dim, "L": self.radius}


def _assemble(coords: list, edges: list, family: str, dim: int, radius: int) -> FiniteRegion:
    n = len(coords)
    g = Graph.from_edges(n, np.asarray(edges, dtype=np.int32).reshape(-1, 2))
    region = FiniteRegion(
        edges=g.edges,
        indptr=g.indptr,
        indices=g.indices,
        adj_edge=g.adj_edge,
        coords=np.asarray(coords, dtype=np.int64).reshape(n, -1),
        family=family,
        dim=dim,
        radius=radius,
        base=0,
    )
    region.base_dist = region.distances(0) if family != ZD else np.abs(region.coords).sum(axis=1).astype(np.int32)
    return region


def _cayley_ball(radius: int, gens: list, mul, identity: tuple, family: str, dim: int, degree: int):
    """BFS ball over right multiplication by ``gens`` (inverses included)."""
    index = {identity: 0}
    coords = [identity]
    frontier = [identity]
    limit = budget_bytes()
    for _ in range(radius):
        nxt = []
        for g in frontier:
            for s in gens:
                h = mul(g, s)
                if h not in index:
                    index[h] = len(coords)
                    coords.append(h)
                    nxt.append(h)
        frontier = nxt
        if estimate_bytes(len(coords), len(identity), degree) > limit:
            _check_budget(len(coords), len(identity), degree, f"{family} ball of radius {radius} (at least)")
    edges = []
    positive = gens[::2]
    for i, g in enumerate(coords):
        for s in positive:
            j = index.get(mul(g, s))
            if j is not None:
                edges.append((i, j))
    return coords, edges


def lattice_ball_size(d: int, L: int) -> int:
    """``|{x in Z^d : |x|_1 <= L}|``."""
    return sum(2**i * comb(d, i) * comb(L, i) for i in range(min(d, L) + 1))


def build_lattice(d: int, L: int) -> FiniteRegion:
    """L1 ball of radius ``L`` in the hypercubic lattice ℤ^d, base at the origin."""
    if d < 1 or L < 0:
        raise ConfigError(f"need d >= 1 and L >= 0, got d={d}, L={L}")
    _check_budget(lattice_ball_size(d, L), d, 2 * d, f"Z^{d} ball of radius {L}")
    gens = []
    for i in range(d):
        for sgn in (1, -1):
            gens.append(tuple(sgn if j == i else 0 for j in range(d)))

    def add(a, b):
        return tuple(x + y for x, y in zip(a, b))

    coords, edges = _cayley_ball(L, gens, add, (0,) * d, ZD, d, 2 * d)
    return _assemble(coords, edges, ZD, d, L)


def heisenberg_mul(g: tuple, h: tuple) -> tuple:
    """(a,b,c)(a',b',c') = (a+a', b+b', c+c'+ab') in H3(Z)."""
    a, b, c = g
    a2, b2, c2 = h
    return (a + a2, b + b2, c + c2 + a * b2)


HEIS_GENS = [(1, 0, 0), (-1, 0, 0), (0, 1, 0), (0, -1, 0)]  # X, X^-1, Y, Y^-1


def build_heisenberg(L: int) -> FiniteRegion:
    """Word-metric ball of radius ``L`` in H3(ℤ) with generators X, Y."""
    if L < 0:
        raise ConfigError(f"need L >= 0, got {L}")
    coords, edges = _cayley_ball(L, HEIS_GENS, heisenberg_mul, (0, 0, 0), HEISENBERG, 3, 4)
    return _assemble(coords, edges, HEISENBERG, 3, L)


def build_box(shape: tuple) -> FiniteRegion:
    """Rectangular grid ``shape[0] x shape[1] x ...`` with base at the corner.

    Not transitive; used for tiny exact checks (flood fill, path enumeration,
    Russo enumeration). ``radius`` is the base's eccentricity.
    """
    shape = tuple(int(s) for s in shape)
    if not shape or min(shape) < 1:
        raise ConfigError(f"bad box shape {shape}")
    d = len(shape)
    gens = []
    for i in range(d):
        for sgn in (1, -1):
            gens.append(tuple(sgn if j == i else 0 for j in range(d)))
    index = {(0,) * d: 0}
    coords = [(0,) * d]
    head = 0
    while head < len(coords):
        g = coords[head]
        head += 1
        for s in gens:
            h = tuple(x + y for x, y in zip(g, s))
            if all(0 <= h[i] < shape[i] for i in range(d)) and h not in index:
                index[h] = len(coords)
                coords.append(h)
    edges = []
    for i, g in enumerate(coords):
        for s in gens[::2]:
            j = index.get(tuple(x + y for x, y in zip(g, s)))
            if j is not None:
                edges.append((i, j))
    region = _assemble(coords, edges, BOX, d, sum(s - 1 for s in shape))
    region.base_dist = region.distances(0)
    return region


def build_region(family: str, L: int, dim: int = 2) -> FiniteRegion:
    if family == ZD:
        return build_lattice(dim, L)
    if family == HEISENBERG:
        return build_heisenberg(L)
    raise ConfigError(f"unknown family {family!r} (expected 'zd' or 'heisenberg')")


# --- text export -------------------------------------------------------------


def write_region(region: FiniteRegion, fh: TextIO) -> None:
    fh.write("# perc-chem region\n")
    fh.write(f"family {region.family}\n")
    fh.write(f"dim {region.dim}\n")
    fh.write(f"L {region.radius}\n")
    fh.write(f"base {region.base}\n")
    fh.write(f"vertices {region.n_vertices}\n")
    for i, c in enumerate(region.coords.tolist()):
        fh.write(f"{i} {' '.join(map(str, c))}\n")
    fh.write(f"edges {region.n_edges}\n")
    for u, v in region.edges.tolist():
        fh.write(f"{u} {v}\n")


def read_region(fh: TextIO) -> FiniteRegion:
    lines = [ln.split() for ln in fh if ln.strip() and not ln.startswith("#")]
    it = iter(lines)
    meta = {}
    for parts in it:
        meta[parts[0]] = parts[1]
        if parts[0] == "vertices":
            break
    n = int(meta["vertices"])
    coords = [[int(x) for x in next(it)[1:]] for _ in range(n)]
    m = int(next(it)[1])
    edges = [[int(x) for x in next(it)] for _ in range(m)]
    region = _assemble(coords, edges, meta["family"], int(meta["dim"]), int(meta["L"]))
    if meta["family"] == BOX:
        region.base_dist = region.distances(0)
    return region


def require_interior(region: FiniteRegion, v: int, margin: int, what: str = "ball") -> None:
    if not region.within(v, margin):
        raise GeometryError(
            f"{what} B({v}, {margin}) leaves the region: d(base, v) = {int(region.base_dist[v])}, "
            f"L = {region.radius}; need L >= {int(region.base_dist[v]) + margin}"
        )
