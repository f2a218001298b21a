"""Coarse-graining at scale R: separated nets, Voronoi tiles, the coarse graph,
good-block events and the forbidden set of closed coarse clusters.

All radii ``R/k`` are floor-divided. Coarse vertices are referred to by their
index in the net (``0 .. len(net) - 1``); ``net[i]`` is the centre vertex.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from fractions import Fraction
import math
import warnings
from typing import Optional

import numpy as np

from . import kernels, rng
from .errors import ConfigError, GeometryError
from .graph import FiniteRegion, Graph, lattice_ball_size, require_interior, ZD
from .percolation import PercSample

UNEVALUATED, UNDEFINED, CLOSED, OPEN = -2, -1, 0, 1
PRECLUSTER_TAG = 0x5157


def build_net(region: Graph, r: int) -> np.ndarray:
    """Greedy maximal r-separated set, scanning vertices in id order."""
    if r < 1:
        raise ConfigError(f"separation must be >= 1, got {r}")
    blocked = np.zeros(region.n_vertices, dtype=bool)
    net = []
    for v in range(region.n_vertices):
        if blocked[v]:
            continue
        net.append(v)
        if r > 1:
            _, dist = kernels.bfs(region.indptr, region.indices, v, r - 1)
            blocked |= dist >= 0
        else:
            blocked[v] = True
    return np.asarray(net, dtype=np.int32)


def voronoi_assign(region: Graph, net: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Nearest-centre map with ties to the earliest centre in net order.

    Returns ``(tile_of, dist)`` where ``tile_of[x]`` is a net index. Labels are
    propagated layer by layer as the minimum over BFS predecessors, which
    equals the minimum over all nearest centres and makes every tile
    star-shaped about its centre.
    """
    if len(net) == 0:
        raise ConfigError("empty net")
    n = region.n_vertices
    tile = np.full(n, -1, dtype=np.int64)
    dist = np.full(n, -1, dtype=np.int64)
    tile[net] = np.arange(len(net))
    dist[net] = 0
    ip = region.indptr.tolist()
    ix = region.indices.tolist()
    tl = tile.tolist()
    dl = dist.tolist()
    frontier = [int(v) for v in net]
    k = 0
    while frontier:
        k += 1
        nxt = []
        for u in frontier:
            lu = tl[u]
            for j in range(ip[u], ip[u + 1]):
                w = ix[j]
                if dl[w] < 0:
                    dl[w] = k
                    tl[w] = lu
                    nxt.append(w)
                elif dl[w] == k and lu < tl[w]:
                    tl[w] = lu
        frontier = nxt
    return np.asarray(tl, dtype=np.int32), np.asarray(dl, dtype=np.int32)


@dataclass(eq=False)
class CoarseGraph:
    region: FiniteRegion
    R: int
    net: np.ndarray
    tile_of: np.ndarray
    tile_dist: np.ndarray
    graph: Graph
    _delta_nbrs: dict = field(default_factory=dict, repr=False)
    _tiles: list = field(default=None, repr=False)

    @property
    def separation(self) -> int:
        return self.R // 30

    @property
    def n_sites(self) -> int:
        return len(self.net)

    @property
    def max_degree(self) -> int:
        return int(self.graph.degrees().max()) if self.n_sites else 0

    def site_of(self, x: int) -> int:
        """``rho-hat``: the coarse vertex whose tile contains ``x``."""
        return int(self.tile_of[x])

    def tile(self, i: int) -> np.ndarray:
        return self.tiles()[i]

    def tiles(self) -> list[np.ndarray]:
        if self._tiles is None:
            order = np.argsort(self.tile_of, kind="stable")
            cuts = np.searchsorted(self.tile_of[order], np.arange(1, self.n_sites))
            self._tiles = np.split(order, cuts)
        return self._tiles

    def coarse_distance(self, i: int, j: int) -> int:
        return self.graph.distance(int(i), int(j))

    def site_interior(self, i: int, margin: Optional[int] = None) -> bool:
        return self.region.within(int(self.net[i]), self.R if margin is None else margin)

    def delta_neighbors(self, i: int, delta: int) -> np.ndarray:
        key = (int(i), int(delta))
        hit = self._delta_nbrs.get(key)
        if hit is None:
            hit = np.flatnonzero(self.graph.distances(int(i), int(delta)) >= 0)
            self._delta_nbrs[key] = hit
        return hit

    def coarse_geodesic(self, i: int, j: int) -> list[int]:
        """BFS-tree path from ``i`` to ``j``; each step back picks the smallest-id parent."""
        dist = self.graph.distances(int(i))
        if dist[j] < 0:
            raise GeometryError(f"coarse sites {i} and {j} are disconnected")
        path = [int(j)]
        while path[-1] != i:
            w = path[-1]
            nb = self.graph.neighbors(w)
            path.append(int(nb[dist[nb] == dist[w] - 1].min()))
        return path[::-1]

    def image_of_path(self, path: list[int]) -> list[int]:
        """``rho-hat`` of a vertex path with consecutive repeats collapsed."""
        out = []
        for x in path:
            s = int(self.tile_of[x])
            if not out or out[-1] != s:
                out.append(s)
        return out


def coarse_graph(region: FiniteRegion, R: int) -> CoarseGraph:
    if R < 60:
        raise ConfigError(f"scale R must be >= 60 so that R//60 - 1 >= 0, got {R}")
    net = build_net(region, R // 30)
    tile_of, tile_dist = voronoi_assign(region, net)
    t = tile_of[region.edges]
    cross = t[:, 0] != t[:, 1]
    pairs = np.unique(np.sort(t[cross], axis=1), axis=0) if cross.any() else np.zeros((0, 2), dtype=np.int32)
    return CoarseGraph(region, int(R), net, tile_of, tile_dist, Graph.from_edges(len(net), pairs))


# --- geometric certificates ---------------------------------------------------


def family_ball_size(region: FiniteRegion, r: int) -> int:
    """``|B(o, r)|`` in the infinite graph."""
    if r < 0:
        return 0
    if region.family == ZD:
        return lattice_ball_size(region.dim, r)
    if r > region.radius:
        raise GeometryError(f"ball of radius {r} is larger than the region (L = {region.radius})")
    return int(np.count_nonzero((region.base_dist >= 0) & (region.base_dist <= r)))


def degree_bound(region: FiniteRegion, R: int) -> Fraction:
    """``|B(o, R/10)| / |B(o, R/60 - 1)|``, bounding ``deg + 1`` of every coarse vertex."""
    return Fraction(family_ball_size(region, R // 10), family_ball_size(region, R // 60 - 1))


def sandwich_violations(coarse: CoarseGraph) -> int:
    """Interior centres with ``B(v, R/60 - 1) ⊄ tile`` or ``tile ⊄ B(v, R/30)``."""
    region = coarse.region
    inner, outer = coarse.R // 60 - 1, coarse.R // 30
    bad = 0
    for i, v in enumerate(coarse.net.tolist()):
        if not region.within(v, outer):
            continue
        _, dist = kernels.bfs(region.indptr, region.indices, v, outer)
        members = coarse.tile(i)
        inner_ball = np.flatnonzero((dist >= 0) & (dist <= inner))
        if np.any(coarse.tile_of[inner_ball] != i) or np.any(dist[members] < 0):
            bad += 1
    return bad


def star_violations(coarse: CoarseGraph) -> int:
    """Vertices with a geodesic predecessor (toward their centre) outside their tile."""
    region = coarse.region
    bad = 0
    ip, ix = region.indptr, region.indices
    for i, v in enumerate(coarse.net.tolist()):
        members = coarse.tile(i)
        radius = int(coarse.tile_dist[members].max())
        _, dist = kernels.bfs(ip, ix, v, radius)
        for x in members.tolist():
            dx = dist[x]
            nb = ix[ip[x] : ip[x + 1]]
            preds = nb[dist[nb] == dx - 1]
            if dx > 0 and np.any(coarse.tile_of[preds] != i):
                bad += 1
    return bad


def coarse_contraction_bound(coarse: CoarseGraph, n_pairs: int = 200, seed: int = 0) -> Fraction:
    """Largest sampled ``d_coarse(v, w) * R / d_G(v, w)`` over interior centre pairs."""
    region = coarse.region
    interior = [i for i in range(coarse.n_sites) if coarse.site_interior(i)]
    if len(interior) < 2:
        raise GeometryError("fewer than two interior coarse sites; enlarge the region (L >= 2R)")
    gen = np.random.default_rng(seed)
    best = Fraction(0)
    for _ in range(n_pairs):
        i, j = gen.choice(len(interior), size=2, replace=False)
        a, b = interior[i], interior[j]
        dg = region.distance(int(coarse.net[a]), int(coarse.net[b]))
        best = max(best, Fraction(coarse.coarse_distance(a, b) * coarse.R, dg))
    return best


def default_k_prime(coarse: CoarseGraph, n_pairs: int = 200, seed: int = 0) -> int:
    """``3 * ceil(C)`` with ``C`` the sampled contraction constant."""
    return 3 * math.ceil(coarse_contraction_bound(coarse, n_pairs, seed))


# --- good-block events -------------------------------------------------------


@dataclass
class BallProfile:
    verts: np.ndarray
    dist: np.ndarray
    comp: np.ndarray


def ball_profile(sample: PercSample, v: int, R: int, deleted: int = -1) -> BallProfile:
    require_interior(sample.region, v, R)
    g = sample.region
    verts, dist, comp = kernels.ball_components(g.indptr, g.indices, g.adj_edge, sample.open, int(v), int(R), int(deleted))
    return BallProfile(verts, dist, comp)


def _comps_touching(prof: BallProfile, near: np.ndarray, far: np.ndarray) -> np.ndarray:
    return np.intersect1d(np.unique(prof.comp[near]), np.unique(prof.comp[far]))


def uniqueness_event(sample: PercSample, v: int, R: int, deleted: Optional[int] = None) -> bool:
    """The good-block event at centre ``v`` and scale ``R``.

    Without ``deleted``: ``B(v, R/10)`` is joined to ``∂B(v, R)`` inside
    ``B(v, R)``, and at most one open component of ``B(v, R)`` meets both
    ``B(v, R/5)`` and ``∂B(v, R/2)``. With ``deleted`` only the uniqueness
    clause is checked, with that edge forced closed.
    """
    prof = ball_profile(sample, v, R, -1 if deleted is None else int(deleted))
    d = prof.dist
    unique = len(_comps_touching(prof, d <= R // 5, d == R // 2)) <= 1
    if deleted is not None:
        return unique
    crossing = len(_comps_touching(prof, d <= R // 10, d == R)) > 0
    return crossing and unique


def giant_near(sample: PercSample, v: int, R: int) -> Optional[np.ndarray]:
    """Vertices of the unique component meeting ``B(v, R/5)`` and ``∂B(v, R/2)``, if any."""
    prof = ball_profile(sample, v, R)
    comps = _comps_touching(prof, prof.dist <= R // 5, prof.dist == R // 2)
    if len(comps) != 1:
        return None
    return np.sort(prof.verts[prof.comp == comps[0]])


@dataclass(eq=False)
class MacroSiteConfig:
    """Open/closed state per coarse site, evaluated on demand and cached."""

    coarse: CoarseGraph
    sample: PercSample
    state: np.ndarray

    @property
    def p(self) -> float:
        return self.sample.p

    @property
    def seed(self) -> int:
        return self.sample.seed

    def status(self, i: int) -> int:
        s = self.state[i]
        if s == UNEVALUATED:
            v = int(self.coarse.net[i])
            if not self.sample.region.within(v, self.coarse.R):
                s = UNDEFINED
            else:
                s = OPEN if uniqueness_event(self.sample, v, self.coarse.R) else CLOSED
            self.state[i] = s
        return int(s)

    def is_open(self, i: int) -> bool:
        return self.status(i) == OPEN

    def is_closed(self, i: int) -> bool:
        return self.status(i) == CLOSED

    def evaluate_all(self) -> np.ndarray:
        for i in range(len(self.state)):
            self.status(i)
        return self.state

    def defined(self) -> np.ndarray:
        return np.flatnonzero(self.evaluate_all() != UNDEFINED)


def macro_site_config(sample: PercSample, coarse: CoarseGraph, lazy: bool = False) -> MacroSiteConfig:
    msc = MacroSiteConfig(coarse, sample, np.full(coarse.n_sites, UNEVALUATED, dtype=np.int8))
    if not lazy:
        msc.evaluate_all()
    return msc


# --- forbidden set -----------------------------------------------------------


@dataclass
class ForbiddenSet:
    sites: np.ndarray  # F, sorted coarse indices
    anchors: np.ndarray  # I_{x,y}
    geodesic: list
    delta: int
    k_prime: int

    def __contains__(self, i: int) -> bool:
        idx = np.searchsorted(self.sites, i)
        return idx < len(self.sites) and self.sites[idx] == i

    def __len__(self) -> int:
        return len(self.sites)


def closed_delta_clusters(msc: MacroSiteConfig, seeds, delta: int) -> np.ndarray:
    """Union of the closed Δ-clusters of the given sites (open seeds contribute nothing)."""
    seen = set()
    queue = deque()
    for s in seeds:
        s = int(s)
        if s not in seen and msc.is_closed(s):
            seen.add(s)
            queue.append(s)
    while queue:
        u = queue.popleft()
        for w in msc.coarse.delta_neighbors(u, delta).tolist():
            if w not in seen and msc.is_closed(w):
                seen.add(w)
                queue.append(w)
    return np.asarray(sorted(seen), dtype=np.int64)


def anchor_set(coarse: CoarseGraph, x: int, y: int, k_prime: int) -> tuple[np.ndarray, list]:
    cx, cy = coarse.site_of(x), coarse.site_of(y)
    geo = coarse.coarse_geodesic(cx, cy)
    mask = (coarse.graph.distances(cx, k_prime) >= 0) | (coarse.graph.distances(cy, k_prime) >= 0)
    mask[geo] = True
    return np.flatnonzero(mask), geo


def forbidden_set(msc: MacroSiteConfig, x: int, y: int, delta: int, k_prime: int) -> ForbiddenSet:
    if delta < 1 or k_prime < 1:
        raise ConfigError(f"need delta >= 1 and K' >= 1, got {delta}, {k_prime}")
    anchors, geo = anchor_set(msc.coarse, x, y, k_prime)
    sites = closed_delta_clusters(msc, anchors, delta)
    return ForbiddenSet(sites, anchors, geo, delta, k_prime)


# --- preclusters -------------------------------------------------------------


def precluster_threshold(max_degree: int, delta: int) -> float:
    """``1 - 1/(2 D^Δ)``: above this retention the precluster tail is summable."""
    return 1.0 - 1.0 / (2.0 * float(max_degree) ** delta)


def precluster_sample(coarse: CoarseGraph, v: int, delta: int, rho: float, seed: int) -> int:
    """Size of the closed Δ-cluster of ``v`` under i.i.d. site percolation.

    Sites are open with probability ``rho``; states come from ``U(seed', site)``
    so each seed is an independent draw.
    """
    if not 0.0 <= rho <= 1.0:
        raise ConfigError(f"retention must lie in [0, 1], got {rho}")
    if rho <= precluster_threshold(coarse.max_degree, delta):
        warnings.warn(
            f"rho={rho} is at or below 1 - 1/(2 D^Δ) = {precluster_threshold(coarse.max_degree, delta):.6f}; "
            "the exponential tail guarantee does not apply",
            RuntimeWarning,
            stacklevel=2,
        )
    key = rng.derive(seed, PRECLUSTER_TAG)
    state: dict[int, bool] = {}

    def closed(i: int) -> bool:
        c = state.get(i)
        if c is None:
            c = rng.uniform(key, i) >= rho
            state[i] = c
        return c

    if not closed(int(v)):
        return 0
    seen = {int(v)}
    queue = deque([int(v)])
    while queue:
        u = queue.popleft()
        for w in coarse.delta_neighbors(u, delta).tolist():
            if w not in seen and closed(w):
                seen.add(w)
                queue.append(w)
    return len(seen)


def require_sites_interior(coarse: CoarseGraph, sites) -> None:
    for i in sites:
        if not coarse.site_interior(int(i)):
            v = int(coarse.net[int(i)])
            raise GeometryError(
                f"coarse site {i} (centre {v}) has its R-ball outside the region; "
                f"need L >= {int(coarse.region.base_dist[v]) + coarse.R}"
            )


__all__ = [
    "CoarseGraph",
    "ForbiddenSet",
    "MacroSiteConfig",
    "build_net",
    "voronoi_assign",
    "coarse_graph",
    "coarse_contraction_bound",
    "default_k_prime",
    "uniqueness_event",
    "giant_near",
    "macro_site_config",
    "forbidden_set",
    "precluster_sample",
    "precluster_threshold",
    "sandwich_violations",
    "star_violations",
    "degree_bound",
    "family_ball_size",
]
